"""Adherence panels, latent Markov models, behavioural profiles and survival
analysis for longitudinal drug-purchase data.

The heavy lifting lives in the compiled extension ``adherelm._core``; this
package re-exports its public surface.
"""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
