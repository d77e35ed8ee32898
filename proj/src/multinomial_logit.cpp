// Copyright 2026 adherelm contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adherelm/multinomial_logit.hpp"

#include <cmath>
#include <stdexcept>

namespace adherelm {

namespace {

// Category index handled by theta row r under reference `ref`.
inline int row_category(int r, int ref) { return r < ref ? r : r + 1; }

}  // namespace

Eigen::VectorXd multinomial_logit_probs(const Eigen::MatrixXd& theta, int ref,
                                        const Eigen::VectorXd& x_row) {
  const int k = static_cast<int>(theta.rows()) + 1;
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(k);
  for (int r = 0; r < theta.rows(); ++r) eta[row_category(r, ref)] = theta.row(r).dot(x_row);
  const double m = eta.maxCoeff();
  Eigen::VectorXd probs = (eta.array() - m).exp();
  probs /= probs.sum();
  return probs;
}

double multinomial_logit_loglik(const MultinomialLogitProblem& problem,
                                const Eigen::MatrixXd& theta) {
  double loglik = 0.0;
  for (Eigen::Index i = 0; i < problem.x.rows(); ++i) {
    const Eigen::VectorXd probs = multinomial_logit_probs(theta, problem.ref, problem.x.row(i));
    for (Eigen::Index c = 0; c < problem.weights.cols(); ++c) {
      const double w = problem.weights(i, c);
      if (w > 0.0) loglik += w * std::log(probs[c]);
    }
  }
  return loglik;
}

MultinomialLogitFit fit_multinomial_logit(const MultinomialLogitProblem& problem,
                                          Eigen::MatrixXd theta, int max_iter, double tol) {
  const int k = static_cast<int>(problem.weights.cols());
  const int p = static_cast<int>(problem.x.cols());
  const int n_free = k - 1;
  if (theta.rows() != n_free || theta.cols() != p)
    throw std::invalid_argument("fit_multinomial_logit: theta dimensions mismatch");

  MultinomialLogitFit fit;
  fit.theta = std::move(theta);
  fit.loglik = multinomial_logit_loglik(problem, fit.theta);
  if (n_free == 0) {
    fit.converged = true;
    return fit;
  }

  const int dim = n_free * p;
  Eigen::VectorXd grad(dim);
  Eigen::MatrixXd hess(dim, dim);

  for (int iter = 0; iter < max_iter; ++iter) {
    grad.setZero();
    hess.setZero();
    for (Eigen::Index i = 0; i < problem.x.rows(); ++i) {
      const Eigen::VectorXd x = problem.x.row(i);
      const Eigen::VectorXd probs = multinomial_logit_probs(fit.theta, problem.ref, x);
      const double mass = problem.weights.row(i).sum();
      if (mass <= 0.0) continue;
      for (int r = 0; r < n_free; ++r) {
        const int c = row_category(r, problem.ref);
        const double resid = problem.weights(i, c) - mass * probs[c];
        grad.segment(r * p, p) += resid * x;
        for (int s = 0; s < n_free; ++s) {
          const int d = row_category(s, problem.ref);
          const double w2 = mass * probs[c] * ((c == d ? 1.0 : 0.0) - probs[d]);
          hess.block(r * p, s * p, p, p) += w2 * (x * x.transpose());
        }
      }
    }

    if (grad.lpNorm<Eigen::Infinity>() < 1e-9) {
      fit.converged = true;
      break;
    }

    // hess is the negative Hessian of the objective (PSD); ridge it until
    // the solve is usable.
    Eigen::VectorXd direction;
    double ridge = 0.0;
    for (;;) {
      Eigen::MatrixXd h = hess;
      if (ridge > 0.0) h.diagonal().array() += ridge;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      if (ldlt.info() == Eigen::Success) {
        direction = ldlt.solve(grad);
        if (direction.allFinite() && grad.dot(direction) > 0.0) break;
      }
      ridge = ridge == 0.0 ? 1e-8 : ridge * 10.0;
      if (ridge > 1e6) {
        direction = grad;  // fall back to plain gradient ascent
        break;
      }
    }

    // Step halving: accept the first step that does not decrease the
    // objective; give up on this direction after 40 halvings.
    double step = 1.0;
    bool accepted = false;
    Eigen::MatrixXd candidate(n_free, p);
    for (int h = 0; h < 40; ++h, step *= 0.5) {
      candidate = fit.theta;
      for (int r = 0; r < n_free; ++r)
        candidate.row(r) += step * direction.segment(r * p, p).transpose();
      const double cand_loglik = multinomial_logit_loglik(problem, candidate);
      if (std::isfinite(cand_loglik) && cand_loglik >= fit.loglik) {
        const double gain = cand_loglik - fit.loglik;
        fit.theta = candidate;
        fit.loglik = cand_loglik;
        fit.n_iterations = iter + 1;
        accepted = true;
        if (gain < tol * (1.0 + std::abs(fit.loglik))) {
          fit.converged = true;
          iter = max_iter;  // done
        }
        break;
      }
    }
    if (!accepted) {
      // No ascent step found: we are at (numerically) a stationary point.
      fit.converged = true;
      break;
    }
  }
  return fit;
}

}  // namespace adherelm
