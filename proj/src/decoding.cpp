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

#include "adherelm/decoding.hpp"

#include <cmath>
#include <limits>

#include "adherelm/errors.hpp"

namespace adherelm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace

LatentPath local_decode(const Eigen::MatrixXd& posteriors) {
  LatentPath path;
  path.states.resize(posteriors.rows());
  for (Eigen::Index t = 0; t < posteriors.rows(); ++t) {
    int arg = 0;
    for (int u = 1; u < posteriors.cols(); ++u)
      if (posteriors(t, u) > posteriors(t, arg)) arg = u;
    path.states[t] = arg + 1;
  }
  return path;
}

ViterbiResult viterbi_decode(const SubjectModel& m) {
  const int T = static_cast<int>(m.emission.rows());
  const int k = static_cast<int>(m.emission.cols());

  // Backward max scores: best[t][u] = best log-score of a path suffix that
  // is in state u at occasion t (emission at t included).
  Eigen::MatrixXd best(T, k);
  for (int u = 0; u < k; ++u) best(T - 1, u) = safe_log(m.emission(T - 1, u));
  for (int t = T - 2; t >= 0; --t) {
    for (int u = 0; u < k; ++u) {
      double top = kNegInf;
      for (int v = 0; v < k; ++v) {
        const double cand = safe_log(m.trans[t](u, v)) + best(t + 1, v);
        if (cand > top) top = cand;
      }
      best(t, u) = safe_log(m.emission(t, u)) + top;
    }
  }

  // Forward greedy selection: at each step the candidates sharing the
  // maximum are exactly the optimal continuations, so scanning in ascending
  // state order with a strict comparison yields the lexicographically
  // smallest optimal path.
  ViterbiResult out;
  out.path.states.resize(T);
  int current = 0;
  double top = kNegInf;
  for (int u = 0; u < k; ++u) {
    const double cand = safe_log(m.delta[u]) + best(0, u);
    if (cand > top) {
      top = cand;
      current = u;
    }
  }
  if (top == kNegInf)
    throw ZeroLikelihoodError("viterbi_decode: no latent path has positive probability");
  out.path.states[0] = current + 1;
  for (int t = 1; t < T; ++t) {
    int next = 0;
    double step_top = kNegInf;
    for (int v = 0; v < k; ++v) {
      const double cand = safe_log(m.trans[t - 1](current, v)) + best(t, v);
      if (cand > step_top) {
        step_top = cand;
        next = v;
      }
    }
    current = next;
    out.path.states[t] = current + 1;
  }

  // Evaluate the chosen path directly so the reported log joint is exact.
  double log_joint = safe_log(m.delta[out.path.states[0] - 1]) +
                     safe_log(m.emission(0, out.path.states[0] - 1));
  for (int t = 1; t < T; ++t) {
    const int a = out.path.states[t - 1] - 1;
    const int b = out.path.states[t] - 1;
    log_joint += safe_log(m.trans[t - 1](a, b)) + safe_log(m.emission(t, b));
  }
  out.log_joint = log_joint;
  return out;
}

ViterbiResult viterbi_decode(const ModelSpec& spec, const LmmParameters& params,
                             const DataPanel& data, long subject) {
  return viterbi_decode(build_subject_model(spec, params, data, subject));
}

namespace {
const std::array<std::string, kNumProfiles> kProfileNames = {"A", "B", "C", "D", "E",
                                                             "F", "G", "H", "I"};
}

const std::string& profile_name(ProfileLabel p) {
  return kProfileNames[static_cast<int>(p)];
}

ProfileLabel parse_profile(const std::string& name) {
  for (int i = 0; i < kNumProfiles; ++i)
    if (kProfileNames[i] == name) return static_cast<ProfileLabel>(i);
  throw ValidationError("unknown profile label: '" + name + "'");
}

ProfileLabel classify_profile(const LatentPath& path) {
  if (path.states.empty()) throw ValidationError("classify_profile: empty path");
  bool non_decreasing = true;
  bool non_increasing = true;
  for (const int s : path.states)
    if (s < 1 || s > 4)
      throw ValidationError("classify_profile: states must be in 1..4");
  for (std::size_t t = 1; t < path.states.size(); ++t) {
    if (path.states[t] < path.states[t - 1]) non_decreasing = false;
    if (path.states[t] > path.states[t - 1]) non_increasing = false;
  }
  const int first = path.states.front();
  const int last = path.states.back();
  if (non_decreasing && non_increasing) {
    // Constant path at `first`.
    return static_cast<ProfileLabel>(static_cast<int>(ProfileLabel::A) + first - 1);
  }
  if (non_decreasing) return last - first == 1 ? ProfileLabel::E : ProfileLabel::F;
  if (non_increasing) return first - last == 1 ? ProfileLabel::G : ProfileLabel::H;
  return ProfileLabel::I;
}

ProfileTable profile_table(std::span<const ProfileLabel> labels, long min_count) {
  if (labels.empty()) throw ValidationError("profile_table: empty label list");
  ProfileTable table;
  table.min_count = min_count;
  table.total = static_cast<long>(labels.size());
  for (const ProfileLabel l : labels) ++table.counts[static_cast<int>(l)];
  for (int i = 0; i < kNumProfiles; ++i) table.retained[i] = table.counts[i] >= min_count;
  return table;
}

}  // namespace adherelm
