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

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "adherelm/lmm.hpp"

namespace adherelm {

/// Decoded latent trajectory; states are reported 1-based.
struct LatentPath {
  std::vector<int> states;
};

/// Per-occasion posterior argmax. Ties break toward the lowest state index.
LatentPath local_decode(const Eigen::MatrixXd& posteriors);

struct ViterbiResult {
  LatentPath path;
  double log_joint = 0.0;  // log P(path, observations)
};

/// Most probable full latent path in log space. Among equally probable
/// paths the lexicographically smallest is returned. Throws
/// ZeroLikelihoodError when no path has positive probability.
ViterbiResult viterbi_decode(const SubjectModel& m);
ViterbiResult viterbi_decode(const ModelSpec& spec, const LmmParameters& params,
                             const DataPanel& data, long subject);

/// Nine-way taxonomy of 12-month paths over at most four latent states:
/// constant paths map to A..D by state, monotone non-constant paths map to
/// E/F (rising by 1 / by 2-3) or G/H (falling likewise) by net change, and
/// every non-monotone path is I.
enum class ProfileLabel : int { A, B, C, D, E, F, G, H, I };
inline constexpr int kNumProfiles = 9;

const std::string& profile_name(ProfileLabel p);
ProfileLabel parse_profile(const std::string& name);

/// Classifies one path; total over state values 1..4 and deterministic.
ProfileLabel classify_profile(const LatentPath& path);

struct ProfileTable {
  std::array<long, kNumProfiles> counts{};
  std::array<bool, kNumProfiles> retained{};
  long total = 0;
  long min_count = 0;
};

/// Frequency table over labels; a label is retained when its count reaches
/// min_count.
ProfileTable profile_table(std::span<const ProfileLabel> labels, long min_count = 1500);

}  // namespace adherelm
