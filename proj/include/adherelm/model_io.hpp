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

#include <string>

#include <json.hpp>

#include "adherelm/lmm.hpp"

namespace adherelm {

// Self-describing model document, format_version 1. Layout:
//   { "format_version": 1, "spec": {...}, "parameters": {...}, "fit": {...} }

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const LmmParameters& params);
LmmParameters params_from_json(const nlohmann::json& j, const ModelSpec& spec);

nlohmann::json fit_to_json(const FitResult& fit);

std::string model_document(const FitResult& fit);

struct ModelDocument {
  ModelSpec spec;
  LmmParameters params;
};

/// Parses and validates a model document; rejects unknown format versions.
ModelDocument parse_model_document(const std::string& text);

}  // namespace adherelm
