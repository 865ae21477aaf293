/*
 * Copyright 2026 The marvis Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "marvis/eval.hpp"
#include "marvis/vlm.hpp"

namespace marvis {

// Everything one CLI invocation needs. Relative paths in a config file are
// resolved against the directory holding that file.
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path out = "marvis_out";
  bool mock = false;
  std::uint64_t seed = 0;
  bool artifacts = true;  // per-query PNG/prompt/response files under out/queries
  PipelineConfig pipeline;
  EndpointConfig endpoint;

  // Throws kValidation.
  void validate() const;
  // Pipeline settings with the run seed applied.
  PipelineConfig effective_pipeline() const;
  std::string to_json() const;
};

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace marvis
