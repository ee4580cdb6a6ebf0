/* Copyright 2026 The TCC Segmentation Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef TCC_CONFIG_HPP_
#define TCC_CONFIG_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "tcc/training.hpp"

namespace tcc {

// Run configuration as `key = value` lines grouped under [students],
// [losses], [data] and [training]. `#` starts a comment. Unknown sections or
// keys raise ConfigError naming them.
TrainConfig ParseConfig(const std::string& text);
TrainConfig LoadConfig(const std::filesystem::path& path);

// Every key with its effective value; parsing it back yields the same config.
std::string ResolvedConfigText(const TrainConfig& config);

// "section.key=value" overrides, applied after the file.
void ApplyOverride(TrainConfig& config, const std::string& assignment);
void SetConfigValue(TrainConfig& config, const std::string& section,
                    const std::string& key, const std::string& value);

// All keys as "section.key", for help output.
std::vector<std::string> ConfigKeys();

}  // namespace tcc

#endif  // TCC_CONFIG_HPP_
