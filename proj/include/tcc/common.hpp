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
#ifndef TCC_COMMON_HPP_
#define TCC_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tcc {

// Bad user input: flags, config keys, shapes that violate a configuration.
// The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Failure while running (I/O, corrupt checkpoint, non-finite loss).
// The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Derives an independent stream seed from the run seed. All randomness in a
// run (data, init, iteration order, CutMix boxes) goes through this.
enum class SeedStream : std::uint64_t {
  kData = 1,
  kPartition = 2,
  kInit = 3,
  kLabeledOrder = 4,
  kUnlabeledOrder = 5,
  kCutMix = 6,
};

std::uint64_t DeriveSeed(std::uint64_t seed, SeedStream stream,
                         std::uint64_t index = 0);

// Shortest text that parses back to exactly `v`; "nan" for NaN.
std::string FormatDouble(double v);

}  // namespace tcc

#endif  // TCC_COMMON_HPP_
