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
#ifndef TCC_IMAGE_IO_HPP_
#define TCC_IMAGE_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

namespace tcc {

// 8-bit interleaved pixels, row-major.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;
};

void WritePng(const std::filesystem::path& path, const Image8& image);
Image8 ReadPng(const std::filesystem::path& path);

}  // namespace tcc

#endif  // TCC_IMAGE_IO_HPP_
