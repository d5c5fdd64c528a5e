// Copyright 2026 The GGViT Authors
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

#include "ggvit/tensor.hpp"

namespace ggvit {

// 8-bit RGB PNG <-> [3, H, W] tensor in [0, 1]. Grayscale and RGBA inputs
// are converted to RGB on read. Writing rounds to the nearest 8-bit level
// after clamping.
Tensor<double> read_png(const std::string& path);
void write_png(const std::string& path, const Tensor<double>& image);

// Round-trip through 8-bit storage without touching the disk.
Tensor<double> quantize_8bit(const Tensor<double>& image);

}  // namespace ggvit
