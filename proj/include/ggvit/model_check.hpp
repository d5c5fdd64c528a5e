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

#include <cstdint>
#include <string>
#include <vector>

#include "ggvit/gradcheck.hpp"
#include "ggvit/model.hpp"

namespace ggvit {

struct ModelGradcheckOptions {
    std::string preset = "tiny";
    std::uint64_t seed = 0;
    std::size_t batch = 2;
    FdOptions fd{1e-6, 1e-4, 1, 4.0};
};

struct LossGradcheck {
    std::string loss;  // "l_vit", "l_lmc", "l_fusion" or "total"
    FdReport report;
    double seconds = 0.0;
};

// Random images and quality scalars, full model (guidance on, IQB and FAB
// on), 64-bit. Each named loss is checked separately against central
// differences over every parameter tensor.
std::vector<LossGradcheck> gradcheck_model(const ModelGradcheckOptions& opts);

}  // namespace ggvit
