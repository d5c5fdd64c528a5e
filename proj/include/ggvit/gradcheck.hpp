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

#include <functional>
#include <string>
#include <vector>

#include "ggvit/params.hpp"

namespace ggvit {

// |a - b| / max(|a|, |b|, floor)
double relative_error(double a, double b, double floor = 1e-8);

// Smallest derivative a central difference with this step can resolve:
// `ulps` units in the last place of max(|f+|, |f-|), divided by 2h.
double fd_resolution(double fp, double fm, double step, double ulps);

struct FdOptions {
    double step = 1e-6;
    double tol = 1e-4;
    // 0 checks every coordinate. Otherwise the k coordinates with the largest
    // analytic |gradient| in each tensor are checked; coordinates whose true
    // gradient sits below the central-difference noise floor say nothing
    // about the tape.
    std::size_t coords_per_param = 0;
    // When positive, the relative-error denominator is floored at
    // fd_resolution(noise_ulps) / tol, so a coordinate fails only when the
    // tape and the difference quotient disagree by more than rounding in the
    // loss value can explain.
    double noise_ulps = 0.0;
};

struct FdParamResult {
    std::string name;
    std::size_t checked = 0;
    std::size_t below_floor = 0;  // probes whose gradient sits under the resolution floor
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

struct FdReport {
    std::vector<FdParamResult> params;
    double max_rel_error = 0.0;
    double tol = 0.0;
    std::size_t evaluations = 0;

    bool pass() const { return max_rel_error < tol; }
    const FdParamResult& worst() const;
};

// Builds a scalar loss on the given bindings. Must be deterministic.
using LossFn = std::function<Var<double>(Bindings<double>&)>;

// Compares tape gradients of `loss` against central differences
// (f(w+h) - f(w-h)) / 2h, one coordinate at a time. Parameters are restored
// bit-exactly after each probe.
FdReport finite_diff_check(const LossFn& loss, ParamStore<double>& params, const FdOptions& opts = {});

}  // namespace ggvit
