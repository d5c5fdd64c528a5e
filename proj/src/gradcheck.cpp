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

#include "ggvit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ggvit {

double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

double fd_resolution(double fp, double fm, double step, double ulps) {
    const double f = std::max(std::abs(fp), std::abs(fm));
    const double ulp = std::nextafter(f, std::numeric_limits<double>::infinity()) - f;
    return ulps * ulp / (2.0 * step);
}

const FdParamResult& FdReport::worst() const {
    if (params.empty()) throw Error("empty finite-difference report");
    return *std::max_element(params.begin(), params.end(), [](const auto& x, const auto& y) {
        return x.max_rel_error < y.max_rel_error;
    });
}

namespace {

double evaluate(const LossFn& loss, const ParamStore<double>& params) {
    Graph<double> g(false);
    Bindings<double> b(g, params);
    return loss(b).value().item();
}

}  // namespace

FdReport finite_diff_check(const LossFn& loss, ParamStore<double>& params, const FdOptions& opts) {
    if (!(opts.step > 0)) throw Error("finite_diff_check: step must be positive");

    std::vector<Tensor<double>> analytic;
    {
        Graph<double> g;
        Bindings<double> b(g, params);
        Var<double> root = loss(b);
        g.backward(root);
        analytic = b.gradients();
    }

    FdReport report;
    report.tol = opts.tol;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor<double>& w = params.at(p);
        const Tensor<double>& ga = analytic[p];

        std::vector<std::size_t> coords(w.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (opts.coords_per_param > 0 && opts.coords_per_param < coords.size()) {
            std::stable_sort(coords.begin(), coords.end(), [&](std::size_t x, std::size_t y) {
                return std::abs(ga[x]) > std::abs(ga[y]);
            });
            coords.resize(opts.coords_per_param);
        }

        FdParamResult r;
        r.name = params.name(p);
        for (std::size_t c : coords) {
            const double saved = w[c];
            w[c] = saved + opts.step;
            const double fp = evaluate(loss, params);
            w[c] = saved - opts.step;
            const double fm = evaluate(loss, params);
            w[c] = saved;
            report.evaluations += 2;

            const double numeric = (fp - fm) / (2.0 * opts.step);
            double floor = 1e-8;
            if (opts.noise_ulps > 0) {
                const double resolution = fd_resolution(fp, fm, opts.step, opts.noise_ulps);
                floor = std::max(floor, resolution / opts.tol);
                if (std::max(std::abs(ga[c]), std::abs(numeric)) < floor) ++r.below_floor;
            }
            const double err = relative_error(ga[c], numeric, floor);
            if (err > r.max_rel_error || r.checked == 0) {
                r.max_rel_error = err;
                r.worst_index = c;
                r.analytic = ga[c];
                r.numeric = numeric;
            }
            ++r.checked;
        }
        report.max_rel_error = std::max(report.max_rel_error, r.max_rel_error);
        report.params.push_back(std::move(r));
    }
    return report;
}

}  // namespace ggvit
