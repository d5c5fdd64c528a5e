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

// Regenerates the golden tensors in tests/golden. The files are written only
// after the model gradients of the fixture pass the finite-difference check.
//
//   ggvit_golden_gen <golden-dir>

#include <filesystem>
#include <iostream>

#include "ggvit/gradcheck.hpp"
#include "unit/golden_fixture.hpp"

int main(int argc, char** argv) {
    using namespace ggvit;
    if (argc != 2) {
        std::cerr << "usage: ggvit_golden_gen <golden-dir>\n";
        return 2;
    }
    try {
        test::GoldenFixture fx;
        const ModelInput<double> in{&fx.streams, test::kGoldenQuality, 1};
        const std::vector<ModelInput<double>> batch{in};
        const LossFn loss = [&](Bindings<double>& b) { return batch_loss<double>(b, fx.cfg, batch).loss; };
        const FdReport r = finite_diff_check(loss, fx.params, {1e-6, 1e-4, 2, 8.0});
        std::cout << "gradcheck max rel error " << r.max_rel_error << "\n";
        if (!r.pass()) {
            std::cerr << "gradient check failed at " << r.worst().name << "; goldens not written\n";
            return 5;
        }
        std::filesystem::create_directories(argv[1]);
        for (const auto& [name, t] : fx.outputs()) {
            const auto path = std::filesystem::path(argv[1]) / (name + ".ggt");
            save_ggt1(path.string(), t);
            std::cout << "wrote " << path.string() << " " << shape_str(t.shape()) << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
