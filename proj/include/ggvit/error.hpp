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

#include <stdexcept>
#include <string>

namespace ggvit {

class Error : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an op.
class ShapeError : public Error {
   public:
    using Error::Error;
};

// NaN/Inf produced, or an undefined normalization.
class NumericError : public Error {
   public:
    using Error::Error;
};

// Bad user input: manifests, configs, flags, checkpoints.
class ValidationError : public Error {
   public:
    using Error::Error;
};

class IoError : public Error {
   public:
    using Error::Error;
};

}  // namespace ggvit
