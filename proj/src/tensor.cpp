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

#include "ggvit/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ggvit {

static_assert(std::endian::native == std::endian::little,
              "GGT1 payload I/O assumes a little-endian host");

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have rank >= 1");
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
    }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
    }
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
        throw ShapeError("index rank " + std::to_string(idx.size()) + " vs tensor shape " +
                         shape_str(shape_));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
        if (i >= shape_[axis]) throw ShapeError("index out of range for shape " + shape_str(shape_));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::size_t> idx) {
    return data_[offset(idx)];
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<std::size_t> idx) const {
    return data_[offset(idx)];
}

template <typename T>
T Tensor<T>::item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
    return data_[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

template <typename T>
void Tensor<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

namespace {

constexpr char kMagic[4] = {'G', 'G', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("GGT1: truncated dims");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

template <typename S, typename T>
Tensor<T> read_payload(std::istream& is, Shape shape) {
    std::vector<S> raw(shape_numel(shape));
    if (!is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size() * sizeof(S)))) {
        throw IoError("GGT1: truncated payload");
    }
    if constexpr (std::is_same_v<S, T>) {
        return Tensor<T>(std::move(shape), std::move(raw));
    } else {
        return Tensor<T>(std::move(shape), std::vector<T>(raw.begin(), raw.end()));
    }
}

}  // namespace

template <typename T>
void write_ggt1(std::ostream& os, const Tensor<T>& t) {
    os.write(kMagic, 4);
    const char dtype = static_cast<char>(dtype_code<T>());
    const char rank = static_cast<char>(t.rank());
    os.put(dtype);
    os.put(rank);
    for (std::size_t d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.raw()), std::streamsize(t.size() * sizeof(T)));
    if (!os) throw IoError("GGT1: write failed");
}

template <typename T>
Tensor<T> read_ggt1(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError("GGT1: bad magic");
    }
    const int dtype = is.get();
    const int rank = is.get();
    if (!is || rank <= 0) throw IoError("GGT1: bad header");
    Shape shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) d = get_u32(is);
    switch (dtype) {
        case 0:
            return read_payload<float, T>(is, std::move(shape));
        case 1:
            return read_payload<double, T>(is, std::move(shape));
        default:
            throw IoError("GGT1: unknown dtype " + std::to_string(dtype));
    }
}

template <typename T>
void save_ggt1(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    write_ggt1(os, t);
}

template <typename T>
Tensor<T> load_ggt1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    return read_ggt1<T>(is);
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    }
    return m;
}

template void write_ggt1(std::ostream&, const Tensor<float>&);
template void write_ggt1(std::ostream&, const Tensor<double>&);
template Tensor<float> read_ggt1(std::istream&);
template Tensor<double> read_ggt1(std::istream&);
template void save_ggt1(const std::string&, const Tensor<float>&);
template void save_ggt1(const std::string&, const Tensor<double>&);
template Tensor<float> load_ggt1(const std::string&);
template Tensor<double> load_ggt1(const std::string&);
template double max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

}  // namespace ggvit
