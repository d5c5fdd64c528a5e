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

#include "ggvit/params.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ggvit/kernels.hpp"

namespace ggvit {

template <typename T>
Tensor<T>& ParamStore<T>::add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw Error("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
    return entries_.back().second;
}

template <typename T>
bool ParamStore<T>::contains(std::string_view name) const {
    return index_.find(name) != index_.end();
}

template <typename T>
std::size_t ParamStore<T>::index_of(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter '" + std::string(name) + "'");
    return it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::get(std::string_view name) {
    return entries_[index_of(name)].second;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(std::string_view name) const {
    return entries_[index_of(name)].second;
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
}

template <typename T>
Var<T> Bindings<T>::operator[](std::string_view name) {
    const std::size_t i = store_->index_of(name);
    if (!vars_[i]) vars_[i] = graph_->param(store_->at(i));
    return *vars_[i];
}

template <typename T>
std::vector<Tensor<T>> Bindings<T>::gradients() const {
    std::vector<Tensor<T>> out;
    out.reserve(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        out.push_back(vars_[i] ? graph_->grad(*vars_[i]) : Tensor<T>(store_->at(i).shape()));
    }
    return out;
}

template <typename T>
void Sgd<T>::step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads) {
    if (grads.size() != params.size()) throw Error("sgd: gradient count does not match parameters");
    if (velocity_.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) velocity_.emplace_back(params.at(i).shape());
    }
    const auto& K = kernels::active<T>();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& w = params.at(i);
        Tensor<T>& v = velocity_[i];
        const Tensor<T>& g = grads[i];
        if (g.shape() != w.shape()) {
            throw ShapeError("sgd: gradient " + shape_str(g.shape()) + " for parameter '" + params.name(i) +
                             "' " + shape_str(w.shape()));
        }
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = T(momentum_) * v[j] + g[j] + T(wd_) * w[j];
        }
        K.axpy(w.size(), T(-lr_), v.raw(), w.raw());
    }
}

template <typename T>
void save_checkpoint(const std::string& path, const ParamStore<T>& params, const nlohmann::json& meta) {
    // Blob sizes are known up front, so offsets can be computed before the
    // index is serialized. The index length depends on the offsets, so
    // iterate until the header size is stable.
    std::vector<std::string> blobs;
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::ostringstream os;
        write_ggt1(os, params.at(i));
        blobs.push_back(std::move(os).str());
    }
    std::string index;
    std::uint64_t header = 0;
    for (int iter = 0; iter < 8; ++iter) {
        nlohmann::json j;
        j["meta"] = meta;
        j["dtype"] = dtype_code<T>() == 0 ? "f32" : "f64";
        std::uint64_t off = header;
        nlohmann::json tensors = nlohmann::json::object();
        for (std::size_t i = 0; i < params.size(); ++i) {
            tensors[params.name(i)] = off;
            off += blobs[i].size();
        }
        j["tensors"] = tensors;
        index = j.dump();
        const std::uint64_t next = 4 + index.size();
        if (next == header) break;
        header = next;
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    const std::uint32_t n = static_cast<std::uint32_t>(index.size());
    const unsigned char len[4] = {static_cast<unsigned char>(n), static_cast<unsigned char>(n >> 8),
                                  static_cast<unsigned char>(n >> 16), static_cast<unsigned char>(n >> 24)};
    os.write(reinterpret_cast<const char*>(len), 4);
    os.write(index.data(), std::streamsize(index.size()));
    for (const auto& b : blobs) os.write(b.data(), std::streamsize(b.size()));
    if (!os) throw IoError("write failed for " + path);
}

CheckpointHeader read_checkpoint_header(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path);
    unsigned char len[4];
    if (!is.read(reinterpret_cast<char*>(len), 4)) throw IoError("truncated checkpoint " + path);
    const std::uint32_t n = std::uint32_t(len[0]) | (std::uint32_t(len[1]) << 8) |
                            (std::uint32_t(len[2]) << 16) | (std::uint32_t(len[3]) << 24);
    std::string index(n, '\0');
    if (!is.read(index.data(), n)) throw IoError("truncated checkpoint index in " + path);
    CheckpointHeader h;
    try {
        const auto j = nlohmann::json::parse(index);
        h.meta = j.value("meta", nlohmann::json::object());
        for (const auto& [name, off] : j.at("tensors").items()) h.offsets[name] = off.get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad checkpoint index in " + path + ": " + e.what());
    }
    return h;
}

template <typename T>
ParamStore<T> load_checkpoint(const std::string& path, nlohmann::json* meta) {
    CheckpointHeader h = read_checkpoint_header(path);
    std::vector<std::pair<std::uint64_t, std::string>> order;
    for (const auto& [name, off] : h.offsets) order.emplace_back(off, name);
    std::sort(order.begin(), order.end());
    std::ifstream is(path, std::ios::binary);
    ParamStore<T> out;
    for (const auto& [off, name] : order) {
        is.seekg(std::streamoff(off));
        out.add(name, read_ggt1<T>(is));
    }
    if (meta) *meta = h.meta;
    return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Bindings<float>;
template class Bindings<double>;
template class Sgd<float>;
template class Sgd<double>;
template void save_checkpoint(const std::string&, const ParamStore<float>&, const nlohmann::json&);
template void save_checkpoint(const std::string&, const ParamStore<double>&, const nlohmann::json&);
template ParamStore<float> load_checkpoint(const std::string&, nlohmann::json*);
template ParamStore<double> load_checkpoint(const std::string&, nlohmann::json*);

}  // namespace ggvit
