/*
 * Copyright 2026 The comatch Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef COMATCH_MODEL_HPP
#define COMATCH_MODEL_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "comatch/errors.hpp"
#include "comatch/graph.hpp"
#include "comatch/rng.hpp"
#include "comatch/tensor.hpp"

namespace comatch {

enum class LayerKind { affine, conv3x3, batchnorm2d, relu, maxpool2x2, flatten };

/// Feed-forward network: an ordered layer list plus a named parameter
/// store. Parameter names are stable across runs, which keeps checkpoints
/// portable between processes.
template <class T>
class Network {
 public:
  struct Layer {
    LayerKind kind;
    // Indices into params_ (-1 if unused): affine/conv use {weight, bias},
    // batchnorm uses {gamma, beta} plus a running-stats slot.
    int p0 = -1;
    int p1 = -1;
    int stats = -1;
  };

  struct Param {
    std::string name;
    Tensor<T> value;
    typename Graph<T>::Id leaf = -1;  // id from the most recent forward()
  };

  /// Affine+ReLU stack with He-normal initialization.
  static Network mlp(int input_dim, const std::vector<int>& hidden, int class_count,
                     uint64_t init_seed) {
    if (hidden.empty()) throw ValidationError("mlp: hidden_dims must be non-empty");
    Network net;
    net.input_dim_ = input_dim;
    net.layers_.push_back({LayerKind::flatten});
    int prev = input_dim;
    int fc = 1;
    rng::Stream stream(init_seed, rng::StreamTag::init);
    for (int width : hidden) {
      net.add_affine("fc" + std::to_string(fc++), prev, width, stream);
      net.layers_.push_back({LayerKind::relu});
      prev = width;
    }
    net.add_affine("fc" + std::to_string(fc), prev, class_count, stream);
    return net;
  }

  /// The 7-layer CNN for 3x32x32 inputs: three (conv-BN-relu) x2 + maxpool
  /// blocks at 64/128/196 channels, then a single dense layer on the
  /// 196*4*4 = 3136 flattened features.
  static Network cnn7(int class_count, uint64_t init_seed) {
    Network net;
    net.input_dim_ = 3 * 32 * 32;
    rng::Stream stream(init_seed, rng::StreamTag::init);
    int conv = 1, bn = 1;
    int prev = 3;
    for (int width : {64, 64, -1, 128, 128, -1, 196, 196, -1}) {
      if (width < 0) {
        net.layers_.push_back({LayerKind::maxpool2x2});
        continue;
      }
      net.add_conv("conv" + std::to_string(conv++), prev, width, stream);
      net.add_batchnorm("bn" + std::to_string(bn++), width);
      net.layers_.push_back({LayerKind::relu});
      prev = width;
    }
    net.layers_.push_back({LayerKind::flatten});
    net.add_affine("fc1", 196 * 4 * 4, class_count, stream);
    return net;
  }

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }

  /// Records the whole forward pass on `g` and returns the logits node.
  /// Parameter leaves are kept so gradients can be read back after
  /// backward().
  typename Graph<T>::Id forward(Graph<T>& g, const Tensor<T>& input) {
    for (Param& p : params_) {
      Tensor<T> v = p.value;
      v.requires_grad = true;
      p.leaf = g.leaf(std::move(v));
    }
    typename Graph<T>::Id cur = g.constant(input);
    for (const Layer& layer : layers_) {
      switch (layer.kind) {
        case LayerKind::flatten:
          cur = g.flatten(cur);
          break;
        case LayerKind::relu:
          cur = g.relu(cur);
          break;
        case LayerKind::maxpool2x2:
          cur = g.maxpool2d(cur);
          break;
        case LayerKind::affine:
          cur = g.affine(cur, params_[layer.p0].leaf, params_[layer.p1].leaf);
          break;
        case LayerKind::conv3x3:
          cur = g.conv2d(cur, params_[layer.p0].leaf, params_[layer.p1].leaf);
          break;
        case LayerKind::batchnorm2d:
          cur = g.batchnorm2d(cur, params_[layer.p0].leaf, params_[layer.p1].leaf,
                              &bn_stats_[layer.stats], mode_);
          break;
      }
    }
    return cur;
  }

  /// Raw logits on a throwaway graph.
  Tensor<T> logits(const Tensor<T>& input) {
    Graph<T> g;
    return g.value(forward(g, input));
  }

  /// Softmax probabilities; rows sum to 1 within 1e-6.
  Tensor<T> predict(const Tensor<T>& input) { return softmax_rows(logits(input)); }

  size_t param_count() const {
    size_t n = 0;
    for (const Param& p : params_) n += p.value.numel();
    return n;
  }

  int param_tensor_count() const { return static_cast<int>(params_.size()); }
  const std::string& param_name(int i) const { return params_[static_cast<size_t>(i)].name; }
  Tensor<T>& param_value(int i) { return params_[static_cast<size_t>(i)].value; }
  const Tensor<T>& param_value(int i) const { return params_[static_cast<size_t>(i)].value; }
  typename Graph<T>::Id param_leaf(int i) const { return params_[static_cast<size_t>(i)].leaf; }

  Tensor<T>& param(const std::string& name) {
    for (Param& p : params_) {
      if (p.name == name) return p.value;
    }
    throw ValidationError("no parameter named " + name);
  }

  int bn_stats_count() const { return static_cast<int>(bn_stats_.size()); }
  BnRunningStats<T>& bn_stats(int i) { return bn_stats_[static_cast<size_t>(i)]; }

  int input_dim() const { return input_dim_; }

  template <class U>
  Network<U> cast_to() const {
    Network<U> out;
    out.mode_ = mode_;
    out.input_dim_ = input_dim_;
    for (const Layer& l : layers_) out.layers_.push_back({l.kind, l.p0, l.p1, l.stats});
    for (const Param& p : params_) out.params_.push_back({p.name, cast<U>(p.value), -1});
    for (const BnRunningStats<T>& s : bn_stats_) {
      BnRunningStats<U> c;
      c.mean = cast<U>(s.mean);
      c.var = cast<U>(s.var);
      out.bn_stats_.push_back(std::move(c));
    }
    return out;
  }

  /// Checkpoint format: "CMCKPT01", u32 record count, then per record:
  /// u32 name length, name bytes, u32 ndim, u32 dims[], f64 values[].
  /// BN running stats are stored as ".running_mean"/".running_var" records.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(kCheckpointMagic, 8);
    std::vector<std::pair<std::string, const Tensor<T>*>> records;
    for (const Param& p : params_) records.push_back({p.name, &p.value});
    std::vector<std::pair<std::string, Tensor<T>>> stat_records = stat_tensors();
    for (auto& [name, t] : stat_records) records.push_back({name, &t});
    write_u32(out, static_cast<uint32_t>(records.size()));
    for (auto& [name, t] : records) {
      write_u32(out, static_cast<uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(out, static_cast<uint32_t>(t->shape.size()));
      for (int d : t->shape) write_u32(out, static_cast<uint32_t>(d));
      for (T v : t->data) {
        double dv = static_cast<double>(v);
        out.write(reinterpret_cast<const char*>(&dv), sizeof(double));
      }
    }
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
  }

  /// Loads values into an already-built network of matching architecture.
  void load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
      throw FormatError("bad checkpoint magic in " + path.string());
    }
    uint32_t count = read_u32(in, path);
    for (uint32_t r = 0; r < count; ++r) {
      uint32_t name_len = read_u32(in, path);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      uint32_t ndim = read_u32(in, path);
      std::vector<int> shape(ndim);
      for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(read_u32(in, path));
      size_t n = Tensor<T>::count(shape);
      std::vector<double> values(n);
      in.read(reinterpret_cast<char*>(values.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
      if (!in) throw FormatError("truncated checkpoint: " + path.string());
      Tensor<T>* dst = find_record(name);
      if (dst == nullptr) throw FormatError("checkpoint record " + name + " has no target");
      if (dst->shape != shape) {
        throw FormatError("checkpoint record " + name + " shape " +
                          Tensor<T>::shape_str(shape) + " does not match " + dst->shape_str());
      }
      for (size_t i = 0; i < n; ++i) dst->data[i] = static_cast<T>(values[i]);
    }
  }

 private:
  template <class U>
  friend class Network;

  static constexpr const char* kCheckpointMagic = "CMCKPT01";

  void add_affine(const std::string& name, int din, int dout, rng::Stream& stream) {
    Tensor<T> w({din, dout});
    const double std = std::sqrt(2.0 / din);
    for (T& v : w.data) v = static_cast<T>(stream.normal(0.0, std));
    Layer layer{LayerKind::affine};
    layer.p0 = add_param(name + ".weight", std::move(w));
    layer.p1 = add_param(name + ".bias", Tensor<T>({dout}, T(0)));
    layers_.push_back(layer);
  }

  void add_conv(const std::string& name, int cin, int cout, rng::Stream& stream) {
    Tensor<T> k({cout, cin, 3, 3});
    const double std = std::sqrt(2.0 / (cin * 9.0));
    for (T& v : k.data) v = static_cast<T>(stream.normal(0.0, std));
    Layer layer{LayerKind::conv3x3};
    layer.p0 = add_param(name + ".weight", std::move(k));
    layer.p1 = add_param(name + ".bias", Tensor<T>({cout}, T(0)));
    layers_.push_back(layer);
  }

  void add_batchnorm(const std::string& name, int channels) {
    Layer layer{LayerKind::batchnorm2d};
    layer.p0 = add_param(name + ".gamma", Tensor<T>({channels}, T(1)));
    layer.p1 = add_param(name + ".beta", Tensor<T>({channels}, T(0)));
    layer.stats = static_cast<int>(bn_stats_.size());
    bn_stats_.push_back(BnRunningStats<T>::init(channels));
    bn_names_.push_back(name);
    layers_.push_back(layer);
  }

  int add_param(std::string name, Tensor<T> value) {
    params_.push_back({std::move(name), std::move(value), -1});
    return static_cast<int>(params_.size()) - 1;
  }

  std::vector<std::pair<std::string, Tensor<T>>> stat_tensors() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (size_t i = 0; i < bn_stats_.size(); ++i) {
      out.push_back({bn_names_[i] + ".running_mean", bn_stats_[i].mean});
      out.push_back({bn_names_[i] + ".running_var", bn_stats_[i].var});
    }
    return out;
  }

  Tensor<T>* find_record(const std::string& name) {
    for (Param& p : params_) {
      if (p.name == name) return &p.value;
    }
    for (size_t i = 0; i < bn_stats_.size(); ++i) {
      if (name == bn_names_[i] + ".running_mean") return &bn_stats_[i].mean;
      if (name == bn_names_[i] + ".running_var") return &bn_stats_[i].var;
    }
    return nullptr;
  }

  static void write_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }

  static uint32_t read_u32(std::ifstream& in, const std::filesystem::path& path) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw FormatError("truncated checkpoint: " + path.string());
    return v;
  }

  std::vector<Layer> layers_;
  std::vector<Param> params_;
  std::vector<BnRunningStats<T>> bn_stats_;
  std::vector<std::string> bn_names_;
  Mode mode_ = Mode::train;
  int input_dim_ = 0;
};

}  // namespace comatch

#endif  // COMATCH_MODEL_HPP
