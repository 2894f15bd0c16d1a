/* Copyright 2026 The MOS Attack Authors. All Rights Reserved.

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

#include "mos/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "mos/errors.hpp"

namespace mos {
namespace {

// Layer inputs and pre-activations recorded by a forward pass.
struct ForwardTrace {
  std::vector<Vec> inputs;
  std::vector<Vec> pre;
};

void check_input(const ClassifierWeights& w, std::span<const double> x) {
  if (w.layers.empty()) throw std::invalid_argument("classifier has no layers");
  if (x.size() != w.input_dim()) {
    throw std::invalid_argument("input has length " + std::to_string(x.size()) +
                                ", network expects " + std::to_string(w.input_dim()));
  }
}

Vec affine(const DenseLayer& layer, std::span<const double> in) {
  Vec out = layer.weight.multiply(in);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += layer.bias[i];
  return out;
}

ForwardTrace forward_trace(const ClassifierWeights& w, std::span<const double> x) {
  check_input(w, x);
  ForwardTrace t;
  t.inputs.reserve(w.layers.size());
  t.pre.reserve(w.layers.size());
  Vec a(x.begin(), x.end());
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    Vec z = affine(w.layers[l], a);
    t.inputs.push_back(std::move(a));
    a = z;
    if (l + 1 < w.layers.size()) {
      for (double& v : a) v = std::max(v, 0.0);
    }
    t.pre.push_back(std::move(z));
  }
  return t;
}

// Pushes grad_logits back through the layers. When grads is non-null the
// parameter gradients are accumulated into it.
Vec backward_trace(const ClassifierWeights& w, const ForwardTrace& t,
                   std::span<const double> grad_logits, std::vector<DenseLayer>* grads) {
  if (grad_logits.size() != w.num_classes()) {
    throw std::invalid_argument("grad_logits has length " + std::to_string(grad_logits.size()) +
                                ", network has " + std::to_string(w.num_classes()) +
                                " outputs");
  }
  Vec g(grad_logits.begin(), grad_logits.end());
  for (std::size_t l = w.layers.size(); l-- > 0;) {
    if (l + 1 < w.layers.size()) {
      const Vec& z = t.pre[l];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(z[i] > 0.0)) g[i] = 0.0;
      }
    }
    if (grads != nullptr) {
      DenseLayer& gl = (*grads)[l];
      const Vec& in = t.inputs[l];
      for (std::size_t r = 0; r < g.size(); ++r) {
        if (g[r] == 0.0) continue;
        auto row = gl.weight.row(r);
        for (std::size_t c = 0; c < in.size(); ++c) row[c] += g[r] * in[c];
        gl.bias[r] += g[r];
      }
    }
    g = w.layers[l].weight.multiply_transposed(g);
  }
  return g;
}

double cross_entropy(std::span<const double> logits, std::size_t y) {
  return log_sum_exp(logits, 1.0) - logits[y];
}

Vec cross_entropy_grad(std::span<const double> logits, std::size_t y) {
  Vec g = softmax(logits);
  g[y] -= 1.0;
  return g;
}

// l_inf PGD on cross entropy, used for adversarial training.
Vec pgd_ce(const ClassifierWeights& w, const LabeledPoint& p, double eps, std::size_t steps,
           std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-eps, eps);
  const double step = 2.5 * eps / static_cast<double>(std::max<std::size_t>(steps, 1));
  Vec x(p.x.size());
  auto project = [&](Vec& v) {
    for (std::size_t j = 0; j < v.size(); ++j) {
      const double lo = std::max(0.0, p.x[j] - eps);
      const double hi = std::min(1.0, p.x[j] + eps);
      v[j] = std::clamp(v[j], lo, hi);
    }
  };
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = p.x[j] + unif(rng);
  project(x);
  for (std::size_t s = 0; s < steps; ++s) {
    const ForwardTrace t = forward_trace(w, x);
    const Vec gx = backward_trace(w, t, cross_entropy_grad(t.pre.back(), p.y), nullptr);
    for (std::size_t j = 0; j < x.size(); ++j) {
      x[j] += step * static_cast<double>((gx[j] > 0.0) - (gx[j] < 0.0));
    }
    project(x);
  }
  return x;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t read(std::size_t width, const char* what) {
    if (pos_ + width > bytes_.size()) {
      throw ParseError(std::string("weight file truncated while reading ") + what, pos_);
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += width;
    return v;
  }
  double read_f64(const char* what) { return std::bit_cast<double>(read(8, what)); }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ParseError("weight file truncated", pos_);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr char kWeightMagic[8] = {'M', 'O', 'S', 'W', 'G', 'H', 'T', '\0'};

}  // namespace

void ClassifierWeights::validate() const {
  if (layer_dims.size() < 2) throw std::invalid_argument("need at least input and output dims");
  if (layer_dims.back() < 2) throw std::invalid_argument("need at least two classes");
  if (layers.size() + 1 != layer_dims.size()) {
    throw std::invalid_argument("layer count does not match layer_dims");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& L = layers[l];
    if (layer_dims[l] == 0 || layer_dims[l + 1] == 0) {
      throw std::invalid_argument("layer widths must be positive");
    }
    if (L.weight.rows() != layer_dims[l + 1] || L.weight.cols() != layer_dims[l] ||
        L.bias.size() != layer_dims[l + 1]) {
      throw std::invalid_argument("layer " + std::to_string(l) + " has inconsistent shape");
    }
    if (!all_finite(L.weight.values()) || !all_finite(L.bias)) {
      throw std::invalid_argument("layer " + std::to_string(l) + " has non-finite entries");
    }
  }
}

ClassifierWeights zero_weights(const std::vector<std::size_t>& dims) {
  ClassifierWeights w;
  w.layer_dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    w.layers.push_back({Mat(dims[l + 1], dims[l]), Vec(dims[l + 1], 0.0)});
  }
  w.validate();
  return w;
}

ClassifierWeights init_weights(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  ClassifierWeights w = zero_weights(dims);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(dims[l])));
    for (double& v : w.layers[l].weight.values()) v = normal(rng);
  }
  return w;
}

Vec forward(const ClassifierWeights& w, std::span<const double> x) {
  check_input(w, x);
  Vec a(x.begin(), x.end());
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    a = affine(w.layers[l], a);
    if (l + 1 < w.layers.size()) {
      for (double& v : a) v = std::max(v, 0.0);
    }
  }
  return a;
}

Vec backward_input(const ClassifierWeights& w, std::span<const double> x,
                   std::span<const double> grad_logits) {
  return backward_trace(w, forward_trace(w, x), grad_logits, nullptr);
}

std::size_t argmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("argmax: empty logits");
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) -
                                  logits.begin());
}

std::size_t predict(const ClassifierWeights& w, std::span<const double> x) {
  return argmax(forward(w, x));
}

double accuracy(const ClassifierWeights& w, const Dataset& data) {
  if (data.points.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& p : data.points) hits += (predict(w, p.x) == p.y);
  return static_cast<double>(hits) / static_cast<double>(data.points.size());
}

Dataset make_blobs(const BlobSpec& spec) {
  if (spec.d < 2) throw std::invalid_argument("make_blobs: need d >= 2");
  if (spec.num_classes < 2) throw std::invalid_argument("make_blobs: need at least two classes");
  Dataset data;
  data.d = spec.d;
  data.num_classes = spec.num_classes;
  std::vector<Vec> centers(spec.num_classes, Vec(spec.d, 0.5));
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    const double angle = std::numbers::pi / 2.0 +
                         2.0 * std::numbers::pi * static_cast<double>(c) /
                             static_cast<double>(spec.num_classes);
    centers[c][0] = 0.5 + 0.25 * std::cos(angle);
    centers[c][1] = 0.5 + 0.25 * std::sin(angle);
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.spread);
  data.points.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    LabeledPoint p;
    p.y = i % spec.num_classes;
    p.x.resize(spec.d);
    for (std::size_t j = 0; j < spec.d; ++j) {
      p.x[j] = std::clamp(centers[p.y][j] + noise(rng), 0.0, 1.0);
    }
    data.points.push_back(std::move(p));
  }
  return data;
}

TrainingResult train_toy(const TrainingConfig& cfg, const Dataset& data) {
  if (data.points.empty()) throw std::invalid_argument("train_toy: empty dataset");
  if (cfg.dims.empty() || cfg.dims.front() != data.d || cfg.dims.back() != data.num_classes) {
    throw std::invalid_argument("train_toy: dims do not match the dataset");
  }
  TrainingResult result{init_weights(cfg.dims, cfg.seed), 0.0};
  ClassifierWeights& w = result.weights;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(data.points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::size_t>(cfg.batch_size, 1);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      std::vector<DenseLayer> grads = zero_weights(cfg.dims).layers;
      double batch_loss = 0.0;
      try {
        for (std::size_t i = start; i < stop; ++i) {
          const LabeledPoint& p = data.points[order[i]];
          Vec x = cfg.adversarial ? pgd_ce(w, p, cfg.epsilon, cfg.pgd_steps, rng) : p.x;
          const ForwardTrace t = forward_trace(w, x);
          batch_loss += cross_entropy(t.pre.back(), p.y);
          backward_trace(w, t, cross_entropy_grad(t.pre.back(), p.y), &grads);
        }
      } catch (const NumericError& e) {
        throw TrainingError("training diverged in epoch " + std::to_string(epoch) + ": " +
                            e.what());
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("training diverged in epoch " + std::to_string(epoch));
      }
      const double scale = cfg.step_size / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < w.layers.size(); ++l) {
        auto& wv = w.layers[l].weight.values();
        const auto& gv = grads[l].weight.values();
        for (std::size_t k = 0; k < wv.size(); ++k) wv[k] -= scale * gv[k];
        for (std::size_t k = 0; k < w.layers[l].bias.size(); ++k) {
          w.layers[l].bias[k] -= scale * grads[l].bias[k];
        }
      }
    }
  }
  result.clean_accuracy = accuracy(w, data);
  return result;
}

std::vector<std::uint8_t> encode_weights(const ClassifierWeights& w) {
  w.validate();
  std::vector<std::uint8_t> out(std::begin(kWeightMagic), std::end(kWeightMagic));
  put_u32(out, kWeightFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(w.layer_dims.size()));
  for (std::size_t d : w.layer_dims) put_u64(out, d);
  for (const DenseLayer& L : w.layers) {
    for (double v : L.weight.values()) put_f64(out, v);
    for (double v : L.bias) put_f64(out, v);
  }
  return out;
}

ClassifierWeights decode_weights(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const auto magic = in.take(sizeof(kWeightMagic));
  if (!std::equal(magic.begin(), magic.end(), std::begin(kWeightMagic))) {
    throw ParseError("not a weight file (bad magic)", 0);
  }
  const std::size_t version_at = in.pos();
  if (in.read(4, "version") != kWeightFormatVersion) {
    throw ParseError("unsupported weight format version", version_at);
  }
  const std::size_t count_at = in.pos();
  const std::uint64_t n_dims = in.read(4, "layer count");
  if (n_dims < 2 || n_dims > 64) throw ParseError("implausible layer count", count_at);
  std::vector<std::size_t> dims;
  for (std::uint64_t i = 0; i < n_dims; ++i) {
    const std::size_t at = in.pos();
    const std::uint64_t d = in.read(8, "layer width");
    if (d == 0 || d > (1u << 24)) throw ParseError("implausible layer width", at);
    dims.push_back(static_cast<std::size_t>(d));
  }
  if (dims.back() < 2) throw ParseError("need at least two classes", in.pos());
  ClassifierWeights w = zero_weights(dims);
  for (DenseLayer& L : w.layers) {
    for (double& v : L.weight.values()) v = in.read_f64("weights");
    for (double& v : L.bias) v = in.read_f64("biases");
  }
  if (in.remaining() != 0) throw ParseError("trailing bytes after weights", in.pos());
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    if (!all_finite(w.layers[l].weight.values()) || !all_finite(w.layers[l].bias)) {
      throw ParseError("non-finite parameter in layer " + std::to_string(l), in.pos());
    }
  }
  return w;
}

void save_weights(const ClassifierWeights& w, const std::filesystem::path& path) {
  const auto bytes = encode_weights(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

ClassifierWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

void save_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "# mos-dataset v1\n";
  for (std::size_t j = 0; j < data.d; ++j) out << 'x' << j << ',';
  out << "label\n";
  out.precision(17);
  for (const auto& p : data.points) {
    for (double v : p.x) out << v << ',';
    out << p.y << '\n';
  }
}

Dataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    if (pos >= text.size()) return false;
    const std::size_t end = text.find('\n', pos);
    line = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    pos = (end == std::string::npos) ? text.size() : end + 1;
    return true;
  };
  std::string line;
  if (!next_line(line) || line != "# mos-dataset v1") {
    throw ParseError("missing '# mos-dataset v1' header", 0);
  }
  std::size_t line_start = pos;
  if (!next_line(line)) throw ParseError("missing column header", line_start);
  Dataset data;
  data.d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (data.d == 0) throw ParseError("no feature columns", line_start);
  while (true) {
    line_start = pos;
    if (!next_line(line)) break;
    if (line.empty()) continue;
    LabeledPoint p;
    std::size_t field_start = 0;
    for (std::size_t j = 0; j <= data.d; ++j) {
      const std::size_t comma = line.find(',', field_start);
      const bool last = (j == data.d);
      if (last != (comma == std::string::npos)) {
        throw ParseError("wrong number of columns", line_start + field_start);
      }
      const std::string field =
          line.substr(field_start, last ? std::string::npos : comma - field_start);
      try {
        std::size_t used = 0;
        if (last) {
          const long long y = std::stoll(field, &used);
          if (y < 0) throw std::invalid_argument("negative");
          p.y = static_cast<std::size_t>(y);
        } else {
          const double v = std::stod(field, &used);
          if (!(v >= 0.0 && v <= 1.0)) throw std::out_of_range("feature");
          p.x.push_back(v);
        }
        if (used != field.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError("bad field '" + field + "'", line_start + field_start);
      }
      field_start = comma + 1;
    }
    data.num_classes = std::max(data.num_classes, p.y + 1);
    data.points.push_back(std::move(p));
  }
  data.num_classes = std::max<std::size_t>(data.num_classes, 2);
  return data;
}

}  // namespace mos
