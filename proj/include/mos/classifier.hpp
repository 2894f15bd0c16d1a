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

#ifndef MOS_CLASSIFIER_HPP_
#define MOS_CLASSIFIER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mos/numerics.hpp"

namespace mos {

// One affine layer: out = weight * in + bias, weight is (out x in).
struct DenseLayer {
  Mat weight;
  Vec bias;
  bool operator==(const DenseLayer&) const = default;
};

// Fully-connected network with rectified-linear hidden activations and
// linear output logits. layer_dims = {d, hidden..., C}.
struct ClassifierWeights {
  std::vector<std::size_t> layer_dims;
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t num_classes() const { return layer_dims.back(); }

  // Throws std::invalid_argument if shapes are inconsistent, C < 2, or any
  // entry is non-finite.
  void validate() const;

  bool operator==(const ClassifierWeights&) const = default;
};

struct LabeledPoint {
  Vec x;
  std::size_t y = 0;
};

struct Dataset {
  std::vector<LabeledPoint> points;
  std::size_t d = 0;
  std::size_t num_classes = 0;
};

// All-zero network with the given layer widths.
ClassifierWeights zero_weights(const std::vector<std::size_t>& dims);

// He-normal weights, zero biases, deterministic in seed.
ClassifierWeights init_weights(const std::vector<std::size_t>& dims, std::uint64_t seed);

Vec forward(const ClassifierWeights& w, std::span<const double> x);

// (dh/dx)^T grad_logits by reverse accumulation. ReLU'(0) is taken as 0.
Vec backward_input(const ClassifierWeights& w, std::span<const double> x,
                   std::span<const double> grad_logits);

// Argmax of the logits, ties to the lowest index.
std::size_t argmax(std::span<const double> logits);
std::size_t predict(const ClassifierWeights& w, std::span<const double> x);

double accuracy(const ClassifierWeights& w, const Dataset& data);

// Gaussian blobs clipped to [0,1]^d. Class centers are placed deterministically
// inside the box; points are sampled round-robin over classes.
struct BlobSpec {
  std::size_t n = 1500;
  std::size_t d = 2;
  std::size_t num_classes = 3;
  double spread = 0.1;
  std::uint64_t seed = 7;
};
Dataset make_blobs(const BlobSpec& spec);

struct TrainingConfig {
  std::vector<std::size_t> dims{2, 16, 3};
  std::uint64_t seed = 7;
  std::size_t epochs = 60;
  double step_size = 0.1;
  std::size_t batch_size = 32;
  bool adversarial = false;
  double epsilon = 0.1;
  std::size_t pgd_steps = 10;
};

struct TrainingResult {
  ClassifierWeights weights;
  double clean_accuracy = 0.0;
};

// Minibatch SGD on cross entropy. With cfg.adversarial every batch is replaced
// by its PGD-CE counterpart inside the l_inf ball of radius cfg.epsilon.
// Throws TrainingError if the loss becomes non-finite.
TrainingResult train_toy(const TrainingConfig& cfg, const Dataset& data);

// Weight file: "MOSWGHT\0", u32 version, u32 layer count, u64 dims, then f64
// weights and biases layer by layer, all little-endian.
inline constexpr std::uint32_t kWeightFormatVersion = 1;
void save_weights(const ClassifierWeights& w, const std::filesystem::path& path);
ClassifierWeights load_weights(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_weights(const ClassifierWeights& w);
ClassifierWeights decode_weights(std::span<const std::uint8_t> bytes);

// CSV: "# mos-dataset v1" line, header x0..x{d-1},label, then one row per point.
void save_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace mos

#endif  // MOS_CLASSIFIER_HPP_
