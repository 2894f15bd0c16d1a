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

#ifndef MOS_LOSSES_HPP_
#define MOS_LOSSES_HPP_

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mos/numerics.hpp"

namespace mos {

// Surrogate loss identifiers, numbered as in the loss table:
//   0 cross entropy       1 margin             2 difference of logits ratio
//   3 boosted CE          4..7 searched losses
class LossId {
 public:
  static constexpr int kCount = 8;

  constexpr LossId() = default;
  explicit LossId(int id) : id_(id) {
    if (id < 0 || id >= kCount) {
      throw std::invalid_argument("loss id " + std::to_string(id) + " is outside 0..7");
    }
  }
  constexpr int value() const { return id_; }
  constexpr auto operator<=>(const LossId&) const = default;

 private:
  int id_ = 0;
};

std::vector<LossId> all_losses();
std::vector<LossId> to_loss_ids(std::span<const int> ids);
std::string_view loss_name(LossId id);

class UnsupportedLossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A loss evaluation produced NaN; carries the offending loss id.
class LossNumericError : public NumericError {
 public:
  LossNumericError(LossId id, const std::string& what)
      : NumericError("loss " + std::to_string(id.value()) + ": " + what), id_(id) {}
  LossId id() const { return id_; }

 private:
  LossId id_;
};

// Everything the loss formulas read off the logits.
struct LogitContext {
  Vec h;
  std::size_t y = 0;
  Vec p;                        // softmax(h)
  std::vector<std::size_t> pi;  // indices by descending logit, ties to lower index
  Vec y_onehot;
  std::size_t best_other = 0;   // argmax_{j != y} h_j, ties to lower index
};

LogitContext make_context(std::span<const double> h, std::size_t y);

double eval_loss(LossId id, const LogitContext& ctx);

// Analytic gradient of eval_loss w.r.t. h. The argmax/sort selections are
// held fixed at ctx's values.
Vec grad_loss_logits(LossId id, const LogitContext& ctx);

// Probability clamp for the boosted cross entropy.
inline constexpr double kProbClamp = 1e-12;
// Guard added to the DLR denominator.
inline constexpr double kDlrGuard = 1e-12;

}  // namespace mos

#endif  // MOS_LOSSES_HPP_
