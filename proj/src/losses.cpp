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

#include "mos/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mos {
namespace {

// J^T v for the softmax Jacobian J = diag(s) - s s^T (symmetric).
Vec softmax_vjp(const Vec& s, const Vec& v) {
  const double sv = dot(s, v);
  Vec out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] * (v[i] - sv);
  return out;
}

Vec scaled(std::span<const double> v, double a) {
  Vec out(v.begin(), v.end());
  for (double& x : out) x *= a;
  return out;
}

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }
bool inside_clamp(double p) { return p > kProbClamp && p < 1.0 - kProbClamp; }

void require_dlr_classes(LossId id, const LogitContext& ctx) {
  if (id.value() == 2 && ctx.h.size() < 3) {
    throw UnsupportedLossError("loss 2 (DLR) needs at least three classes");
  }
}

double dlr_denominator(const LogitContext& ctx) {
  return ctx.h[ctx.pi[0]] - ctx.h[ctx.pi[2]] + kDlrGuard;
}

// Intermediates shared by the searched losses' value and gradient.
struct Loss5Parts {
  Vec q;  // softmax(5h)
  Vec s;  // softmax(h + 2q)
  std::size_t top = 0;
};
Loss5Parts loss5_parts(const LogitContext& ctx) {
  Loss5Parts parts;
  parts.q = softmax(scaled(ctx.h, 5.0));
  Vec a = ctx.h;
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += 2.0 * parts.q[i];
  parts.s = softmax(a);
  parts.top = static_cast<std::size_t>(
      std::max_element(parts.s.begin(), parts.s.end()) - parts.s.begin());
  return parts;
}

struct Loss6Parts {
  Vec growth;  // d t_i / d h_i for t = 2 exp(h) h
  Vec u;       // softmax(t)
  Vec s;       // softmax(-u)
  Vec r;       // softmax(2h)
  Vec w;       // r + 2 onehot
};
Loss6Parts loss6_parts(const LogitContext& ctx) {
  Loss6Parts parts;
  const std::size_t n = ctx.h.size();
  Vec t(n);
  parts.growth.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(ctx.h[i]);
    t[i] = 2.0 * e * ctx.h[i];
    parts.growth[i] = 2.0 * e * (1.0 + ctx.h[i]);
  }
  parts.u = softmax(t);
  parts.s = softmax(scaled(parts.u, -1.0));
  parts.r = softmax(scaled(ctx.h, 2.0));
  parts.w = parts.r;
  for (std::size_t i = 0; i < n; ++i) parts.w[i] += 2.0 * ctx.y_onehot[i];
  return parts;
}

struct Loss7Parts {
  Vec r;  // softmax(2h)
  Vec s;  // softmax(r + h - onehot)
};
Loss7Parts loss7_parts(const LogitContext& ctx) {
  Loss7Parts parts;
  parts.r = softmax(scaled(ctx.h, 2.0));
  Vec a(ctx.h.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = parts.r[i] + ctx.h[i] - ctx.y_onehot[i];
  parts.s = softmax(a);
  return parts;
}

double eval_unchecked(LossId id, const LogitContext& ctx) {
  const Vec& h = ctx.h;
  const std::size_t y = ctx.y;
  const std::size_t j = ctx.best_other;
  switch (id.value()) {
    case 0:
      return -h[y] + log_sum_exp(h, 1.0);
    case 1:
      return -h[y] + h[j];
    case 2:
      return (-h[y] + h[j]) / dlr_denominator(ctx);
    case 3:
      return -std::log(clamp_prob(ctx.p[y])) - std::log(1.0 - clamp_prob(ctx.p[j]));
    case 4: {
      const double top = ctx.p[ctx.pi[0]];
      double sum = 0.0;
      for (double pi : ctx.p) sum += std::exp(10.0 * pi / top);
      return sum;
    }
    case 5: {
      const Loss5Parts parts = loss5_parts(ctx);
      return std::exp(-parts.s[parts.top]);
    }
    case 6: {
      const Loss6Parts parts = loss6_parts(ctx);
      return dot(parts.s, parts.w);
    }
    case 7: {
      const Loss7Parts parts = loss7_parts(ctx);
      double sum = 0.0;
      for (std::size_t i = 0; i < parts.s.size(); ++i) {
        const double e = parts.s[i] - ctx.y_onehot[i];
        sum += e * e;
      }
      return sum;
    }
  }
  throw std::invalid_argument("unknown loss id");
}

}  // namespace

std::vector<LossId> all_losses() {
  std::vector<LossId> ids;
  for (int i = 0; i < LossId::kCount; ++i) ids.emplace_back(i);
  return ids;
}

std::vector<LossId> to_loss_ids(std::span<const int> ids) {
  std::vector<LossId> out;
  out.reserve(ids.size());
  for (int id : ids) out.emplace_back(id);
  return out;
}

std::string_view loss_name(LossId id) {
  static constexpr std::array<std::string_view, LossId::kCount> kNames = {
      "cross_entropy", "margin",          "dlr",             "boosted_ce",
      "searched_1",    "searched_2",      "searched_3",      "searched_4"};
  return kNames[static_cast<std::size_t>(id.value())];
}

LogitContext make_context(std::span<const double> h, std::size_t y) {
  if (h.size() < 2) throw UnsupportedLossError("losses need at least two classes");
  if (y >= h.size()) throw std::invalid_argument("label outside the logit range");
  if (!all_finite(h)) throw NumericError("non-finite logits");
  LogitContext ctx;
  ctx.h.assign(h.begin(), h.end());
  ctx.y = y;
  ctx.p = softmax(h);
  ctx.pi.resize(h.size());
  std::iota(ctx.pi.begin(), ctx.pi.end(), std::size_t{0});
  std::stable_sort(ctx.pi.begin(), ctx.pi.end(),
                   [&](std::size_t a, std::size_t b) { return h[a] > h[b]; });
  ctx.y_onehot.assign(h.size(), 0.0);
  ctx.y_onehot[y] = 1.0;
  ctx.best_other = (y == 0) ? 1 : 0;
  for (std::size_t j = 0; j < h.size(); ++j) {
    if (j != y && h[j] > h[ctx.best_other]) ctx.best_other = j;
  }
  return ctx;
}

double eval_loss(LossId id, const LogitContext& ctx) {
  require_dlr_classes(id, ctx);
  const double v = eval_unchecked(id, ctx);
  if (!std::isfinite(v)) throw LossNumericError(id, "non-finite loss value");
  return v;
}

Vec grad_loss_logits(LossId id, const LogitContext& ctx) {
  require_dlr_classes(id, ctx);
  const std::size_t n = ctx.h.size();
  const std::size_t y = ctx.y;
  const std::size_t j = ctx.best_other;
  Vec g(n, 0.0);
  switch (id.value()) {
    case 0:
      g = ctx.p;
      g[y] -= 1.0;
      break;
    case 1:
      g[y] -= 1.0;
      g[j] += 1.0;
      break;
    case 2: {
      const double num = ctx.h[j] - ctx.h[y];
      const double den = dlr_denominator(ctx);
      g[j] += 1.0 / den;
      g[y] -= 1.0 / den;
      const double c = num / (den * den);
      g[ctx.pi[0]] -= c;
      g[ctx.pi[2]] += c;
      break;
    }
    case 3: {
      Vec dp(n, 0.0);
      if (inside_clamp(ctx.p[y])) dp[y] -= 1.0 / ctx.p[y];
      if (inside_clamp(ctx.p[j])) dp[j] += 1.0 / (1.0 - ctx.p[j]);
      g = softmax_vjp(ctx.p, dp);
      break;
    }
    case 4: {
      // p_i / max_j p_j = exp(h_i - h_top); the top index is held fixed.
      const std::size_t top = ctx.pi[0];
      const double ptop = ctx.p[top];
      double rest = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == top) continue;
        const double r = ctx.p[k] / ptop;
        g[k] = 10.0 * r * std::exp(10.0 * r);
        rest += g[k];
      }
      g[top] = -rest;
      break;
    }
    case 5: {
      const Loss5Parts parts = loss5_parts(ctx);
      const double value = std::exp(-parts.s[parts.top]);
      // d/da of -s_top, where s = softmax(a).
      Vec ga(n);
      for (std::size_t k = 0; k < n; ++k) {
        ga[k] = -value * parts.s[parts.top] * ((k == parts.top ? 1.0 : 0.0) - parts.s[k]);
      }
      // a = h + 2 softmax(5h)  =>  da/dh = I + 10 J_q.
      const Vec through_q = softmax_vjp(parts.q, ga);
      for (std::size_t k = 0; k < n; ++k) g[k] = ga[k] + 10.0 * through_q[k];
      break;
    }
    case 6: {
      const Loss6Parts parts = loss6_parts(ctx);
      const Vec gv = softmax_vjp(parts.s, parts.w);  // d/d(-u)
      const Vec gt = softmax_vjp(parts.u, scaled(gv, -1.0));
      const Vec gr = softmax_vjp(parts.r, parts.s);
      for (std::size_t k = 0; k < n; ++k) g[k] = gt[k] * parts.growth[k] + 2.0 * gr[k];
      break;
    }
    case 7: {
      const Loss7Parts parts = loss7_parts(ctx);
      Vec ds(n);
      for (std::size_t k = 0; k < n; ++k) ds[k] = 2.0 * (parts.s[k] - ctx.y_onehot[k]);
      const Vec ga = softmax_vjp(parts.s, ds);
      const Vec through_r = softmax_vjp(parts.r, ga);
      for (std::size_t k = 0; k < n; ++k) g[k] = ga[k] + 2.0 * through_r[k];
      break;
    }
    default:
      throw std::invalid_argument("unknown loss id");
  }
  if (!all_finite(g)) throw LossNumericError(id, "non-finite gradient");
  return g;
}

}  // namespace mos
