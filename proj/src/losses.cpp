#include "han/losses.hpp"

#include <algorithm>
#include <cmath>

#include "han/errors.hpp"
#include "han/ops.hpp"

namespace han {

namespace {

Tensor safe_log(const Tensor& p) { return log(clamp(p, kProbEpsilon, 1.0 - kProbEpsilon)); }

Tensor one_minus(const Tensor& p) { return add_scalar(neg(p), 1.0); }

Tensor concat_scores(const Tensor& s) { return reshape(s, {s.numel()}); }

}  // namespace

Real compute_lambda_w(std::span<const Tensor> targets) {
  if (targets.empty()) throw UsageError("compute_lambda_w needs at least one target image");
  std::size_t positive = 0, negative = 0;
  for (const auto& t : targets) {
    for (Real v : t.data()) {
      if (v >= 0.5) {
        ++positive;
      } else {
        ++negative;
      }
    }
  }
  return 1.0 - static_cast<Real>(positive) / static_cast<Real>(std::max<std::size_t>(1, negative));
}

Tensor pixel_loss(const Tensor& logits, const Tensor& target, Real lambda_w) {
  if (logits.shape() != target.shape()) {
    throw ShapeError("pixel_loss shape mismatch: " + shape_to_string(logits.shape()) + " vs " +
                     shape_to_string(target.shape()));
  }
  const Tensor p = clamp(sigmoid(logits), kProbEpsilon, 1.0 - kProbEpsilon);
  const Tensor t = target.detach();
  const Tensor positive = mul(scale(t, -lambda_w), log(p));
  const Tensor negative = mul(scale(one_minus(t), -1.0), log(one_minus(p)));
  return mean(add(positive, negative));
}

BranchTensors discriminator_branch_losses(const BranchTensors& real_scores,
                                          const BranchTensors& fake_scores, bool classic) {
  BranchTensors out;
  for (std::size_t i = 0; i < 4; ++i) {
    const Tensor real_term = neg(mean(safe_log(concat_scores(real_scores[i]))));
    const Tensor fake = concat_scores(fake_scores[i]);
    const Tensor fake_term = classic ? neg(mean(safe_log(one_minus(fake)))) : mean(safe_log(fake));
    out[i] = add(real_term, fake_term);
  }
  return out;
}

BranchTensors generator_branch_losses(const BranchTensors& fake_scores) {
  BranchTensors out;
  for (std::size_t i = 0; i < 4; ++i) out[i] = neg(mean(safe_log(concat_scores(fake_scores[i]))));
  return out;
}

BranchLosses branch_adversarial_losses(const BranchTensors& real_scores,
                                       const BranchTensors& fake_scores, bool classic) {
  return {discriminator_branch_losses(real_scores, fake_scores, classic),
          generator_branch_losses(fake_scores)};
}

Real total_adversarial(const BranchValues& losses, const BranchValues& lambda) {
  Real s = 0;
  for (std::size_t i = 0; i < 4; ++i) s += lambda[i] * losses[i];
  return s;
}

Tensor total_adversarial(const BranchTensors& losses, const BranchValues& lambda) {
  Tensor s = scale(losses[0], lambda[0]);
  for (std::size_t i = 1; i < 4; ++i) s = add(s, scale(losses[i], lambda[i]));
  return s;
}

Real total_loss(Real pixel, Real total_adv, Real lambda_p, Real lambda_a) {
  return lambda_p * pixel + lambda_a * total_adv;
}

BranchValues branch_weight_schedule(WeightSchedule mode, std::size_t epoch) {
  switch (mode) {
    case WeightSchedule::Fixed:
      return {0.5, 0.5, 0.5, 1.0};
    case WeightSchedule::Decayed: {
      const Real l = std::max(0.5, std::pow(0.9, static_cast<Real>(epoch)));
      return {l, l, l, 1.0};
    }
    case WeightSchedule::DepthDecayed: {
      BranchValues l{};
      for (std::size_t i = 0; i < 3; ++i) l[i] = std::max(0.5, std::pow(0.9, static_cast<Real>(3 - i)));
      l[3] = 1.0;
      return l;
    }
  }
  throw std::logic_error("unknown weight schedule");
}

Real san_scale(const BranchValues& lambda) {
  if (lambda[3] == 0) throw UsageError("SAN scaling needs a non-zero final branch weight");
  return (lambda[0] + lambda[1] + lambda[2] + lambda[3]) / lambda[3];
}

BranchValues effective_branch_weights(DiscriminatorVariant variant, const BranchValues& han_lambda) {
  if (variant == DiscriminatorVariant::Hierarchical) return han_lambda;
  return {0.0, 0.0, 0.0, san_scale(han_lambda) * 1.0};
}

std::string to_string(WeightSchedule s) {
  switch (s) {
    case WeightSchedule::Fixed: return "fixed";
    case WeightSchedule::Decayed: return "decayed";
    case WeightSchedule::DepthDecayed: return "depth_decayed";
  }
  return "?";
}

std::string to_string(DiscriminatorVariant v) {
  return v == DiscriminatorVariant::Hierarchical ? "hierarchical" : "single";
}

WeightSchedule parse_weight_schedule(const std::string& s) {
  if (s == "fixed") return WeightSchedule::Fixed;
  if (s == "decayed") return WeightSchedule::Decayed;
  if (s == "depth_decayed") return WeightSchedule::DepthDecayed;
  throw UsageError("unknown weight schedule '" + s + "' (fixed|decayed|depth_decayed)");
}

DiscriminatorVariant parse_variant(const std::string& s) {
  if (s == "hierarchical" || s == "han") return DiscriminatorVariant::Hierarchical;
  if (s == "single" || s == "san") return DiscriminatorVariant::Single;
  throw UsageError("unknown discriminator variant '" + s + "' (hierarchical|single)");
}

}  // namespace han
