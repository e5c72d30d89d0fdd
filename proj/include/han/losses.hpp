#pragma once

#include <array>
#include <span>
#include <string>

#include "han/tensor.hpp"

namespace han {

// Probabilities are clamped into [eps, 1 - eps] before every log.
inline constexpr Real kProbEpsilon = 1e-7;

using BranchValues = std::array<Real, 4>;
using BranchTensors = std::array<Tensor, 4>;

enum class WeightSchedule { Fixed, Decayed, DepthDecayed };
enum class DiscriminatorVariant { Hierarchical, Single };

struct LossWeights {
  Real lambda_w = 1.0;
  BranchValues lambda_i{0.5, 0.5, 0.5, 1.0};
  Real lambda_p = 1.0;
  Real lambda_a = 1.0;
  Real san_scale_c = 1.0;
};

struct LossReport {
  Real pixel = 0;
  BranchValues gen_i{};
  BranchValues dis_i{};
  Real total_gen = 0;
  Real total_dis = 0;
};

// Class-balance weight 1 - #{t >= 0.5} / #{t < 0.5} over every pixel of every
// target. The denominator is floored at 1. Throws on an empty set.
Real compute_lambda_w(std::span<const Tensor> targets);

// Mean over all pixels of -lambda_w * t * log s - (1 - t) * log(1 - s),
// s = clamp(sigmoid(logits)).
Tensor pixel_loss(const Tensor& logits, const Tensor& target, Real lambda_w);

// L_d_i = -mean log D_i(real) + mean log D_i(fake). With `classic` the fake
// term is -mean log(1 - D_i(fake)) instead.
BranchTensors discriminator_branch_losses(const BranchTensors& real_scores,
                                          const BranchTensors& fake_scores, bool classic = false);
// L_g_i = -mean log D_i(fake).
BranchTensors generator_branch_losses(const BranchTensors& fake_scores);

struct BranchLosses {
  BranchTensors dis;
  BranchTensors gen;
};
BranchLosses branch_adversarial_losses(const BranchTensors& real_scores,
                                       const BranchTensors& fake_scores, bool classic = false);

Real total_adversarial(const BranchValues& losses, const BranchValues& lambda);
Tensor total_adversarial(const BranchTensors& losses, const BranchValues& lambda);

Real total_loss(Real pixel, Real total_adv, Real lambda_p, Real lambda_a);

BranchValues branch_weight_schedule(WeightSchedule mode, std::size_t epoch);

// c = (l1 + l2 + l3 + l4) / l4.
Real san_scale(const BranchValues& lambda);

// Branch weights actually applied: the schedule for HAN, (0, 0, 0, c) for SAN
// where c comes from the HAN weights it replaces.
BranchValues effective_branch_weights(DiscriminatorVariant variant, const BranchValues& han_lambda);

std::string to_string(WeightSchedule s);
std::string to_string(DiscriminatorVariant v);
WeightSchedule parse_weight_schedule(const std::string& s);
DiscriminatorVariant parse_variant(const std::string& s);

}  // namespace han
