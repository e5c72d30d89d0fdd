#include "han/model.hpp"

#include <string>

#include "han/errors.hpp"

namespace han {

using nn::Activation;
using nn::ConvSpec;

namespace {

ConvSpec down(std::size_t in, std::size_t out, Activation act) {
  return {in, out, 4, 2, 1, true, act, false};
}

ConvSpec same(std::size_t in, std::size_t out, Activation act) {
  return {in, out, 3, 1, 1, true, act, false};
}

ConvSpec up(std::size_t in, std::size_t out) {
  return {in, out, 4, 2, 1, true, Activation::Relu, true};
}

ConvSpec head(std::size_t in, Activation act) { return {in, 1, 1, 1, 0, false, act, false}; }

Tensor zeros_like(const Tensor& t) { return Tensor::zeros(t.shape()); }

}  // namespace

Encoder::Encoder(const ModelConfig& cfg, nn::Initializer& init) {
  const std::size_t b = cfg.base_channels;
  const std::array<std::size_t, 8> widths{b, b, 2 * b, 2 * b, 4 * b, 4 * b, 8 * b, 8 * b};
  std::size_t in = 1;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const bool strided = i % 2 == 0;
    layers[i] = init.make_block(strided ? down(in, widths[i], Activation::Elu)
                                        : same(in, widths[i], Activation::Elu));
    in = widths[i];
  }
}

Encoder::Output Encoder::forward(const Tensor& x, Mode mode) {
  Output out;
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i % 2 == 0) out.skips[i / 2] = h;
    h = layers[i].forward(h, mode);
  }
  out.code = h;
  return out;
}

void Encoder::collect(nn::ParameterSet& params, nn::ParameterSet& buffers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    nn::register_block("encoder.conv" + std::to_string(i + 1), layers[i], params, buffers);
  }
}

StagedDecoder::StagedDecoder(const ModelConfig& cfg, nn::Initializer& init) {
  const std::size_t b = cfg.base_channels;
  // Stage k upsamples to `out[k]` channels, then concatenates the mirror skip.
  const std::array<std::size_t, 4> in{8 * b, 4 * b, 2 * b, b};
  const std::array<std::size_t, 4> out{4 * b, 2 * b, b, b};
  const std::array<std::size_t, 4> skip{4 * b, 2 * b, b, 1};
  for (std::size_t k = 0; k < 4; ++k) {
    upsample[k] = init.make_block(up(in[k], out[k]));
    convs[2 * k] = init.make_block(same(out[k] + skip[k], out[k], Activation::Relu));
    convs[2 * k + 1] = init.make_block(same(out[k], out[k], Activation::Relu));
  }
  head_t1 = init.make_block(head(2 * b, Activation::Sigmoid));
  head_t2 = init.make_block(head(b, Activation::Sigmoid));
  head_t3 = init.make_block(head(b, Activation::None));
}

StagedOutputs StagedDecoder::forward(const Tensor& code, const std::array<Tensor, 4>& skips,
                                     Mode mode) {
  StagedOutputs out;
  Tensor h = code;
  for (std::size_t k = 0; k < 4; ++k) {
    h = upsample[k].forward(h, mode);
    // Stage k pairs with the encoder skip of the same extent (8, 16, 32, 64).
    h = concat_channels(h, skips[3 - k]);
    h = convs[2 * k].forward(h, mode);
    h = convs[2 * k + 1].forward(h, mode);
    if (k == 1) out.t1 = head_t1.forward(h, mode);
    if (k == 2) out.t2 = head_t2.forward(h, mode);
  }
  out.t3_logits = head_t3.forward(h, mode);
  out.t3 = sigmoid(out.t3_logits);
  return out;
}

void StagedDecoder::collect(nn::ParameterSet& params, nn::ParameterSet& buffers) {
  for (std::size_t k = 0; k < 4; ++k) {
    nn::register_block("decoder.up" + std::to_string(k + 1), upsample[k], params, buffers);
  }
  for (std::size_t i = 0; i < convs.size(); ++i) {
    nn::register_block("decoder.conv" + std::to_string(i + 1), convs[i], params, buffers);
  }
  nn::register_block("decoder.head_t1", head_t1, params, buffers);
  nn::register_block("decoder.head_t2", head_t2, params, buffers);
  nn::register_block("decoder.head_t3", head_t3, params, buffers);
}

HierarchicalDiscriminator::HierarchicalDiscriminator(const ModelConfig& cfg,
                                                     nn::Initializer& init) {
  const std::size_t b = cfg.base_channels;
  const std::array<std::size_t, 4> widths{b, 2 * b, 4 * b, 8 * b};
  std::size_t in = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    trunk[i] = init.make_block(down(in, widths[i], Activation::Elu));
    heads[i] = init.make_block(head(widths[i], Activation::None));
    in = widths[i];
  }
}

Tensor HierarchicalDiscriminator::branch_score(std::size_t branch, const Tensor& feature) {
  Tensor logits = mean_spatial(heads.at(branch).forward(feature, Mode::Eval));
  return reshape(sigmoid(logits), {feature.dim(0)});
}

BranchOutputs HierarchicalDiscriminator::forward(const Tensor& image, Mode mode) {
  BranchOutputs out;
  Tensor h = image;
  for (std::size_t i = 0; i < 4; ++i) {
    h = trunk[i].forward(h, mode);
    out.features[i] = h;
    out.scores[i] = branch_score(i, h);
  }
  return out;
}

void HierarchicalDiscriminator::collect(nn::ParameterSet& params, nn::ParameterSet& buffers) {
  for (std::size_t i = 0; i < 4; ++i) {
    nn::register_block("discriminator.trunk" + std::to_string(i + 1), trunk[i], params, buffers);
    nn::register_block("discriminator.head" + std::to_string(i + 1), heads[i], params, buffers);
  }
}

HanModel::HanModel(const ModelConfig& cfg, std::uint64_t seed) : config_(cfg) {
  if (cfg.base_channels == 0) throw UsageError("base_channels must be positive");
  if (cfg.image_size != 64) throw UsageError("only 64x64 glyphs are supported");
  nn::Initializer init(seed);
  encoder = Encoder(cfg, init);
  decoder = StagedDecoder(cfg, init);
  discriminator = HierarchicalDiscriminator(cfg, init);
  encoder.collect(gen_params_, buffers_);
  decoder.collect(gen_params_, buffers_);
  discriminator.collect(disc_params_, buffers_);
}

void HanModel::check_image(const Tensor& x, const char* what) const {
  const std::size_t s = config_.image_size;
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != s || x.dim(3) != s) {
    throw ShapeError(std::string(what) + " expects [n,1," + std::to_string(s) + "," +
                     std::to_string(s) + "], got " + shape_to_string(x.shape()));
  }
}

StagedOutputs HanModel::transfer_forward(const Tensor& source, Mode mode, ForwardOptions opts) {
  check_image(source, "transfer_forward");
  auto enc = encoder.forward(source, mode);
  if (opts.zero_skips) {
    for (auto& s : enc.skips) s = zeros_like(s);
  }
  return decoder.forward(enc.code, enc.skips, mode);
}

BranchOutputs HanModel::discriminate(const Tensor& image, Mode mode) {
  check_image(image, "discriminate");
  return discriminator.forward(image, mode);
}

}  // namespace han
