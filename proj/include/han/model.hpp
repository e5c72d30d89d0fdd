#pragma once

#include <array>
#include <cstdint>

#include "han/nn.hpp"

namespace han {

struct ModelConfig {
  // Width of the first stage; stages use 1x, 2x, 4x, 8x this value.
  std::size_t base_channels = 64;
  std::size_t image_size = 64;
};

// Eight Conv-BN-ELU layers. Odd layers (1,3,5,7) are 4x4 stride-2 and halve the
// extent (64 -> 32 -> 16 -> 8 -> 4); even layers are 3x3 stride-1.
class Encoder {
 public:
  struct Output {
    Tensor code;                 // [n, 8b, 4, 4]
    std::array<Tensor, 4> skips;  // inputs to layers 1,3,5,7: extents 64, 32, 16, 8
  };

  Encoder() = default;
  Encoder(const ModelConfig& cfg, nn::Initializer& init);

  Output forward(const Tensor& x, Mode mode);
  void collect(nn::ParameterSet& params, nn::ParameterSet& buffers);

  std::array<nn::ConvBlock, 8> layers;
};

struct StagedOutputs {
  Tensor t1;         // [n,1,16,16]
  Tensor t2;         // [n,1,32,32]
  Tensor t3_logits;  // [n,1,64,64]
  Tensor t3;         // sigmoid(t3_logits)
};

// Four upsampling stages (transposed conv 4x4 stride 2, then skip concat, then
// two 3x3 Conv-BN-ReLU). T1 and T2 are 1x1 sigmoid heads on the 16x16 and
// 32x32 stage outputs; the T3 head is a 1x1 conv producing logits.
class StagedDecoder {
 public:
  StagedDecoder() = default;
  StagedDecoder(const ModelConfig& cfg, nn::Initializer& init);

  StagedOutputs forward(const Tensor& code, const std::array<Tensor, 4>& skips, Mode mode);
  void collect(nn::ParameterSet& params, nn::ParameterSet& buffers);

  std::array<nn::ConvBlock, 4> upsample;
  std::array<nn::ConvBlock, 8> convs;
  nn::ConvBlock head_t1;
  nn::ConvBlock head_t2;
  nn::ConvBlock head_t3;
};

struct BranchOutputs {
  std::array<Tensor, 4> features;  // trunk activations, extents 32, 16, 8, 4
  std::array<Tensor, 4> scores;    // [n] probabilities per branch
};

// Four stride-2 Conv-BN-ELU trunk layers; after each, a branch head
// (1x1 conv -> spatial mean -> sigmoid) yields one probability per image.
class HierarchicalDiscriminator {
 public:
  HierarchicalDiscriminator() = default;
  HierarchicalDiscriminator(const ModelConfig& cfg, nn::Initializer& init);

  BranchOutputs forward(const Tensor& image, Mode mode);
  // Score of branch i from its trunk feature alone.
  Tensor branch_score(std::size_t branch, const Tensor& feature);
  void collect(nn::ParameterSet& params, nn::ParameterSet& buffers);

  std::array<nn::ConvBlock, 4> trunk;
  std::array<nn::ConvBlock, 4> heads;
};

struct ForwardOptions {
  // Replaces every skip feature with zeros (ablation / wiring checks).
  bool zero_skips = false;
};

class HanModel {
 public:
  HanModel(const ModelConfig& cfg, std::uint64_t seed);
  // Tensors are shared handles, so a copy would silently alias parameters.
  HanModel(const HanModel&) = delete;
  HanModel& operator=(const HanModel&) = delete;
  HanModel(HanModel&&) = default;

  const ModelConfig& config() const { return config_; }

  StagedOutputs transfer_forward(const Tensor& source, Mode mode, ForwardOptions opts = {});
  BranchOutputs discriminate(const Tensor& image, Mode mode);

  // Views aliasing the live tensors.
  nn::ParameterSet& generator_parameters() { return gen_params_; }
  nn::ParameterSet& discriminator_parameters() { return disc_params_; }
  nn::ParameterSet& buffers() { return buffers_; }

  Encoder encoder;
  StagedDecoder decoder;
  HierarchicalDiscriminator discriminator;

 private:
  void check_image(const Tensor& x, const char* what) const;

  ModelConfig config_;
  nn::ParameterSet gen_params_;
  nn::ParameterSet disc_params_;
  nn::ParameterSet buffers_;
};

}  // namespace han
