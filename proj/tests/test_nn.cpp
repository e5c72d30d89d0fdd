#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "han/checkpoint.hpp"
#include "han/errors.hpp"
#include "han/nn.hpp"

using namespace han;
using namespace han::nn;

namespace {

ConvSpec spec_3x3(std::size_t cin, std::size_t cout, Activation act = Activation::Relu) {
  ConvSpec s;
  s.in_channels = cin;
  s.out_channels = cout;
  s.kernel = 3;
  s.stride = 1;
  s.padding = 1;
  s.activation = act;
  return s;
}

bool same_bytes(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a.data()[i] != b.data()[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("initializer is reproducible per seed") {
  Initializer a(42), b(42), c(43);
  auto ba = a.make_block(spec_3x3(3, 4));
  auto bb = b.make_block(spec_3x3(3, 4));
  auto bc = c.make_block(spec_3x3(3, 4));
  CHECK(same_bytes(ba.kernel, bb.kernel));
  CHECK(same_bytes(ba.norm->gamma, bb.norm->gamma));
  CHECK_FALSE(same_bytes(ba.kernel, bc.kernel));
}

TEST_CASE("initializer constants") {
  Initializer init(7);
  auto block = init.make_block(spec_3x3(2, 5));
  for (Real v : block.norm->beta.data()) CHECK(v == 0.0);
  for (Real v : block.bias.data()) CHECK(v == 0.0);
  for (Real v : block.norm->running_mean.data()) CHECK(v == 0.0);
  for (Real v : block.norm->running_var.data()) CHECK(v == 1.0);
  Real gamma_mean = 0;
  for (Real v : block.norm->gamma.data()) gamma_mean += v / 5.0;
  CHECK(gamma_mean == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("kernel sample std near 0.02") {
  Initializer init(2024);
  auto k = init.normal({10000}, 0.0, 0.02);
  Real m = 0, s = 0;
  for (Real v : k.data()) m += v;
  m /= 10000.0;
  for (Real v : k.data()) s += (v - m) * (v - m);
  const Real sd = std::sqrt(s / 9999.0);
  CHECK(sd >= 0.018);
  CHECK(sd <= 0.022);
}

TEST_CASE("pass-through block") {
  ConvSpec s;
  s.in_channels = 1;
  s.out_channels = 1;
  s.kernel = 1;
  s.stride = 1;
  s.padding = 0;
  s.activation = Activation::None;
  Initializer init(1);
  auto block = init.make_block(s);
  block.kernel.mutable_data()[0] = 1.0;
  block.norm->gamma.mutable_data()[0] = 1.0;
  std::mt19937_64 rng(3);
  auto x = testing::random_tensor({2, 1, 5, 5}, rng, -1, 1, false);
  auto y = block.forward(x, Mode::Eval);
  // eval-mode BN with mean 0, var 1 divides by sqrt(1 + eps)
  const Real k = 1.0 / std::sqrt(1.0 + 1e-5);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i] * k).epsilon(1e-12));
}

TEST_CASE("stride-2 block halves extents") {
  ConvSpec s = spec_3x3(2, 3, Activation::Elu);
  s.kernel = 4;
  s.stride = 2;
  s.padding = 1;
  Initializer init(5);
  auto block = init.make_block(s);
  std::mt19937_64 rng(4);
  auto y = block.forward(testing::random_tensor({2, 2, 16, 16}, rng), Mode::Train);
  CHECK(y.shape() == Shape{2, 3, 8, 8});
}

TEST_CASE("block equals hand-composed sequence") {
  for (auto mode : {Mode::Train, Mode::Eval}) {
    Initializer init(9);
    auto block = init.make_block(spec_3x3(2, 3, Activation::Elu));
    block.bias.mutable_data()[1] = 0.3;
    std::mt19937_64 rng(10);
    auto x = testing::random_tensor({2, 2, 6, 6}, rng, -1, 1, false);
    Tensor rm = block.norm->running_mean.clone(), rv = block.norm->running_var.clone();
    auto expected = elu(batchnorm2d(conv2d(x, block.kernel, block.bias, {1, 1}), block.norm->gamma,
                                    block.norm->beta, rm, rv, mode));
    auto got = block.forward(x, mode);
    CHECK(same_bytes(got, expected));
    CHECK(same_bytes(block.norm->running_mean, rm));
  }
}

TEST_CASE("parameter count follows the block layout") {
  auto s = spec_3x3(4, 8);
  Initializer init(1);
  auto block = init.make_block(s);
  CHECK(block.parameter_count() == 8 * 4 * 9 + 8 + 16);
  CHECK(parameter_count(s) == block.parameter_count());
  s.batch_norm = false;
  CHECK(parameter_count(s) == 8 * 4 * 9 + 8);
}

TEST_CASE("block forward is deterministic in eval mode") {
  Initializer init(11);
  auto block = init.make_block(spec_3x3(1, 2));
  std::mt19937_64 rng(12);
  auto x = testing::random_tensor({1, 1, 8, 8}, rng);
  CHECK(same_bytes(block.forward(x, Mode::Eval), block.forward(x, Mode::Eval)));
}

TEST_CASE("parameter set names are unique") {
  ParameterSet set;
  set.add("a", Tensor::zeros({2}));
  CHECK_THROWS_AS(set.add("a", Tensor::zeros({2})), std::logic_error);
  CHECK(set.find("a") != nullptr);
  CHECK(set.find("b") == nullptr);
}

TEST_CASE("save, load, forward is bit-exact") {
  Initializer init(13);
  auto block = init.make_block(spec_3x3(2, 2, Activation::Relu));
  ParameterSet params, buffers;
  register_block("blk", block, params, buffers);
  CHECK(params.size() == 4);
  CHECK(buffers.size() == 2);
  std::mt19937_64 rng(14);
  auto x = testing::random_tensor({1, 2, 6, 6}, rng);
  // populate running stats with something non-trivial
  block.forward(x, Mode::Train);
  auto before = block.forward(x, Mode::Eval);

  Checkpoint ckpt;
  ckpt.step = 17;
  ckpt.config = "k=v";
  ckpt.counters["adam_step"] = 3;
  store_tensors(ckpt, "p", params);
  store_tensors(ckpt, "b", buffers);
  const auto path = std::filesystem::temp_directory_path() / "han_nn_roundtrip.ckpt";
  write_checkpoint(path, ckpt);

  Initializer other(99);
  auto fresh = other.make_block(spec_3x3(2, 2, Activation::Relu));
  ParameterSet p2, b2;
  register_block("blk", fresh, p2, b2);
  auto loaded = read_checkpoint(path);
  CHECK(loaded.step == 17);
  CHECK(loaded.config == "k=v");
  CHECK(loaded.counters.at("adam_step") == 3);
  restore_tensors(loaded, "p", p2);
  restore_tensors(loaded, "b", b2);
  CHECK(same_bytes(fresh.forward(x, Mode::Eval), before));
  std::filesystem::remove(path);
}

TEST_CASE("restore rejects shape mismatch") {
  Initializer init(1);
  auto a = init.make_block(spec_3x3(2, 2));
  auto b = init.make_block(spec_3x3(2, 3));
  ParameterSet pa, ba, pb, bb;
  register_block("blk", a, pa, ba);
  register_block("blk", b, pb, bb);
  Checkpoint ckpt;
  store_tensors(ckpt, "p", pa);
  CHECK_THROWS_AS(restore_tensors(ckpt, "p", pb), UsageError);
}

TEST_CASE("corrupt checkpoint is an I/O error") {
  const auto path = std::filesystem::temp_directory_path() / "han_bad.ckpt";
  {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_checkpoint(path), IoError);
  std::filesystem::remove(path);
}
