#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "han/checkpoint.hpp"
#include "han/errors.hpp"
#include "han/train.hpp"

using namespace han;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.base_channels = 4;
  cfg.batch_size = 2;
  cfg.steps = 3;
  cfg.seed = 5;
  return cfg;
}

std::vector<GlyphPair> tiny_corpus(std::size_t n = 4) { return synth_corpus(n, parse_style("thicken"), 2); }

std::uint64_t hash_params(const nn::ParameterSet& set) {
  std::uint64_t h = fnv1a64("");
  for (const auto& [name, t] : set) {
    const auto d = t.data();
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(d.data()), d.size_bytes()), h);
  }
  return h;
}

bool same_params(const nn::ParameterSet& a, const nn::ParameterSet& b) {
  auto it = b.begin();
  for (const auto& [name, t] : a) {
    if (!std::equal(t.data().begin(), t.data().end(), it->second.data().begin())) return false;
    ++it;
  }
  return true;
}

Real lambda_w_of(const std::vector<GlyphPair>& pairs) {
  std::vector<Tensor> t;
  for (const auto& p : pairs) t.push_back(p.target.pixels);
  return compute_lambda_w(t);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) { fs::remove_all(path); }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("config key=value round trip and overrides") {
  TrainConfig cfg;
  cfg.apply_kv("# comment\nmode = restoration\nvariant=single\nschedule=fixed\nlearning_rate=0.001\n\nseed=42\n");
  CHECK(cfg.mode == TrainMode::Restoration);
  CHECK(cfg.variant == DiscriminatorVariant::Single);
  CHECK(cfg.learning_rate == 0.001);
  cfg.set("seed", "7");  // a later setting wins, as a CLI flag does over the file
  CHECK(cfg.seed == 7);
  auto back = TrainConfig::from_kv(cfg.to_kv());
  CHECK(back.to_kv() == cfg.to_kv());
  for (const auto& k : TrainConfig::keys()) CHECK(back.get(k) == cfg.get(k));
  CHECK_THROWS_AS(cfg.set("bogus", "1"), UsageError);
  CHECK_THROWS_AS(cfg.set("steps", "-3"), UsageError);
  CHECK_THROWS_AS(cfg.set("learning_rate", "fast"), UsageError);
  CHECK_THROWS_AS(cfg.apply_kv("novalue\n"), UsageError);
  TrainConfig defaults;
  CHECK(defaults.batch_size == 16);
  CHECK(defaults.learning_rate == 2e-4);
  CHECK(defaults.adam_beta1 == 0.5);
  CHECK(defaults.adam_beta2 == 0.999);
  CHECK(defaults.lambda_p == 1.0);
  CHECK(defaults.lambda_a == 1.0);
  defaults.mode = TrainMode::SoftPaired;
  CHECK(defaults.effective_lambda_p() == 0.0);
}

TEST_CASE("adam update rules") {
  nn::ParameterSet set;
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
  set.add("p", p);
  Adam opt(set, 0.01, 0.5, 0.999);

  SUBCASE("zero gradient leaves parameters unchanged") {
    opt.step();
    CHECK(p.data()[0] == 1.0);
    CHECK(p.data()[1] == -2.0);
  }
  SUBCASE("first step moves by about -lr * sign(g)") {
    p.impl()->accumulate_grad(std::vector<Real>{3.0, -0.2, 1e-3});
    opt.step();
    CHECK(p.data()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p.data()[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(p.data()[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-4));
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("moments decay under zero gradients") {
    p.impl()->accumulate_grad(std::vector<Real>{1.0, 1.0, 1.0});
    opt.step();
    p.clear_grad();
    const Real m0 = opt.first_moments()[0][0], v0 = opt.second_moments()[0][0];
    for (int i = 0; i < 10; ++i) opt.step();
    CHECK(opt.first_moments()[0][0] < m0);
    CHECK(opt.second_moments()[0][0] < v0);
    CHECK(opt.first_moments()[0][0] == doctest::Approx(m0 * std::pow(0.5, 10)));
  }
}

TEST_CASE("phases never touch the other network") {
  auto pairs = tiny_corpus();
  HanModel model(tiny_config().model_config(), 3);
  Adam g(model.generator_parameters(), 1e-3, 0.5, 0.999), d(model.discriminator_parameters(), 1e-3, 0.5, 0.999);
  const Tensor input = stack_glyphs(std::vector<GlyphImage>{pairs[0].source, pairs[1].source});
  const Tensor target = stack_glyphs(std::vector<GlyphImage>{pairs[0].target, pairs[1].target});
  StepWeights w;
  w.lambda_w = 0.8;
  LossReport report;
  const auto pass = generator_pass(model, input);

  const auto gen_before = hash_params(model.generator_parameters());
  const auto dis_before = hash_params(model.discriminator_parameters());
  discriminator_update(model, d, pass, target, w, report);
  CHECK(hash_params(model.generator_parameters()) == gen_before);
  const auto dis_after = hash_params(model.discriminator_parameters());
  CHECK(dis_after != dis_before);

  generator_update(model, g, pass, target, w, report);
  CHECK(hash_params(model.discriminator_parameters()) == dis_after);
  CHECK(hash_params(model.generator_parameters()) != gen_before);
}

TEST_CASE("soft-paired pixel term carries no generator gradient") {
  auto pairs = tiny_corpus();
  const Tensor input = stack_glyphs(std::vector<GlyphImage>{pairs[0].source, pairs[1].source});
  const Tensor target_a = stack_glyphs(std::vector<GlyphImage>{pairs[0].target, pairs[1].target});
  const Tensor target_b = stack_glyphs(std::vector<GlyphImage>{pairs[2].target, pairs[3].target});
  TrainConfig cfg = tiny_config();
  cfg.mode = TrainMode::SoftPaired;
  const StepWeights w = step_weights(cfg, 0.8, 0);
  CHECK(w.lambda_p == 0.0);

  // The generator phase sees the target only through the pixel term.
  HanModel a(cfg.model_config(), 4), b(cfg.model_config(), 4);
  Adam ga(a.generator_parameters(), 1e-3, 0.5, 0.999), gb(b.generator_parameters(), 1e-3, 0.5, 0.999);
  LossReport ra, rb;
  generator_update(a, ga, generator_pass(a, input), target_a, w, ra);
  generator_update(b, gb, generator_pass(b, input), target_b, w, rb);
  CHECK(ra.pixel != rb.pixel);
  CHECK(same_params(a.generator_parameters(), b.generator_parameters()));
}

TEST_CASE("SAN reports every branch but weights only the last") {
  TrainConfig cfg = tiny_config();
  cfg.variant = DiscriminatorVariant::Single;
  cfg.schedule = WeightSchedule::Fixed;
  const StepWeights w = step_weights(cfg, 0.8, 0);
  CHECK(w.branch == BranchValues{0, 0, 0, 2.5});
  auto pairs = tiny_corpus();
  Trainer tr(cfg, pairs, lambda_w_of(pairs), corpus_hash(pairs));
  auto rec = tr.advance();
  for (std::size_t i = 0; i < 3; ++i) CHECK(rec.losses.gen_i[i] > 0.0);
  CHECK(rec.losses.total_gen ==
        doctest::Approx(rec.losses.pixel + 2.5 * rec.losses.gen_i[3]).epsilon(1e-12));
}

TEST_CASE("log records satisfy the loss bookkeeping") {
  for (auto variant : {DiscriminatorVariant::Hierarchical, DiscriminatorVariant::Single}) {
    TrainConfig cfg = tiny_config();
    cfg.variant = variant;
    cfg.lambda_a = 0.7;
    auto pairs = tiny_corpus();
    Trainer tr(cfg, pairs, lambda_w_of(pairs), corpus_hash(pairs));
    for (int s = 0; s < 2; ++s) {
      const auto rec = tr.advance();
      const auto w = step_weights(cfg, tr.lambda_w(), rec.epoch);
      CHECK(std::abs(rec.losses.total_gen - (w.lambda_p * rec.losses.pixel +
                                             w.lambda_a * total_adversarial(rec.losses.gen_i, w.branch))) < 1e-6);
      CHECK(std::abs(rec.losses.total_dis - total_adversarial(rec.losses.dis_i, w.branch)) < 1e-6);
    }
  }
}

TEST_CASE("one step changes parameters") {
  auto pairs = tiny_corpus();
  Trainer tr(tiny_config(), pairs, lambda_w_of(pairs), corpus_hash(pairs));
  const auto before = hash_params(tr.model().generator_parameters());
  tr.advance();
  CHECK(hash_params(tr.model().generator_parameters()) != before);
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  LossReport r;
  r.gen_i[2] = std::numeric_limits<Real>::quiet_NaN();
  try {
    check_finite(r, 12);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 12") != std::string::npos);
    CHECK(msg.find("gen_3") != std::string::npos);
  }
}

TEST_CASE("zero steps writes only the initial checkpoint") {
  TempDir dir("han_train_zero");
  TrainConfig cfg = tiny_config();
  cfg.steps = 0;
  auto pairs = tiny_corpus();
  Trainer tr(cfg, pairs, lambda_w_of(pairs), corpus_hash(pairs));
  tr.run(dir.path);
  CHECK(fs::exists(dir.path / "checkpoint.bin"));
  CHECK(read_log(dir.path / "log.csv").empty());
  auto ckpt = read_checkpoint(dir.path / "checkpoint.bin");
  CHECK(ckpt.step == 0);
  CHECK(ckpt.corpus_hash == corpus_hash(pairs));
  CHECK(TrainConfig::from_kv(ckpt.config).to_kv() == cfg.to_kv());
}

TEST_CASE("resume then continue equals an uninterrupted run") {
  TempDir full("han_train_full"), part("han_train_part");
  auto pairs = tiny_corpus(5);  // odd size: partial batch and an epoch boundary
  const Real lw = lambda_w_of(pairs);
  TrainConfig cfg = tiny_config();
  cfg.steps = 4;
  cfg.mode = TrainMode::Restoration;
  {
    Trainer a(cfg, pairs, lw, corpus_hash(pairs));
    a.run(full.path);
  }
  {
    TrainConfig first = cfg;
    first.steps = 3;
    Trainer b(first, pairs, lw, corpus_hash(pairs));
    b.run(part.path);
  }
  Trainer c(cfg, pairs, lw, corpus_hash(pairs));
  c.resume(read_checkpoint(part.path / "checkpoint.bin"));
  CHECK(c.step() == 3);
  c.run(part.path);

  Trainer ref(cfg, pairs, lw, corpus_hash(pairs));
  ref.resume(read_checkpoint(full.path / "checkpoint.bin"));
  CHECK(same_params(ref.model().generator_parameters(), c.model().generator_parameters()));
  CHECK(same_params(ref.model().discriminator_parameters(), c.model().discriminator_parameters()));
  CHECK(same_params(ref.model().buffers(), c.model().buffers()));
  CHECK(slurp(full.path / "log.csv") == slurp(part.path / "log.csv"));

  Trainer wrong(cfg, tiny_corpus(4), lw, corpus_hash(tiny_corpus(4)));
  CHECK_THROWS_AS(wrong.resume(read_checkpoint(part.path / "checkpoint.bin")), UsageError);
}

TEST_CASE("epochs override steps") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  auto pairs = tiny_corpus(5);
  Trainer tr(cfg, pairs, lambda_w_of(pairs), corpus_hash(pairs));
  CHECK(tr.batches_per_epoch() == 3);
  CHECK(tr.total_steps() == 9);
}

TEST_CASE("restoration inputs are masked targets, re-drawn per epoch") {
  auto pairs = tiny_corpus(1);
  std::vector<Real> ones(kGlyphPixels, 1.0);
  auto full = GlyphImage::make("x", ones);
  auto e0 = restoration_input(full, 0.3, 1, 0), again = restoration_input(full, 0.3, 1, 0);
  auto e1 = restoration_input(full, 0.3, 1, 1);
  auto zeros = [](const GlyphImage& g) {
    return std::count(g.pixels.data().begin(), g.pixels.data().end(), 0.0);
  };
  CHECK(std::abs(zeros(e0) / 4096.0 - 0.3) <= 0.02);
  CHECK(std::equal(e0.pixels.data().begin(), e0.pixels.data().end(), again.pixels.data().begin()));
  CHECK_FALSE(std::equal(e0.pixels.data().begin(), e0.pixels.data().end(), e1.pixels.data().begin()));
}

TEST_CASE("inference is deterministic and inside (0,1)") {
  auto pairs = tiny_corpus();
  Trainer tr(tiny_config(), pairs, lambda_w_of(pairs), corpus_hash(pairs));
  tr.advance();
  const Checkpoint ckpt = tr.snapshot();
  const Tensor x = stack_glyphs(std::vector<GlyphImage>{pairs[0].source, pairs[1].source, pairs[2].source});
  const Tensor a = transfer_infer(ckpt, x);
  const Tensor b = transfer_infer(ckpt, x);
  CHECK(a.shape() == x.shape());
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  for (Real v : a.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  // chunking does not change results
  HanModel m = load_model(ckpt);
  const Tensor c = transfer_infer(m, x, 2);
  CHECK(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
}

TEST_CASE("pure regression lowers the pixel loss steadily") {
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 4;
  cfg.steps = 200;
  cfg.lambda_a = 0.0;
  cfg.learning_rate = 1e-3;
  auto pairs = tiny_corpus(4);
  Trainer tr(cfg, pairs, lambda_w_of(pairs), corpus_hash(pairs));
  std::vector<Real> pixel;
  while (tr.step() < cfg.steps) pixel.push_back(tr.advance().losses.pixel);
  std::vector<Real> windows;
  for (std::size_t b = 0; b + 20 <= pixel.size(); b += 20) {
    Real s = 0;
    for (std::size_t i = b; i < b + 20; ++i) s += pixel[i] / 20;
    windows.push_back(s);
  }
  for (std::size_t i = 1; i < windows.size(); ++i) CHECK(windows[i] <= windows[i - 1]);
}

TEST_CASE("log rows round trip") {
  TrainLogRecord r;
  r.step = 12;
  r.epoch = 3;
  r.losses.pixel = 0.1234567890123;
  r.losses.gen_i = {1, 2, 3, 4.5};
  r.losses.dis_i = {-1, -2, -3, -4.25};
  r.losses.total_gen = 9.75;
  r.losses.total_dis = -0.5;
  const std::string row = format_log_row(r);
  CHECK(format_log_row(parse_log_row(row)) == row);
  CHECK_THROWS_AS(parse_log_row("1,2,3"), IoError);
}
