#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "han/checkpoint.hpp"
#include "han/data.hpp"
#include "han/losses.hpp"
#include "han/model.hpp"

namespace han {

enum class TrainMode { StrongPaired, SoftPaired, Restoration };

std::string to_string(TrainMode m);
TrainMode parse_train_mode(const std::string& s);

// Every field has a key=value spelling (see `keys()`); `set` parses one.
struct TrainConfig {
  TrainMode mode = TrainMode::StrongPaired;
  DiscriminatorVariant variant = DiscriminatorVariant::Hierarchical;
  WeightSchedule schedule = WeightSchedule::Decayed;
  std::size_t batch_size = 16;
  std::size_t steps = 1000;
  std::size_t epochs = 0;  // when > 0, overrides `steps` with epochs * batches per epoch
  Real learning_rate = 2e-4;
  Real adam_beta1 = 0.5;
  Real adam_beta2 = 0.999;
  Real adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::size_t log_every = 1;
  Real lambda_p = 1.0;
  Real lambda_a = 1.0;
  bool classic_dis_loss = false;
  Real mask_coverage = 0.3;
  std::size_t base_channels = 64;
  // "none" writes 0 in the seconds column so logs are byte-reproducible.
  std::string clock = "none";

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // key=value lines in `keys()` order.
  std::string to_kv() const;
  // Lines are key=value; blank lines and '#' comments are ignored.
  void apply_kv(const std::string& text);
  static TrainConfig from_kv(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);

  // Pixel weight actually used (soft_paired forces 0).
  Real effective_lambda_p() const { return mode == TrainMode::SoftPaired ? 0.0 : lambda_p; }
  ModelConfig model_config() const;
  void validate() const;
};

// Bias-corrected adaptive-moment optimizer over one parameter set.
class Adam {
 public:
  Adam() = default;
  Adam(nn::ParameterSet& params, Real lr, Real beta1, Real beta2, Real eps = 1e-8);

  // Parameters without a gradient are treated as having gradient zero.
  void step();
  std::uint64_t step_count() const { return t_; }

  void store(Checkpoint& ckpt, const std::string& prefix) const;
  void restore(const Checkpoint& ckpt, const std::string& prefix);

  const std::vector<std::vector<Real>>& first_moments() const { return m_; }
  const std::vector<std::vector<Real>>& second_moments() const { return v_; }

 private:
  nn::ParameterSet* params_ = nullptr;
  Real lr_ = 0, beta1_ = 0, beta2_ = 0, eps_ = 0;
  std::uint64_t t_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

struct StepWeights {
  Real lambda_w = 1.0;
  Real lambda_p = 1.0;
  Real lambda_a = 1.0;
  BranchValues branch{0.5, 0.5, 0.5, 1.0};  // effective weights (SAN already folded in)
  bool classic = false;
};

StepWeights step_weights(const TrainConfig& cfg, Real lambda_w, std::size_t epoch);

struct TrainLogRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossReport losses;
  Real seconds = 0;
};

// The three fakes shown to the discriminator: T1 and T2 nearest-upsampled to
// 64x64, then T3. All stay attached to the generator graph.
struct GeneratorPass {
  StagedOutputs outputs;
  std::array<Tensor, 3> fakes;
};

GeneratorPass generator_pass(HanModel& model, const Tensor& input);

// Scalar losses of each phase; no gradients or optimizer state are touched.
Tensor discriminator_objective(HanModel& model, const GeneratorPass& pass, const Tensor& target,
                              const StepWeights& w, LossReport& report);
Tensor generator_objective(HanModel& model, const GeneratorPass& pass, const Tensor& target,
                           const StepWeights& w, LossReport& report);

// Discriminator update on real targets vs detached fakes. Fills dis_i/total_dis.
void discriminator_update(HanModel& model, Adam& opt, const GeneratorPass& pass,
                          const Tensor& target, const StepWeights& w, LossReport& report);
// Transfer-network update through the same forward pass. Fills pixel, gen_i, total_gen.
void generator_update(HanModel& model, Adam& opt, const GeneratorPass& pass, const Tensor& target,
                      const StepWeights& w, LossReport& report);

// One "by turns" iteration: discriminator first, then the transfer network.
LossReport train_step(HanModel& model, Adam& gen_opt, Adam& dis_opt, const Tensor& input,
                      const Tensor& target, const StepWeights& w);

// Throws NumericalError naming the step and the offending term.
void check_finite(const LossReport& r, std::size_t step);

inline constexpr const char* kLogHeader =
    "step,epoch,pixel,gen_1,gen_2,gen_3,gen_4,dis_1,dis_2,dis_3,dis_4,total_gen,total_dis,seconds";
std::string format_log_row(const TrainLogRecord& r);
TrainLogRecord parse_log_row(const std::string& line);
std::vector<TrainLogRecord> read_log(const std::filesystem::path& path);

std::uint64_t corpus_hash(const std::vector<GlyphPair>& pairs);

// Restoration inputs: target with a fresh mask per (seed, epoch, id).
MaskSpec restoration_mask(const std::string& id, Real coverage, std::uint64_t seed, std::size_t epoch);
GlyphImage restoration_input(const GlyphImage& target, Real coverage, std::uint64_t seed,
                             std::size_t epoch);

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<GlyphPair> train, Real lambda_w, std::uint64_t corpus_hash);
  // The optimizers point into the model's parameter sets.
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const { return cfg_; }
  HanModel& model() { return model_; }
  std::size_t step() const { return step_; }
  std::size_t total_steps() const;
  std::size_t batches_per_epoch() const;
  Real lambda_w() const { return lambda_w_; }
  const std::vector<GlyphPair>& train_pairs() const { return train_; }
  const Adam& generator_optimizer() const { return gen_opt_; }
  const Adam& discriminator_optimizer() const { return dis_opt_; }

  // Runs the next step.
  TrainLogRecord advance();

  Checkpoint snapshot() const;
  void resume(const Checkpoint& ckpt);

  // Called after every completed step; returning false stops the run.
  using Observer = std::function<bool(Trainer&, const TrainLogRecord&)>;

  // Trains to total_steps(), appending log rows to <out>/log.csv and writing
  // <out>/checkpoint.bin periodically and at the end.
  void run(const std::filesystem::path& out_dir, const Observer& observer = {});

 private:
  Batch batch_for(std::size_t step) const;

  TrainConfig cfg_;
  std::vector<GlyphPair> train_;
  Real lambda_w_;
  std::uint64_t corpus_hash_;
  HanModel model_;
  Adam gen_opt_;
  Adam dis_opt_;
  std::size_t step_ = 0;
};

// Rebuilds the model stored in a checkpoint (eval-only use).
HanModel load_model(const Checkpoint& ckpt);

// Eval-mode T3 for [n,1,64,64] inputs, processed in chunks of `batch`.
Tensor transfer_infer(HanModel& model, const Tensor& images, std::size_t batch = 16);
Tensor transfer_infer(const Checkpoint& ckpt, const Tensor& images);

// Per-image T3 for a list of glyphs.
std::vector<Tensor> infer_glyphs(HanModel& model, const std::vector<const GlyphImage*>& inputs);

}  // namespace han
