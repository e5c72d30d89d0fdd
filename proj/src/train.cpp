#include "han/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "han/errors.hpp"
#include "han/ops.hpp"
#include "han/random.hpp"

namespace han {

namespace fs = std::filesystem;

// --- optimizer -------------------------------------------------------------

Adam::Adam(nn::ParameterSet& params, Real lr, Real beta1, Real beta2, Real eps)
    : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& [name, t] : params) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const Real bc1 = 1.0 - std::pow(beta1_, static_cast<Real>(t_));
  const Real bc2 = 1.0 - std::pow(beta2_, static_cast<Real>(t_));
  std::size_t k = 0;
  for (auto& [name, p] : *params_) {
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    const auto g = p.grad();
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Real gi = g.empty() ? 0.0 : g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      data[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

void Adam::store(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.counters[prefix + ".step"] = t_;
  std::size_t k = 0;
  for (const auto& [name, p] : *params_) {
    ckpt.tensors.emplace_back(prefix + ".m." + name, Tensor::from_data(p.shape(), m_[k]));
    ckpt.tensors.emplace_back(prefix + ".v." + name, Tensor::from_data(p.shape(), v_[k]));
    ++k;
  }
}

void Adam::restore(const Checkpoint& ckpt, const std::string& prefix) {
  auto it = ckpt.counters.find(prefix + ".step");
  if (it == ckpt.counters.end()) throw UsageError("checkpoint has no optimizer state " + prefix);
  t_ = it->second;
  std::size_t k = 0;
  for (const auto& [name, p] : *params_) {
    for (auto [tag, dst] : {std::pair{".m.", &m_[k]}, std::pair{".v.", &v_[k]}}) {
      const Tensor* src = ckpt.find(prefix + tag + name);
      if (!src || src->shape() != p.shape()) {
        throw UsageError("checkpoint optimizer state " + prefix + tag + name + " missing or mis-shaped");
      }
      dst->assign(src->data().begin(), src->data().end());
    }
    ++k;
  }
}

// --- one step ----------------------------------------------------------------

StepWeights step_weights(const TrainConfig& cfg, Real lambda_w, std::size_t epoch) {
  StepWeights w;
  w.lambda_w = lambda_w;
  w.lambda_p = cfg.effective_lambda_p();
  w.lambda_a = cfg.lambda_a;
  w.branch = effective_branch_weights(cfg.variant, branch_weight_schedule(cfg.schedule, epoch));
  w.classic = cfg.classic_dis_loss;
  return w;
}

GeneratorPass generator_pass(HanModel& model, const Tensor& input) {
  GeneratorPass pass;
  pass.outputs = model.transfer_forward(input, Mode::Train);
  pass.fakes = {upsample_nearest(pass.outputs.t1, 4), upsample_nearest(pass.outputs.t2, 2),
                pass.outputs.t3};
  return pass;
}

namespace {

// Scores of all fakes, one [3n] tensor per branch.
BranchTensors fake_scores(HanModel& model, const std::array<Tensor, 3>& fakes, bool detach) {
  std::array<std::vector<Tensor>, 4> parts;
  for (const auto& f : fakes) {
    auto d = model.discriminate(detach ? f.detach() : f, Mode::Train);
    for (std::size_t i = 0; i < 4; ++i) parts[i].push_back(d.scores[i]);
  }
  BranchTensors out;
  for (std::size_t i = 0; i < 4; ++i) out[i] = concat(parts[i], 0);
  return out;
}

BranchValues values(const BranchTensors& t) {
  return {t[0].item(), t[1].item(), t[2].item(), t[3].item()};
}

}  // namespace

Tensor discriminator_objective(HanModel& model, const GeneratorPass& pass, const Tensor& target,
                              const StepWeights& w, LossReport& report) {
  const BranchTensors real = model.discriminate(target, Mode::Train).scores;
  const BranchTensors fake = fake_scores(model, pass.fakes, true);
  const BranchTensors dis = discriminator_branch_losses(real, fake, w.classic);
  Tensor total = total_adversarial(dis, w.branch);
  report.dis_i = values(dis);
  report.total_dis = total.item();
  return total;
}

Tensor generator_objective(HanModel& model, const GeneratorPass& pass, const Tensor& target,
                           const StepWeights& w, LossReport& report) {
  Tensor pixel = pixel_loss(pass.outputs.t3_logits, target, w.lambda_w);
  const BranchTensors gen = generator_branch_losses(fake_scores(model, pass.fakes, false));
  Tensor adv = total_adversarial(gen, w.branch);
  Tensor total = add(scale(pixel, w.lambda_p), scale(adv, w.lambda_a));
  report.pixel = pixel.item();
  report.gen_i = values(gen);
  report.total_gen = total.item();
  return total;
}

void discriminator_update(HanModel& model, Adam& opt, const GeneratorPass& pass,
                          const Tensor& target, const StepWeights& w, LossReport& report) {
  model.discriminator_parameters().clear_grads();
  discriminator_objective(model, pass, target, w, report).backward();
  opt.step();
  model.discriminator_parameters().clear_grads();
}

void generator_update(HanModel& model, Adam& opt, const GeneratorPass& pass, const Tensor& target,
                      const StepWeights& w, LossReport& report) {
  model.generator_parameters().clear_grads();
  model.discriminator_parameters().clear_grads();
  generator_objective(model, pass, target, w, report).backward();
  opt.step();
  model.discriminator_parameters().clear_grads();
  model.generator_parameters().clear_grads();
}

LossReport train_step(HanModel& model, Adam& gen_opt, Adam& dis_opt, const Tensor& input,
                      const Tensor& target, const StepWeights& w) {
  LossReport report;
  const GeneratorPass pass = generator_pass(model, input);
  discriminator_update(model, dis_opt, pass, target, w, report);
  generator_update(model, gen_opt, pass, target, w, report);
  return report;
}

void check_finite(const LossReport& r, std::size_t step) {
  auto check = [step](const std::string& term, Real v) {
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite loss at step " << step << ": " << term << " = " << v;
      throw NumericalError(os.str());
    }
  };
  check("pixel", r.pixel);
  for (std::size_t i = 0; i < 4; ++i) {
    check("gen_" + std::to_string(i + 1), r.gen_i[i]);
    check("dis_" + std::to_string(i + 1), r.dis_i[i]);
  }
  check("total_gen", r.total_gen);
  check("total_dis", r.total_dis);
}

// --- logs ------------------------------------------------------------------

std::string format_log_row(const TrainLogRecord& r) {
  std::string row = std::to_string(r.step) + "," + std::to_string(r.epoch);
  auto put = [&row](Real v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    row += buf;
  };
  put(r.losses.pixel);
  for (Real v : r.losses.gen_i) put(v);
  for (Real v : r.losses.dis_i) put(v);
  put(r.losses.total_gen);
  put(r.losses.total_dis);
  put(r.seconds);
  return row;
}

TrainLogRecord parse_log_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() != 14) throw IoError("malformed log row: " + line);
  TrainLogRecord r;
  try {
    r.step = std::stoull(f[0]);
    r.epoch = std::stoull(f[1]);
    r.losses.pixel = std::stod(f[2]);
    for (std::size_t i = 0; i < 4; ++i) {
      r.losses.gen_i[i] = std::stod(f[3 + i]);
      r.losses.dis_i[i] = std::stod(f[7 + i]);
    }
    r.losses.total_gen = std::stod(f[11]);
    r.losses.total_dis = std::stod(f[12]);
    r.seconds = std::stod(f[13]);
  } catch (const std::logic_error&) {
    throw IoError("malformed log row: " + line);
  }
  return r;
}

std::vector<TrainLogRecord> read_log(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open log " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != kLogHeader) throw IoError("unexpected log header in " + path.string());
  std::vector<TrainLogRecord> rows;
  while (std::getline(is, line)) {
    if (!line.empty()) rows.push_back(parse_log_row(line));
  }
  return rows;
}

// --- trainer ---------------------------------------------------------------

std::uint64_t corpus_hash(const std::vector<GlyphPair>& pairs) {
  std::uint64_t h = fnv1a64("han-corpus");
  for (const auto& p : pairs) {
    h = fnv1a64(p.id(), h);
    for (const GlyphImage* g : {&p.source, &p.target}) {
      const auto d = g->pixels.data();
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(d.data()), d.size_bytes()), h);
    }
  }
  return h;
}

MaskSpec restoration_mask(const std::string& id, Real coverage, std::uint64_t seed, std::size_t epoch) {
  return make_mask(coverage, derive_seed({seed, 0x726573746f7265ULL, epoch, fnv1a64(id)}));
}

GlyphImage restoration_input(const GlyphImage& target, Real coverage, std::uint64_t seed,
                             std::size_t epoch) {
  return apply_mask(target, restoration_mask(target.id, coverage, seed, epoch));
}

Trainer::Trainer(TrainConfig cfg, std::vector<GlyphPair> train, Real lambda_w,
                 std::uint64_t corpus_hash)
    : cfg_(std::move(cfg)),
      train_(std::move(train)),
      lambda_w_(lambda_w),
      corpus_hash_(corpus_hash),
      model_(cfg_.model_config(), derive_seed({cfg_.seed, 0x6d6f64656cULL})) {
  cfg_.validate();
  if (train_.empty()) throw UsageError("training set is empty");
  gen_opt_ = Adam(model_.generator_parameters(), cfg_.learning_rate, cfg_.adam_beta1,
                  cfg_.adam_beta2, cfg_.adam_epsilon);
  dis_opt_ = Adam(model_.discriminator_parameters(), cfg_.learning_rate, cfg_.adam_beta1,
                  cfg_.adam_beta2, cfg_.adam_epsilon);
  if (lambda_w_ < 0) {
    std::cerr << "warning: lambda_w = " << lambda_w_
              << " is negative (positive pixels outnumber negative ones)\n";
  }
}

std::size_t Trainer::batches_per_epoch() const {
  return (train_.size() + cfg_.batch_size - 1) / cfg_.batch_size;
}

std::size_t Trainer::total_steps() const {
  return cfg_.epochs > 0 ? cfg_.epochs * batches_per_epoch() : cfg_.steps;
}

Batch Trainer::batch_for(std::size_t step) const {
  const std::size_t bpe = batches_per_epoch();
  const std::size_t epoch = step / bpe;
  BatchIterator it(train_, cfg_.batch_size, cfg_.seed, epoch);
  if (cfg_.mode != TrainMode::Restoration) return it.batch(step % bpe);
  Batch b;
  std::vector<GlyphImage> inputs;
  std::vector<const GlyphImage*> targets;
  for (std::size_t i : it.indices(step % bpe)) {
    b.ids.push_back(train_[i].id());
    inputs.push_back(restoration_input(train_[i].target, cfg_.mask_coverage, cfg_.seed, epoch));
    targets.push_back(&train_[i].target);
  }
  b.source = stack_glyphs(inputs);
  b.target = stack_glyphs(targets);
  return b;
}

TrainLogRecord Trainer::advance() {
  const std::size_t epoch = step_ / batches_per_epoch();
  const StepWeights w = step_weights(cfg_, lambda_w_, epoch);
  const Batch b = batch_for(step_);
  TrainLogRecord rec;
  try {
    rec.losses = train_step(model_, gen_opt_, dis_opt_, b.source, b.target, w);
  } catch (const NumericalError& e) {
    throw NumericalError("non-finite values at step " + std::to_string(step_ + 1) + ": " + e.what());
  }
  ++step_;
  rec.step = step_;
  rec.epoch = epoch;
  check_finite(rec.losses, rec.step);
  return rec;
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.step = step_;
  ckpt.corpus_hash = corpus_hash_;
  ckpt.config = cfg_.to_kv();
  ckpt.counters["step"] = step_;
  ckpt.tensors.emplace_back("meta.lambda_w", Tensor::from_data({1}, {lambda_w_}));
  auto& model = const_cast<HanModel&>(model_);
  store_tensors(ckpt, "gen", model.generator_parameters());
  store_tensors(ckpt, "dis", model.discriminator_parameters());
  store_tensors(ckpt, "buf", model.buffers());
  gen_opt_.store(ckpt, "adam_gen");
  dis_opt_.store(ckpt, "adam_dis");
  return ckpt;
}

void Trainer::resume(const Checkpoint& ckpt) {
  const TrainConfig saved = TrainConfig::from_kv(ckpt.config);
  if (saved.base_channels != cfg_.base_channels) {
    throw UsageError("checkpoint base_channels " + std::to_string(saved.base_channels) +
                     " does not match config " + std::to_string(cfg_.base_channels));
  }
  if (ckpt.corpus_hash != corpus_hash_) {
    throw UsageError("checkpoint was trained on a different corpus");
  }
  restore_tensors(ckpt, "gen", model_.generator_parameters());
  restore_tensors(ckpt, "dis", model_.discriminator_parameters());
  restore_tensors(ckpt, "buf", model_.buffers());
  gen_opt_.restore(ckpt, "adam_gen");
  dis_opt_.restore(ckpt, "adam_dis");
  if (const Tensor* lw = ckpt.find("meta.lambda_w")) lambda_w_ = lw->item();
  step_ = ckpt.step;
}

void Trainer::run(const fs::path& out_dir, const Observer& observer) {
  fs::create_directories(out_dir);
  const fs::path log_path = out_dir / "log.csv";
  const fs::path ckpt_path = out_dir / "checkpoint.bin";

  // Keep rows up to the resume point, drop anything written after it.
  std::vector<std::string> kept;
  if (step_ > 0 && fs::exists(log_path)) {
    for (const auto& r : read_log(log_path)) {
      if (r.step <= step_) kept.push_back(format_log_row(r));
    }
  }
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write log " + log_path.string());
  log << kLogHeader << '\n';
  for (const auto& row : kept) log << row << '\n';
  log.flush();

  const auto start = std::chrono::steady_clock::now();
  const std::size_t total = total_steps();
  while (step_ < total) {
    TrainLogRecord rec = advance();
    if (cfg_.clock == "wall") {
      rec.seconds = std::chrono::duration<Real>(std::chrono::steady_clock::now() - start).count();
    }
    if (rec.step % cfg_.log_every == 0) {
      log << format_log_row(rec) << '\n';
      log.flush();
      if (!log) throw IoError("failed writing log " + log_path.string());
    }
    if (cfg_.checkpoint_every > 0 && rec.step % cfg_.checkpoint_every == 0) {
      write_checkpoint(ckpt_path, snapshot());
    }
    if (observer && !observer(*this, rec)) break;
  }
  write_checkpoint(ckpt_path, snapshot());
}

// --- inference ---------------------------------------------------------------

HanModel load_model(const Checkpoint& ckpt) {
  const TrainConfig cfg = TrainConfig::from_kv(ckpt.config);
  HanModel model(cfg.model_config(), 0);
  restore_tensors(ckpt, "gen", model.generator_parameters());
  restore_tensors(ckpt, "buf", model.buffers());
  if (ckpt.find("dis." + model.discriminator_parameters().begin()->first)) {
    restore_tensors(ckpt, "dis", model.discriminator_parameters());
  }
  return model;
}

Tensor transfer_infer(HanModel& model, const Tensor& images, std::size_t batch) {
  if (images.rank() != 4) throw ShapeError("transfer_infer expects [n,1,64,64], got " + shape_to_string(images.shape()));
  NoGradGuard guard;
  const std::size_t n = images.dim(0);
  const std::size_t per = images.numel() / n;
  std::vector<Real> out;
  out.reserve(images.numel());
  for (std::size_t begin = 0; begin < n; begin += batch) {
    const std::size_t len = std::min(batch, n - begin);
    auto slice = images.data().subspan(begin * per, len * per);
    Shape shape = images.shape();
    shape[0] = len;
    Tensor chunk = Tensor::from_data(shape, std::vector<Real>(slice.begin(), slice.end()));
    Tensor t3 = model.transfer_forward(chunk, Mode::Eval).t3;
    out.insert(out.end(), t3.data().begin(), t3.data().end());
  }
  return Tensor::from_data(images.shape(), std::move(out));
}

Tensor transfer_infer(const Checkpoint& ckpt, const Tensor& images) {
  HanModel model = load_model(ckpt);
  return transfer_infer(model, images);
}

std::vector<Tensor> infer_glyphs(HanModel& model, const std::vector<const GlyphImage*>& inputs) {
  std::vector<Tensor> out;
  if (inputs.empty()) return out;
  const Tensor all = transfer_infer(model, stack_glyphs(inputs));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto d = all.data().subspan(i * kGlyphPixels, kGlyphPixels);
    out.push_back(Tensor::from_data({1, kGlyphSize, kGlyphSize}, std::vector<Real>(d.begin(), d.end())));
  }
  return out;
}

}  // namespace han
