#include "han/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "han/errors.hpp"
#include "han/random.hpp"

namespace han {

namespace fs = std::filesystem;

namespace {

std::string real_text(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Real targets_lambda_w(const std::vector<GlyphPair>& pairs) {
  std::vector<Tensor> targets;
  targets.reserve(pairs.size());
  for (const auto& p : pairs) targets.push_back(p.target.pixels);
  return compute_lambda_w(targets);
}

std::vector<GlyphImage> evaluation_inputs(const std::vector<GlyphPair>& pairs, const TrainConfig& cfg) {
  std::vector<GlyphImage> inputs;
  inputs.reserve(pairs.size());
  for (const auto& p : pairs) {
    inputs.push_back(cfg.mode == TrainMode::Restoration
                         ? restoration_input(p.target, cfg.mask_coverage, cfg.seed, 0)
                         : p.source);
  }
  return inputs;
}

ModelEvaluation evaluate_model(HanModel& model, const std::vector<GlyphPair>& pairs,
                               const TrainConfig& cfg) {
  if (pairs.empty()) throw UsageError("cannot evaluate an empty pair set");
  ModelEvaluation ev;
  ev.inputs = evaluation_inputs(pairs, cfg);
  std::vector<const GlyphImage*> ptrs;
  for (const auto& g : ev.inputs) ptrs.push_back(&g);
  ev.generated = infer_glyphs(model, ptrs);
  std::vector<Tensor> targets;
  std::vector<std::string> ids;
  for (const auto& p : pairs) {
    targets.push_back(p.target.pixels);
    ids.push_back(p.id());
  }
  ev.report = evaluate(ev.generated, targets, ids);
  return ev;
}

void write_comparison_grid(const ModelEvaluation& ev, const std::vector<GlyphPair>& pairs,
                           std::size_t columns, const fs::path& path) {
  const std::size_t n = std::min(columns, pairs.size());
  GridRow in{"input", {}}, gen{"generated", {}}, tgt{"target", {}};
  for (std::size_t i = 0; i < n; ++i) {
    in.images.push_back(ev.inputs[i].pixels);
    gen.images.push_back(ev.generated[i]);
    tgt.images.push_back(pairs[i].target.pixels);
  }
  emit_grid({in, gen, tgt}, path);
}

std::vector<BenchRow> run_bench(const CorpusSplit& split, const TrainConfig& base, std::size_t seeds,
                                std::size_t eval_every, const fs::path& out) {
  if (seeds == 0) throw UsageError("bench needs at least one seed");
  if (eval_every == 0) throw UsageError("eval_every must be at least 1");
  const Real lambda_w = targets_lambda_w(split.train);
  const std::uint64_t hash = corpus_hash(split.train);
  fs::create_directories(out / "curves");
  std::vector<BenchRow> rows;
  for (std::size_t k = 0; k < seeds; ++k) {
    for (auto variant : {DiscriminatorVariant::Hierarchical, DiscriminatorVariant::Single}) {
      TrainConfig cfg = base;
      cfg.variant = variant;
      cfg.seed = base.seed + k;
      const std::string tag = (variant == DiscriminatorVariant::Hierarchical ? "han" : "san") +
                              std::string("_seed") + std::to_string(cfg.seed);
      Trainer trainer(cfg, split.train, lambda_w, hash);
      Series curve;
      ModelEvaluation last;
      auto record = [&] {
        last = evaluate_model(trainer.model(), split.train, cfg);
        curve.emplace_back(static_cast<Real>(trainer.step()), last.report.rmse);
      };
      record();
      trainer.run(out / "runs" / tag, [&](Trainer& t, const TrainLogRecord&) {
        if (t.step() % eval_every == 0 || t.step() == t.total_steps()) record();
        return true;
      });
      curve_export("rmse", curve, out / "curves" / (tag + ".csv"));
      rows.push_back({to_string(variant), cfg.seed, trainer.step(), last.report.rmse, last.report.apdr});
    }
  }
  std::ofstream os(out / "summary.csv", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (out / "summary.csv").string());
  os << "variant,seed,steps,final_train_rmse,final_train_apdr\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << r.seed << ',' << r.steps << ',' << real_text(r.final_rmse) << ','
       << real_text(r.final_apdr) << '\n';
  }
  return rows;
}

std::vector<SweepRow> run_sweep(const CorpusSplit& split, const TrainConfig& cfg,
                                const std::vector<double>& fractions, const fs::path& out) {
  if (fractions.empty()) throw UsageError("sweep needs at least one fraction");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw UsageError("sweep fractions must lie in (0, 1]");
  }
  if (split.test.empty()) throw UsageError("sweep needs a non-empty test split");
  const auto order = epoch_order(split.train.size(), derive_seed({cfg.seed, 0x7377656570ULL}), 0);
  std::vector<SweepRow> rows;
  for (double f : fractions) {
    const auto count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(f * static_cast<double>(split.train.size()))));
    std::vector<GlyphPair> subset;
    for (std::size_t i = 0; i < count; ++i) subset.push_back(split.train[order[i]]);
    Trainer trainer(cfg, subset, targets_lambda_w(subset), corpus_hash(subset));
    trainer.run(out / "runs" / ("fraction_" + real_text(f)));
    const auto ev = evaluate_model(trainer.model(), split.test, cfg);
    rows.push_back({f, count, ev.report.rmse, ev.report.apdr});
  }
  fs::create_directories(out);
  std::ofstream os(out / "sweep.csv", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (out / "sweep.csv").string());
  os << "fraction,train_count,test_rmse,test_apdr\n";
  for (const auto& r : rows) {
    os << real_text(r.fraction) << ',' << r.train_count << ',' << real_text(r.test_rmse) << ','
       << real_text(r.test_apdr) << '\n';
  }
  return rows;
}

bool sweep_is_monotone(const std::vector<SweepRow>& rows) {
  std::vector<SweepRow> sorted = rows;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.fraction < b.fraction; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].test_rmse > sorted[i - 1].test_rmse) return false;
  }
  return true;
}

}  // namespace han
