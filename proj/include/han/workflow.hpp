#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "han/data.hpp"
#include "han/eval.hpp"
#include "han/train.hpp"

namespace han {

// lambda_w over the targets of `pairs`.
Real targets_lambda_w(const std::vector<GlyphPair>& pairs);

// Network inputs for evaluation: sources, or for restoration the targets with
// the fixed epoch-0 mask.
std::vector<GlyphImage> evaluation_inputs(const std::vector<GlyphPair>& pairs, const TrainConfig& cfg);

struct ModelEvaluation {
  MetricReport report;
  std::vector<GlyphImage> inputs;
  std::vector<Tensor> generated;
};

ModelEvaluation evaluate_model(HanModel& model, const std::vector<GlyphPair>& pairs,
                               const TrainConfig& cfg);

// Rows: input, generated, target for the first `columns` pairs.
void write_comparison_grid(const ModelEvaluation& ev, const std::vector<GlyphPair>& pairs,
                           std::size_t columns, const std::filesystem::path& path);

struct BenchRow {
  std::string variant;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  Real final_rmse = 0;
  Real final_apdr = 0;
};

// Trains HAN and SAN for seeds base.seed .. base.seed + seeds - 1 with equal
// steps, recording train RMSE every `eval_every` steps. Writes
// <out>/runs/<variant>_seed<k>/, <out>/curves/<variant>_seed<k>.csv and
// <out>/summary.csv.
std::vector<BenchRow> run_bench(const CorpusSplit& split, const TrainConfig& base, std::size_t seeds,
                                std::size_t eval_every, const std::filesystem::path& out);

struct SweepRow {
  double fraction = 0;
  std::size_t train_count = 0;
  Real test_rmse = 0;
  Real test_apdr = 0;
};

// Trains on growing seeded subsets of the train split and scores the full
// test split. Writes <out>/sweep.csv and <out>/runs/fraction_<f>/.
std::vector<SweepRow> run_sweep(const CorpusSplit& split, const TrainConfig& cfg,
                                const std::vector<double>& fractions, const std::filesystem::path& out);

// True when test RMSE never increases as the fraction grows.
bool sweep_is_monotone(const std::vector<SweepRow>& rows);

}  // namespace han
