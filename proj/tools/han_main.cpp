// han: command-line front end for data preparation, training, inference,
// restoration, evaluation, the HAN-vs-SAN benchmark and the data-size sweep.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "han/data.hpp"
#include "han/errors.hpp"
#include "han/eval.hpp"
#include "han/runtime.hpp"
#include "han/train.hpp"
#include "han/workflow.hpp"

namespace fs = std::filesystem;
using namespace han;

namespace {

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

std::string real_text(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Reads key=value lines and turns them into --key=value arguments.
std::vector<std::string> config_arguments(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::vector<std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    const std::string t = line.substr(b, e - b + 1);
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = t.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::string value = t.substr(eq + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    out.push_back("--" + dashed(key) + "=" + value);
  }
  return out;
}

// Splices the contents of --config into the argument list right after the
// subcommand, so explicit flags (which come later) take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::vector<std::string> from_file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" && i + 1 < args.size()) {
      auto extra = config_arguments(args[++i]);
      from_file.insert(from_file.end(), extra.begin(), extra.end());
    } else if (a.rfind("--config=", 0) == 0) {
      auto extra = config_arguments(a.substr(9));
      from_file.insert(from_file.end(), extra.begin(), extra.end());
    } else {
      out.push_back(a);
    }
  }
  if (!from_file.empty() && !out.empty()) out.insert(out.begin() + 1, from_file.begin(), from_file.end());
  return out;
}

void add_config_flag(CLI::App* cmd) {
  cmd->add_option("--config", "key=value file; any flag of this command may appear as a key, "
                              "explicit flags win");
}

// One flag per TrainConfig key; values are applied after parsing.
struct TrainFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* cmd, const TrainConfig& defaults) {
    static const std::map<std::string, std::string> help{
        {"mode", "strong_paired | soft_paired | restoration"},
        {"variant", "hierarchical | single"},
        {"schedule", "branch weights: fixed | decayed | depth_decayed"},
        {"batch_size", "pairs per step"},
        {"steps", "training steps"},
        {"epochs", "when > 0, train this many epochs instead of --steps"},
        {"learning_rate", "optimizer step size"},
        {"adam_beta1", "first-moment decay"},
        {"adam_beta2", "second-moment decay"},
        {"adam_epsilon", "optimizer denominator offset"},
        {"seed", "seed for initialization, batch order and masks"},
        {"checkpoint_every", "steps between checkpoints (0: final only)"},
        {"log_every", "steps between log rows"},
        {"lambda_p", "pixel loss weight"},
        {"lambda_a", "adversarial loss weight"},
        {"classic_dis_loss", "use the conventional discriminator loss sign"},
        {"mask_coverage", "restoration mask area fraction"},
        {"base_channels", "width of the first convolution"},
        {"clock", "none | wall (wall fills the seconds column)"},
    };
    for (const auto& key : TrainConfig::keys()) {
      values[key] = defaults.get(key);
      auto it = help.find(key);
      options[key] = cmd->add_option("--" + dashed(key), values[key], it == help.end() ? "" : it->second)
                         ->capture_default_str();
    }
  }

  TrainConfig resolve(TrainConfig cfg) const {
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) cfg.set(key, values.at(key));
    }
    cfg.validate();
    return cfg;
  }
};

std::vector<GlyphImage> load_image_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<GlyphImage> out;
  for (const auto& f : files) out.push_back(load_glyph(f, f.stem().string()));
  return out;
}

std::vector<GlyphPair> pick_split(const CorpusSplit& split, const std::string& which) {
  if (which == "train") return split.train;
  if (which == "test") return split.test;
  if (which == "all") {
    auto all = split.train;
    all.insert(all.end(), split.test.begin(), split.test.end());
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.id() < b.id(); });
    return all;
  }
  throw UsageError("--split must be train, test or all");
}

void write_glyphs(const fs::path& dir, const std::vector<std::string>& ids, const std::vector<Tensor>& images) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < ids.size(); ++i) save_glyph(dir / (ids[i] + ".png"), images[i]);
}

// --- prepare -------------------------------------------------------------------

struct PrepareArgs {
  std::string source_dir, target_dir, out, style = "thicken";
  std::size_t synthetic = 0;
  double ratio = 0.5;
  std::uint64_t seed = 0;
};

int run_prepare(const PrepareArgs& a) {
  const bool real = !a.source_dir.empty() || !a.target_dir.empty();
  if (real == (a.synthetic > 0)) {
    throw UsageError("give either --source-dir and --target-dir or --synthetic N");
  }
  if (real && (a.source_dir.empty() || a.target_dir.empty())) {
    throw UsageError("--source-dir and --target-dir must be given together");
  }
  if (!(a.ratio > 0.0 && a.ratio < 1.0)) throw UsageError("--ratio must lie in (0, 1)");
  const fs::path out(a.out);
  fs::create_directories(out);

  std::vector<GlyphPair> pairs;
  std::map<std::string, std::pair<fs::path, fs::path>> paths;
  if (real) {
    auto load = load_corpus(a.source_dir, a.target_dir);
    for (const auto& w : load.warnings) std::cerr << "warning: " << w << '\n';
    pairs = std::move(load.pairs);
    for (const auto& p : pairs) {
      paths[p.id()] = {fs::absolute(fs::path(a.source_dir) / (p.id() + ".png")),
                       fs::absolute(fs::path(a.target_dir) / (p.id() + ".png"))};
    }
  } else {
    const auto style = parse_style(a.style);
    pairs = synth_corpus(a.synthetic, style, a.seed);
    fs::create_directories(out / "source");
    fs::create_directories(out / "target");
    for (const auto& p : pairs) {
      const fs::path s = fs::path("source") / (p.id() + ".png");
      const fs::path t = fs::path("target") / (p.id() + ".png");
      save_glyph(out / s, p.source.pixels);
      save_glyph(out / t, p.target.pixels);
      paths[p.id()] = {s, t};
    }
  }
  if (pairs.empty()) throw UsageError("no glyph pairs found");

  const CorpusSplit split = split_corpus(pairs, a.ratio, a.seed);
  std::vector<ManifestEntry> entries;
  for (const auto* part : {&split.train, &split.test}) {
    for (const auto& p : *part) {
      const auto& [s, t] = paths.at(p.id());
      entries.push_back({p.id(), s, t, part == &split.train ? "train" : "test"});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  write_manifest(out / "manifest.tsv", entries);

  // Stats come from the files as written, which is what training will read.
  const CorpusSplit saved = load_manifest_split(out / "manifest.tsv");
  std::cout << "pairs " << saved.train.size() + saved.test.size() << '\n'
            << "train " << saved.train.size() << '\n'
            << "test " << saved.test.size() << '\n'
            << "lambda_w " << real_text(targets_lambda_w(saved.train)) << '\n'
            << "manifest " << (out / "manifest.tsv").string() << '\n';
  return 0;
}

// --- train ---------------------------------------------------------------------

int run_train(const std::string& manifest, const std::string& out_dir, bool resume, const TrainConfig& cfg) {
  const CorpusSplit split = load_manifest_split(manifest);
  if (split.train.empty()) throw UsageError("manifest has no train pairs");
  const fs::path out(out_dir);
  Trainer trainer(cfg, split.train, targets_lambda_w(split.train), corpus_hash(split.train));
  if (resume) {
    const fs::path ckpt = out / "checkpoint.bin";
    if (!fs::exists(ckpt)) throw IoError("nothing to resume: " + ckpt.string() + " not found");
    trainer.resume(read_checkpoint(ckpt));
  }
  fs::create_directories(out);
  {
    std::ofstream os(out / "config.txt", std::ios::trunc);
    if (!os) throw IoError("cannot write " + (out / "config.txt").string());
    os << cfg.to_kv();
  }
  trainer.run(out);
  std::cout << "steps " << trainer.step() << '\n'
            << "lambda_w " << real_text(trainer.lambda_w()) << '\n'
            << "checkpoint " << (out / "checkpoint.bin").string() << '\n'
            << "log " << (out / "log.csv").string() << '\n';
  return 0;
}

// --- infer / restore -----------------------------------------------------------

struct InputArgs {
  std::string checkpoint, input_dir, manifest, split = "test", out;
};

void attach_inputs(CLI::App* cmd, InputArgs& a) {
  cmd->add_option("--checkpoint", a.checkpoint, "trained checkpoint")->required();
  auto* dir = cmd->add_option("--input-dir", a.input_dir, "directory of 64x64 PNG glyphs");
  auto* man = cmd->add_option("--manifest", a.manifest, "manifest written by prepare");
  dir->excludes(man);
  cmd->add_option("--split", a.split, "manifest split to use: train | test | all")->capture_default_str();
  cmd->add_option("--out", a.out, "output directory")->required();
}

// Glyphs from --input-dir, or the manifest split's sources (or targets).
std::vector<GlyphImage> gather_inputs(const InputArgs& a, bool use_targets) {
  if (a.input_dir.empty() == a.manifest.empty()) throw UsageError("give one of --input-dir or --manifest");
  if (!a.input_dir.empty()) return load_image_dir(a.input_dir);
  std::vector<GlyphImage> out;
  for (const auto& p : pick_split(load_manifest_split(a.manifest), a.split)) {
    out.push_back(use_targets ? p.target : p.source);
  }
  return out;
}

int run_infer(const InputArgs& a) {
  const auto inputs = gather_inputs(a, false);
  if (inputs.empty()) throw UsageError("no input glyphs");
  HanModel model = load_model(read_checkpoint(a.checkpoint));
  std::vector<const GlyphImage*> ptrs;
  std::vector<std::string> ids;
  for (const auto& g : inputs) {
    ptrs.push_back(&g);
    ids.push_back(g.id);
  }
  write_glyphs(a.out, ids, infer_glyphs(model, ptrs));
  std::cout << "generated " << inputs.size() << '\n';
  return 0;
}

int run_restore(const InputArgs& a, double coverage, std::uint64_t seed) {
  const auto clean = gather_inputs(a, true);
  if (clean.empty()) throw UsageError("no input glyphs");
  HanModel model = load_model(read_checkpoint(a.checkpoint));
  std::vector<GlyphImage> masked;
  std::vector<std::string> ids;
  std::vector<Tensor> masked_pixels;
  for (const auto& g : clean) {
    masked.push_back(restoration_input(g, coverage, seed, 0));
    ids.push_back(g.id);
    masked_pixels.push_back(masked.back().pixels);
  }
  std::vector<const GlyphImage*> ptrs;
  for (const auto& g : masked) ptrs.push_back(&g);
  const fs::path out(a.out);
  write_glyphs(out, ids, infer_glyphs(model, ptrs));
  write_glyphs(out / "masked", ids, masked_pixels);
  std::cout << "restored " << clean.size() << '\n';
  return 0;
}

// --- eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string generated_dir, target_dir, checkpoint, manifest, split = "test", out;
  std::size_t grid_columns = 8;
};

int run_eval(const EvalArgs& a) {
  const bool dirs = !a.generated_dir.empty() || !a.target_dir.empty();
  const bool model = !a.checkpoint.empty() || !a.manifest.empty();
  if (dirs == model) throw UsageError("give --generated-dir/--target-dir or --checkpoint/--manifest");
  const fs::path out(a.out);
  fs::create_directories(out);
  MetricReport report;
  if (dirs) {
    if (a.generated_dir.empty() || a.target_dir.empty()) {
      throw UsageError("--generated-dir and --target-dir must be given together");
    }
    auto load = load_corpus(a.generated_dir, a.target_dir);
    for (const auto& w : load.warnings) std::cerr << "warning: " << w << '\n';
    if (load.pairs.empty()) throw UsageError("no matching generated/target images");
    std::vector<Tensor> gen, tgt;
    std::vector<std::string> ids;
    for (const auto& p : load.pairs) {
      gen.push_back(p.source.pixels);
      tgt.push_back(p.target.pixels);
      ids.push_back(p.id());
    }
    report = evaluate(gen, tgt, ids);
    const std::size_t n = std::min(a.grid_columns, load.pairs.size());
    GridRow g{"generated", {gen.begin(), gen.begin() + static_cast<long>(n)}};
    GridRow t{"target", {tgt.begin(), tgt.begin() + static_cast<long>(n)}};
    emit_grid({g, t}, out / "grid.png");
  } else {
    if (a.checkpoint.empty() || a.manifest.empty()) {
      throw UsageError("--checkpoint and --manifest must be given together");
    }
    const Checkpoint ckpt = read_checkpoint(a.checkpoint);
    const TrainConfig cfg = TrainConfig::from_kv(ckpt.config);
    HanModel m = load_model(ckpt);
    const auto pairs = pick_split(load_manifest_split(a.manifest), a.split);
    const auto ev = evaluate_model(m, pairs, cfg);
    report = ev.report;
    write_comparison_grid(ev, pairs, a.grid_columns, out / "grid.png");
  }
  write_metric_report(out / "metrics.csv", report);
  std::cout << "images " << report.per_image.size() << '\n'
            << "rmse " << real_text(report.rmse) << '\n'
            << "apdr " << real_text(report.apdr) << '\n';
  return 0;
}

// --- bench / sweep -------------------------------------------------------------

int run_bench_command(const std::string& manifest, const std::string& out, std::size_t seeds,
                      std::size_t eval_every, const TrainConfig& cfg) {
  const CorpusSplit split = load_manifest_split(manifest);
  if (split.train.empty()) throw UsageError("manifest has no train pairs");
  const auto rows = run_bench(split, cfg, seeds, eval_every, out);
  std::size_t wins = 0;
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
    std::cout << "seed " << rows[i].seed << ": " << rows[i].variant << " " << real_text(rows[i].final_rmse)
              << ", " << rows[i + 1].variant << " " << real_text(rows[i + 1].final_rmse) << '\n';
    if (rows[i].final_rmse <= rows[i + 1].final_rmse) ++wins;
  }
  std::cout << "hierarchical <= single in " << wins << " of " << rows.size() / 2 << " seeds\n"
            << "summary " << (fs::path(out) / "summary.csv").string() << '\n';
  return 0;
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw UsageError("invalid fraction '" + item + "'");
    out.push_back(v);
  }
  return out;
}

int run_sweep_command(const std::string& manifest, const std::string& out, const std::string& fraction_list,
                      const TrainConfig& cfg) {
  const auto fractions = parse_fractions(fraction_list);
  const CorpusSplit split = load_manifest_split(manifest);
  const auto rows = run_sweep(split, cfg, fractions, out);
  for (const auto& r : rows) {
    std::cout << "fraction " << real_text(r.fraction) << ": train " << r.train_count << ", test rmse "
              << real_text(r.test_rmse) << ", test apdr " << real_text(r.test_apdr) << '\n';
  }
  const bool monotone = sweep_is_monotone(rows);
  std::ofstream os(fs::path(out) / "trend.txt", std::ios::trunc);
  os << "monotone " << (monotone ? "yes" : "no") << '\n';
  std::cout << "test rmse non-increasing in fraction: " << (monotone ? "yes" : "no") << '\n';
  return 0;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Hierarchical adversarial glyph transfer: prepare, train, infer, restore, eval, bench, sweep"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "build a glyph-pair manifest from directories or synthesis");
  add_config_flag(prepare);
  prepare->add_option("--source-dir", prep.source_dir, "directory of source-typeface PNGs");
  prepare->add_option("--target-dir", prep.target_dir, "directory of target-typeface PNGs (matched by name)");
  prepare->add_option("--synthetic", prep.synthetic, "generate N synthetic pairs instead");
  prepare->add_option("--style", prep.style, "synthetic target style, e.g. thicken, shear:0.2+thicken")
      ->capture_default_str();
  prepare->add_option("--out", prep.out, "output directory")->required();
  prepare->add_option("--ratio", prep.ratio, "fraction of pairs in the train split")->capture_default_str();
  prepare->add_option("--seed", prep.seed, "seed for synthesis and the split")->capture_default_str();

  const TrainConfig defaults;
  std::string train_manifest, train_out;
  bool resume = false;
  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "train the transfer network and discriminator");
  add_config_flag(train);
  train->add_option("--manifest", train_manifest, "manifest written by prepare")->required();
  train->add_option("--out", train_out, "run directory (log.csv, checkpoint.bin, config.txt)")->required();
  train->add_flag("--resume", resume, "continue from <out>/checkpoint.bin");
  train_flags.attach(train, defaults);

  InputArgs infer_args;
  auto* infer = app.add_subcommand("infer", "generate target-style glyphs with a checkpoint");
  add_config_flag(infer);
  attach_inputs(infer, infer_args);

  InputArgs restore_args;
  double coverage = 0.3;
  std::uint64_t restore_seed = 0;
  auto* restore = app.add_subcommand("restore", "mask glyphs and reconstruct them with a checkpoint");
  add_config_flag(restore);
  attach_inputs(restore, restore_args);
  restore->add_option("--coverage", coverage, "masked area fraction")->capture_default_str();
  restore->add_option("--seed", restore_seed, "mask seed")->capture_default_str();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "score generated glyphs against targets (rmse, apdr)");
  add_config_flag(eval);
  eval->add_option("--generated-dir", eval_args.generated_dir, "directory of generated PNGs");
  eval->add_option("--target-dir", eval_args.target_dir, "directory of target PNGs (matched by name)");
  eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint to generate with");
  eval->add_option("--manifest", eval_args.manifest, "manifest whose split is scored");
  eval->add_option("--split", eval_args.split, "train | test | all")->capture_default_str();
  eval->add_option("--grid-columns", eval_args.grid_columns, "glyphs shown in grid.png")->capture_default_str();
  eval->add_option("--out", eval_args.out, "output directory (metrics.csv, grid.png)")->required();

  TrainConfig bench_defaults = defaults;
  bench_defaults.schedule = WeightSchedule::Fixed;
  std::string bench_manifest, bench_out;
  std::size_t seeds = 3, eval_every = 100;
  TrainFlags bench_flags;
  auto* bench = app.add_subcommand("bench", "train hierarchical and single-branch models over matched seeds");
  add_config_flag(bench);
  bench->add_option("--manifest", bench_manifest, "manifest written by prepare")->required();
  bench->add_option("--out", bench_out, "output directory (summary.csv, curves/, runs/)")->required();
  bench->add_option("--seeds", seeds, "number of seeds, starting at --seed")->capture_default_str();
  bench->add_option("--eval-every", eval_every, "steps between train-RMSE curve points")->capture_default_str();
  bench_flags.attach(bench, bench_defaults);

  std::string sweep_manifest, sweep_out;
  std::string fractions = "0.25,0.5,0.75,1";
  TrainFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep", "train on growing fractions of the train split");
  add_config_flag(sweep);
  sweep->add_option("--manifest", sweep_manifest, "manifest written by prepare")->required();
  sweep->add_option("--out", sweep_out, "output directory (sweep.csv, trend.txt, runs/)")->required();
  sweep->add_option("--fractions", fractions, "comma-separated fractions in (0, 1]")->capture_default_str();
  sweep_flags.attach(sweep, defaults);

  std::vector<std::string> args(argv + 1, argv + argc);
  args = expand_config(args);
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  configure_threads();
  if (*prepare) return run_prepare(prep);
  if (*train) return run_train(train_manifest, train_out, resume, train_flags.resolve(defaults));
  if (*infer) return run_infer(infer_args);
  if (*restore) return run_restore(restore_args, coverage, restore_seed);
  if (*eval) return run_eval(eval_args);
  if (*bench) return run_bench_command(bench_manifest, bench_out, seeds, eval_every, bench_flags.resolve(bench_defaults));
  if (*sweep) return run_sweep_command(sweep_manifest, sweep_out, fractions, sweep_flags.resolve(defaults));
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
