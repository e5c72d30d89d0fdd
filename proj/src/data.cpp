#include "han/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "han/checkpoint.hpp"
#include "han/errors.hpp"
#include "han/random.hpp"

namespace han {

namespace fs = std::filesystem;

GlyphImage GlyphImage::make(std::string id, std::vector<Real> values) {
  GlyphImage g{std::move(id), Tensor::from_data({1, kGlyphSize, kGlyphSize}, std::move(values))};
  g.validate();
  return g;
}

void GlyphImage::validate() const {
  if (!pixels.defined() || pixels.shape() != Shape{1, kGlyphSize, kGlyphSize}) {
    throw ShapeError("glyph " + id + " must be [1,64,64]");
  }
  for (Real v : pixels.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("glyph " + id + " has a value outside [0,1]: " + std::to_string(v));
    }
  }
}

CorpusLoad load_corpus(const fs::path& source_dir, const fs::path& target_dir) {
  auto scan = [](const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::map<std::string, fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        files[entry.path().stem().string()] = entry.path();
      }
    }
    return files;
  };
  const auto sources = scan(source_dir);
  const auto targets = scan(target_dir);

  CorpusLoad out;
  for (const auto& [id, path] : sources) {
    auto it = targets.find(id);
    if (it == targets.end()) {
      out.warnings.push_back("source glyph '" + id + "' has no target counterpart; skipped");
      continue;
    }
    out.pairs.push_back({load_glyph(path, id), load_glyph(it->second, id)});
  }
  for (const auto& [id, path] : targets) {
    if (!sources.count(id)) {
      out.warnings.push_back("target glyph '" + id + "' has no source counterpart; skipped");
    }
  }
  if (out.pairs.empty()) {
    throw UsageError("no glyph ids shared between " + source_dir.string() + " and " +
                     target_dir.string());
  }
  return out;
}

CorpusSplit split_corpus(std::vector<GlyphPair> pairs, double ratio, std::uint64_t seed) {
  if (pairs.size() < 2) throw UsageError("split_corpus needs at least 2 pairs");
  if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("split ratio must lie in (0, 1)");
  std::vector<std::pair<std::uint64_t, std::size_t>> keys;
  keys.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    keys.emplace_back(derive_seed({seed, fnv1a64(pairs[i].id())}), i);
  }
  std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return pairs[a.second].id() < pairs[b.second].id();
  });
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(pairs.size())));

  CorpusSplit split;
  split.ratio = ratio;
  split.seed = seed;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    auto& dst = k < n_train ? split.train : split.test;
    dst.push_back(std::move(pairs[keys[k].second]));
  }
  auto by_id = [](const GlyphPair& a, const GlyphPair& b) { return a.id() < b.id(); };
  std::sort(split.train.begin(), split.train.end(), by_id);
  std::sort(split.test.begin(), split.test.end(), by_id);
  return split;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write manifest: " + path.string());
  for (const auto& e : entries) {
    os << e.id << '\t' << e.source.string() << '\t' << e.target.string() << '\t' << e.split << '\n';
  }
  if (!os) throw IoError("failed writing manifest: " + path.string());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 4 || (fields[3] != "train" && fields[3] != "test")) {
      throw UsageError("malformed manifest line " + std::to_string(line_no) + " in " + path.string());
    }
    entries.push_back({fields[0], fields[1], fields[2], fields[3]});
  }
  return entries;
}

CorpusSplit load_manifest_split(const fs::path& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : base / p; };
  CorpusSplit split;
  for (const auto& e : entries) {
    GlyphPair pair{load_glyph(resolve(e.source), e.id), load_glyph(resolve(e.target), e.id)};
    (e.split == "train" ? split.train : split.test).push_back(std::move(pair));
  }
  if (split.train.empty()) throw UsageError("manifest has no train entries: " + manifest_path.string());
  split.ratio = static_cast<double>(split.train.size()) / static_cast<double>(entries.size());
  return split;
}

MaskSpec make_mask(double coverage, std::uint64_t seed) {
  if (!(coverage >= 0.0 && coverage <= 1.0)) throw UsageError("mask coverage must lie in [0, 1]");
  MaskSpec spec{coverage, seed, {}};
  const double target = coverage * static_cast<double>(kGlyphPixels);
  if (target < 0.5) return spec;
  Rng rng(derive_seed({seed, 0x6d61736bULL}));
  const long side = static_cast<long>(kGlyphSize);
  for (int attempt = 0; attempt < 64; ++attempt) {
    // Aspect ratio drawn log-uniformly in [0.6, 1/0.6].
    const double aspect = std::exp(rng.uniform(std::log(0.6), -std::log(0.6)));
    long w = std::clamp(std::lround(std::sqrt(target * aspect)), 1L, side);
    long h = std::clamp(std::lround(target / static_cast<double>(w)), 1L, side);
    if (std::abs(static_cast<double>(w * h) - target) / static_cast<double>(kGlyphPixels) > 0.02) {
      continue;
    }
    spec.region.width = static_cast<std::size_t>(w);
    spec.region.height = static_cast<std::size_t>(h);
    break;
  }
  if (spec.region.area() == 0) {
    const long s = std::clamp(std::lround(std::sqrt(target)), 1L, side);
    spec.region.width = spec.region.height = static_cast<std::size_t>(s);
  }
  spec.region.x = rng.below(kGlyphSize - spec.region.width + 1);
  spec.region.y = rng.below(kGlyphSize - spec.region.height + 1);
  return spec;
}

GlyphImage apply_mask(const GlyphImage& img, const MaskSpec& spec) {
  std::vector<Real> v(img.pixels.data().begin(), img.pixels.data().end());
  const Rect& r = spec.region;
  for (std::size_t y = r.y; y < r.y + r.height && y < kGlyphSize; ++y) {
    for (std::size_t x = r.x; x < r.x + r.width && x < kGlyphSize; ++x) v[y * kGlyphSize + x] = 0.0;
  }
  return GlyphImage::make(img.id, std::move(v));
}

Tensor stack_glyphs(std::span<const GlyphImage* const> images) {
  if (images.empty()) throw ShapeError("cannot stack an empty glyph list");
  std::vector<Real> v;
  v.reserve(images.size() * kGlyphPixels);
  for (const GlyphImage* g : images) v.insert(v.end(), g->pixels.data().begin(), g->pixels.data().end());
  return Tensor::from_data({images.size(), 1, kGlyphSize, kGlyphSize}, std::move(v));
}

Tensor stack_glyphs(const std::vector<GlyphImage>& images) {
  std::vector<const GlyphImage*> ptrs;
  for (const auto& g : images) ptrs.push_back(&g);
  return stack_glyphs(ptrs);
}

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(derive_seed({seed, 0x65706f6368ULL, epoch}));
  rng.shuffle(order.begin(), order.end());
  return order;
}

BatchIterator::BatchIterator(std::span<const GlyphPair> pairs, std::size_t batch_size,
                             std::uint64_t seed, std::size_t epoch)
    : pairs_(pairs), batch_size_(batch_size), order_(epoch_order(pairs.size(), seed, epoch)) {
  if (batch_size == 0) throw UsageError("batch_size must be at least 1");
}

std::size_t BatchIterator::batch_count() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::span<const std::size_t> BatchIterator::indices(std::size_t k) const {
  const std::size_t begin = k * batch_size_;
  if (begin >= order_.size()) throw std::out_of_range("batch index out of range");
  const std::size_t len = std::min(batch_size_, order_.size() - begin);
  return std::span<const std::size_t>(order_).subspan(begin, len);
}

Batch BatchIterator::batch(std::size_t k) const {
  Batch b;
  std::vector<const GlyphImage*> src, tgt;
  for (std::size_t i : indices(k)) {
    b.ids.push_back(pairs_[i].id());
    src.push_back(&pairs_[i].source);
    tgt.push_back(&pairs_[i].target);
  }
  b.source = stack_glyphs(src);
  b.target = stack_glyphs(tgt);
  return b;
}

bool BatchIterator::next(Batch& out) {
  if (cursor_ >= batch_count()) return false;
  out = batch(cursor_++);
  return true;
}

}  // namespace han
