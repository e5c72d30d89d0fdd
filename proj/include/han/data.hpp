#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "han/tensor.hpp"

namespace han {

inline constexpr std::size_t kGlyphSize = 64;
inline constexpr std::size_t kGlyphPixels = kGlyphSize * kGlyphSize;

// One 64x64 single-channel glyph with values in [0, 1].
struct GlyphImage {
  std::string id;
  Tensor pixels;  // [1, 64, 64]

  // Throws ShapeError / std::invalid_argument on extent or range violations.
  static GlyphImage make(std::string id, std::vector<Real> values);
  void validate() const;
};

struct GlyphPair {
  GlyphImage source;
  GlyphImage target;
  const std::string& id() const { return source.id; }
};

// --- image files ---------------------------------------------------------

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

GrayImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const GrayImage& image);

// Byte 0 -> 0.0, byte 255 -> 1.0.
GlyphImage load_glyph(const std::filesystem::path& path, std::string id);
void save_glyph(const std::filesystem::path& path, const Tensor& pixels);
std::vector<std::uint8_t> to_bytes(std::span<const Real> values);

// --- corpus --------------------------------------------------------------

struct CorpusLoad {
  std::vector<GlyphPair> pairs;      // sorted by id
  std::vector<std::string> warnings;  // ids without a counterpart
};

// Pairs PNG files by filename stem.
CorpusLoad load_corpus(const std::filesystem::path& source_dir,
                       const std::filesystem::path& target_dir);

struct CorpusSplit {
  std::vector<GlyphPair> train;
  std::vector<GlyphPair> test;
  double ratio = 0.5;
  std::uint64_t seed = 0;
};

// round(ratio * n) pairs go to train, chosen by a seeded hash of each id, so
// the result depends only on the id set, ratio and seed.
CorpusSplit split_corpus(std::vector<GlyphPair> pairs, double ratio, std::uint64_t seed);

// --- manifest --------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::filesystem::path source;
  std::filesystem::path target;
  std::string split;  // "train" | "test"
};

// One line per id: id<TAB>source-path<TAB>target-path<TAB>split
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
// Loads the images the manifest points at. Relative paths resolve against the
// manifest's directory.
CorpusSplit load_manifest_split(const std::filesystem::path& manifest_path);

// --- masking -------------------------------------------------------------

struct Rect {
  std::size_t x = 0, y = 0, width = 0, height = 0;
  std::size_t area() const { return width * height; }
};

struct MaskSpec {
  double coverage = 0.3;
  std::uint64_t seed = 0;
  Rect region;
};

// Draws an axis-aligned rectangle fully inside the glyph whose area is within
// +-0.02 of `coverage` * 4096.
MaskSpec make_mask(double coverage, std::uint64_t seed);
// Pixels inside the region are set to background 0.
GlyphImage apply_mask(const GlyphImage& img, const MaskSpec& spec);

// --- synthetic corpus ------------------------------------------------------

enum class StyleKind { Thicken, Thin, Shear, Twist };

struct StyleStep {
  StyleKind kind;
  double amount;  // dilation/erosion radius, shear factor or twist angle (radians)
};

// "thicken", "thin:2", "shear:0.2+thicken" ... applied left to right.
std::vector<StyleStep> parse_style(const std::string& spec);
std::string describe_style(const std::vector<StyleStep>& steps);

// Per-pixel transforms on a 64x64 binary-ish image.
std::vector<Real> dilate(std::span<const Real> img, int radius);
std::vector<Real> erode(std::span<const Real> img, int radius);
std::vector<Real> shear(std::span<const Real> img, double factor);
std::vector<Real> twist(std::span<const Real> img, double angle);
std::vector<Real> apply_style(std::span<const Real> img, const std::vector<StyleStep>& steps);

// Random polyline/arc stroke composition rasterized to a binary 64x64 image.
std::vector<Real> synth_glyph(std::uint64_t seed);

std::vector<GlyphPair> synth_corpus(std::size_t n, const std::vector<StyleStep>& style,
                                    std::uint64_t seed);

// --- batching --------------------------------------------------------------

struct Batch {
  std::vector<std::string> ids;
  Tensor source;  // [b,1,64,64]
  Tensor target;  // [b,1,64,64]
};

// Stacks [1,64,64] glyphs into [b,1,64,64].
Tensor stack_glyphs(std::span<const GlyphImage* const> images);
Tensor stack_glyphs(const std::vector<GlyphImage>& images);

// Order of pairs for one epoch, reshuffled per (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, std::size_t epoch);

// Batches of one epoch; the last partial batch is kept.
class BatchIterator {
 public:
  BatchIterator(std::span<const GlyphPair> pairs, std::size_t batch_size, std::uint64_t seed,
                std::size_t epoch);

  std::size_t batch_count() const;
  // Indices into `pairs` for batch k.
  std::span<const std::size_t> indices(std::size_t k) const;
  Batch batch(std::size_t k) const;

  bool next(Batch& out);

 private:
  std::span<const GlyphPair> pairs_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace han
