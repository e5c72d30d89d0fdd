#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "han/data.hpp"
#include "han/errors.hpp"
#include "han/random.hpp"

namespace han {

namespace {

constexpr int kSize = static_cast<int>(kGlyphSize);
constexpr double kCenter = (kGlyphSize - 1) / 2.0;

struct Point {
  double x, y;
};

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

void draw_polyline(std::vector<Real>& img, const std::vector<Point>& pts, double half_width) {
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      const Point p{x + 0.0, y + 0.0};
      for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (segment_distance(p, pts[i], pts[i + 1]) <= half_width) {
          img[static_cast<std::size_t>(y * kSize + x)] = 1.0;
          break;
        }
      }
    }
  }
}

double sample(std::span<const Real> img, long x, long y) {
  if (x < 0 || y < 0 || x >= kSize || y >= kSize) return 0.0;
  return img[static_cast<std::size_t>(y * kSize + x)];
}

std::vector<Real> morph(std::span<const Real> img, int radius, bool dilation) {
  if (radius <= 0) return {img.begin(), img.end()};
  std::vector<Real> out(img.size());
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      Real acc = dilation ? 0.0 : 1.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (dx * dx + dy * dy > radius * radius) continue;
          // Outside the canvas counts as background for both operations.
          const Real v = sample(img, x + dx, y + dy);
          acc = dilation ? std::max(acc, v) : std::min(acc, v);
        }
      }
      out[static_cast<std::size_t>(y * kSize + x)] = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<Real> dilate(std::span<const Real> img, int radius) { return morph(img, radius, true); }

std::vector<Real> erode(std::span<const Real> img, int radius) { return morph(img, radius, false); }

std::vector<Real> shear(std::span<const Real> img, double factor) {
  // Whole-pixel row shifts, so shear(k) followed by shear(-k) is exact apart
  // from content pushed off the canvas.
  std::vector<Real> out(img.size());
  for (int y = 0; y < kSize; ++y) {
    const long shift = std::lround(factor * (y - kCenter));
    for (int x = 0; x < kSize; ++x) out[static_cast<std::size_t>(y * kSize + x)] = sample(img, x - shift, y);
  }
  return out;
}

std::vector<Real> twist(std::span<const Real> img, double angle) {
  // Swirl: rotation by angle * (1 - r / R) around the centre, nearest sampling.
  const double radius = kGlyphSize / 2.0;
  std::vector<Real> out(img.size());
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      const double dx = x - kCenter, dy = y - kCenter;
      const double r = std::sqrt(dx * dx + dy * dy);
      const double theta = r < radius ? -angle * (1.0 - r / radius) : 0.0;
      const double sx = kCenter + dx * std::cos(theta) - dy * std::sin(theta);
      const double sy = kCenter + dx * std::sin(theta) + dy * std::cos(theta);
      out[static_cast<std::size_t>(y * kSize + x)] = sample(img, std::lround(sx), std::lround(sy));
    }
  }
  return out;
}

std::vector<StyleStep> parse_style(const std::string& spec) {
  std::vector<StyleStep> steps;
  std::stringstream ss(spec);
  std::string token;
  while (std::getline(ss, token, '+')) {
    if (token.empty()) throw UsageError("empty style step in '" + spec + "'");
    std::string name = token;
    std::string amount;
    if (auto colon = token.find(':'); colon != std::string::npos) {
      name = token.substr(0, colon);
      amount = token.substr(colon + 1);
    }
    StyleStep step{};
    if (name == "thicken") {
      step = {StyleKind::Thicken, 1.0};
    } else if (name == "thin") {
      step = {StyleKind::Thin, 1.0};
    } else if (name == "shear") {
      step = {StyleKind::Shear, 0.2};
    } else if (name == "twist") {
      step = {StyleKind::Twist, 0.6};
    } else {
      throw UsageError("unknown style '" + name + "' (thicken|thin|shear|twist)");
    }
    if (!amount.empty()) {
      try {
        step.amount = std::stod(amount);
      } catch (const std::exception&) {
        throw UsageError("bad style amount '" + amount + "'");
      }
    }
    steps.push_back(step);
  }
  if (steps.empty()) throw UsageError("empty style string");
  return steps;
}

std::string describe_style(const std::vector<StyleStep>& steps) {
  std::ostringstream os;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) os << '+';
    switch (steps[i].kind) {
      case StyleKind::Thicken: os << "thicken"; break;
      case StyleKind::Thin: os << "thin"; break;
      case StyleKind::Shear: os << "shear"; break;
      case StyleKind::Twist: os << "twist"; break;
    }
    os << ':' << steps[i].amount;
  }
  return os.str();
}

std::vector<Real> apply_style(std::span<const Real> img, const std::vector<StyleStep>& steps) {
  std::vector<Real> cur(img.begin(), img.end());
  for (const auto& s : steps) {
    switch (s.kind) {
      case StyleKind::Thicken: cur = dilate(cur, static_cast<int>(std::lround(s.amount))); break;
      case StyleKind::Thin: cur = erode(cur, static_cast<int>(std::lround(s.amount))); break;
      case StyleKind::Shear: cur = shear(cur, s.amount); break;
      case StyleKind::Twist: cur = twist(cur, s.amount); break;
    }
  }
  return cur;
}

std::vector<Real> synth_glyph(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Real> img(kGlyphPixels, 0.0);
  const std::size_t strokes = 3 + rng.below(4);
  // Strokes stay inside a margin so thickening and shearing rarely clip.
  auto point = [&] { return Point{rng.uniform(10.0, 53.0), rng.uniform(10.0, 53.0)}; };
  for (std::size_t s = 0; s < strokes; ++s) {
    const double half_width = rng.uniform(1.0, 1.8);
    std::vector<Point> pts;
    if (rng.uniform() < 0.7) {
      const std::size_t n = 2 + rng.below(3);
      for (std::size_t i = 0; i < n; ++i) pts.push_back(point());
    } else {
      const Point c = point();
      const double r = rng.uniform(6.0, 16.0);
      const double start = rng.uniform(0.0, 2 * std::numbers::pi);
      const double sweep = rng.uniform(0.5, 1.5) * std::numbers::pi;
      for (int i = 0; i <= 16; ++i) {
        const double a = start + sweep * i / 16.0;
        pts.push_back({std::clamp(c.x + r * std::cos(a), 4.0, 59.0),
                       std::clamp(c.y + r * std::sin(a), 4.0, 59.0)});
      }
    }
    draw_polyline(img, pts, half_width);
  }
  return img;
}

std::vector<GlyphPair> synth_corpus(std::size_t n, const std::vector<StyleStep>& style,
                                    std::uint64_t seed) {
  if (n == 0) throw UsageError("synthetic corpus size must be at least 1");
  std::vector<GlyphPair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[24];
    std::snprintf(id, sizeof id, "g%05zu", i);
    auto src = synth_glyph(derive_seed({seed, 0x676c797068ULL, i}));
    auto tgt = apply_style(src, style);
    pairs.push_back({GlyphImage::make(id, std::move(src)), GlyphImage::make(id, std::move(tgt))});
  }
  return pairs;
}

}  // namespace han
