#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "han/tensor.hpp"

namespace han {

struct ImageMetrics {
  std::string id;
  Real rmse = 0;
  Real apdr = 0;
};

// Aggregates are means of the per-image values.
struct MetricReport {
  Real rmse = 0;  // 0-255 pixel scale
  Real apdr = 0;  // [0, 1]
  std::vector<ImageMetrics> per_image;
};

// Per image sqrt(mean((255 (g - t))^2)); mean over images. Images are the
// leading-axis slices of equal-shape tensors.
Real rmse(const Tensor& generated, const Tensor& target);
Real rmse(const std::vector<Tensor>& generated, const std::vector<Tensor>& target);
// Per image fraction of pixels with 1{g >= th} != 1{t >= th}; mean over images.
Real apdr(const Tensor& generated, const Tensor& target, Real threshold = 0.5);
Real apdr(const std::vector<Tensor>& generated, const std::vector<Tensor>& target,
          Real threshold = 0.5);

Real image_rmse(std::span<const Real> g, std::span<const Real> t);
Real image_apdr(std::span<const Real> g, std::span<const Real> t, Real threshold = 0.5);

MetricReport evaluate(const std::vector<Tensor>& generated, const std::vector<Tensor>& target,
                      const std::vector<std::string>& ids);
void write_metric_report(const std::filesystem::path& path, const MetricReport& report);

struct GridRow {
  std::string label;
  std::vector<Tensor> images;  // each [.., h, w] with equal extents
};

inline constexpr std::size_t kGridSeparator = 2;

// Composite PNG: rows top to bottom, 2-pixel separators, labels in
// `path` + ".txt" (one per row).
void emit_grid(const std::vector<GridRow>& rows, const std::filesystem::path& path);

using Series = std::vector<std::pair<Real, Real>>;

// Two-column CSV "x,<name>" with x strictly increasing.
void curve_export(const std::string& name, const Series& series, const std::filesystem::path& path);
Series read_curve(const std::filesystem::path& path);

}  // namespace han
