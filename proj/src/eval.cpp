#include "han/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "han/data.hpp"
#include "han/errors.hpp"

namespace han {

namespace {

void check_pair(const Tensor& g, const Tensor& t, const char* what) {
  if (g.shape() != t.shape()) {
    throw ShapeError(std::string(what) + " shape mismatch: " + shape_to_string(g.shape()) + " vs " +
                     shape_to_string(t.shape()));
  }
}

// Splits along the leading axis (a rank-2 tensor is one image).
template <typename Fn>
Real mean_over_images(const Tensor& g, const Tensor& t, Fn&& fn) {
  const std::size_t count = g.rank() > 2 ? g.dim(0) : 1;
  const std::size_t per = g.numel() / count;
  Real s = 0;
  for (std::size_t i = 0; i < count; ++i) {
    s += fn(g.data().subspan(i * per, per), t.data().subspan(i * per, per));
  }
  return s / static_cast<Real>(count);
}

template <typename Fn>
Real mean_over_list(const std::vector<Tensor>& g, const std::vector<Tensor>& t, Fn&& fn,
                    const char* what) {
  if (g.empty()) throw UsageError(std::string(what) + " of an empty image set");
  if (g.size() != t.size()) throw ShapeError(std::string(what) + " image counts differ");
  Real s = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    check_pair(g[i], t[i], what);
    s += fn(g[i].data(), t[i].data());
  }
  return s / static_cast<Real>(g.size());
}

std::string format_real(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Real image_rmse(std::span<const Real> g, std::span<const Real> t) {
  Real s = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Real d = 255.0 * (g[i] - t[i]);
    s += d * d;
  }
  return std::sqrt(s / static_cast<Real>(g.size()));
}

Real image_apdr(std::span<const Real> g, std::span<const Real> t, Real threshold) {
  std::size_t differ = 0;
  for (std::size_t i = 0; i < g.size(); ++i) differ += (g[i] >= threshold) != (t[i] >= threshold);
  return static_cast<Real>(differ) / static_cast<Real>(g.size());
}

Real rmse(const Tensor& generated, const Tensor& target) {
  check_pair(generated, target, "rmse");
  return mean_over_images(generated, target, image_rmse);
}

Real rmse(const std::vector<Tensor>& generated, const std::vector<Tensor>& target) {
  return mean_over_list(generated, target, image_rmse, "rmse");
}

Real apdr(const Tensor& generated, const Tensor& target, Real threshold) {
  check_pair(generated, target, "apdr");
  return mean_over_images(generated, target,
                          [threshold](auto g, auto t) { return image_apdr(g, t, threshold); });
}

Real apdr(const std::vector<Tensor>& generated, const std::vector<Tensor>& target, Real threshold) {
  return mean_over_list(
      generated, target, [threshold](auto g, auto t) { return image_apdr(g, t, threshold); }, "apdr");
}

MetricReport evaluate(const std::vector<Tensor>& generated, const std::vector<Tensor>& target,
                      const std::vector<std::string>& ids) {
  if (generated.empty()) throw UsageError("evaluate of an empty image set");
  if (generated.size() != target.size() || ids.size() != generated.size()) {
    throw ShapeError("evaluate: generated, target and id counts differ");
  }
  MetricReport report;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    check_pair(generated[i], target[i], "evaluate");
    ImageMetrics m{ids[i], image_rmse(generated[i].data(), target[i].data()),
                   image_apdr(generated[i].data(), target[i].data())};
    report.rmse += m.rmse;
    report.apdr += m.apdr;
    report.per_image.push_back(std::move(m));
  }
  report.rmse /= static_cast<Real>(generated.size());
  report.apdr /= static_cast<Real>(generated.size());
  return report;
}

void write_metric_report(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "id,rmse,apdr\n";
  for (const auto& m : report.per_image) {
    os << m.id << ',' << format_real(m.rmse) << ',' << format_real(m.apdr) << '\n';
  }
  os << "mean," << format_real(report.rmse) << ',' << format_real(report.apdr) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

void emit_grid(const std::vector<GridRow>& rows, const std::filesystem::path& path) {
  if (rows.empty() || rows.front().images.empty()) throw UsageError("emit_grid needs at least one image");
  const std::size_t cols = rows.front().images.size();
  const Tensor& first = rows.front().images.front();
  const std::size_t th = first.dim(first.rank() - 2), tw = first.dim(first.rank() - 1);
  for (const auto& r : rows) {
    if (r.images.size() != cols) throw ShapeError("emit_grid rows must have equal length");
    for (const auto& img : r.images) {
      if (img.numel() != th * tw) throw ShapeError("emit_grid tiles must share one extent");
    }
  }
  GrayImage grid;
  grid.width = cols * tw + (cols - 1) * kGridSeparator;
  grid.height = rows.size() * th + (rows.size() - 1) * kGridSeparator;
  grid.pixels.assign(grid.width * grid.height, 128);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto bytes = to_bytes(rows[r].images[c].data());
      const std::size_t oy = r * (th + kGridSeparator), ox = c * (tw + kGridSeparator);
      for (std::size_t y = 0; y < th; ++y) {
        std::copy_n(bytes.begin() + y * tw, tw, grid.pixels.begin() + (oy + y) * grid.width + ox);
      }
    }
  }
  write_png(path, grid);
  auto label_path = path;
  label_path += ".txt";
  std::ofstream os(label_path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + label_path.string());
  for (const auto& r : rows) os << r.label << '\n';
}

void curve_export(const std::string& name, const Series& series, const std::filesystem::path& path) {
  if (series.empty()) throw UsageError("curve_export of an empty series '" + name + "'");
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (!(series[i].first > series[i - 1].first)) {
      throw UsageError("curve '" + name + "' x values must be strictly increasing");
    }
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "x," << name << '\n';
  for (const auto& [x, y] : series) os << format_real(x) << ',' << format_real(y) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

Series read_curve(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);  // header
  Series out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError("malformed curve row in " + path.string());
    out.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
  }
  return out;
}

}  // namespace han
