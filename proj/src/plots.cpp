#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <cctype>
#include <map>
#include <sstream>

#include "lshrom/error.hpp"
#include "lshrom/evaluate.hpp"

namespace lshrom {

Image discrepancy_image(const FieldVariable& f, double scale) {
  Image img;
  img.width = static_cast<std::uint32_t>(f.n_dof);
  img.height = static_cast<std::uint32_t>(f.n_t);
  img.rgb.assign(static_cast<std::size_t>(img.width) * img.height * 3, 255);
  if (!(scale > 0.0)) return img;
  for (std::size_t t = 0; t < f.n_t; ++t) {
    for (std::size_t d = 0; d < f.n_dof; ++d) {
      const double v = std::clamp(f.at(t, d) / scale, -1.0, 1.0);
      const auto fade = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::abs(v))));
      std::uint8_t* px = &img.rgb[(t * f.n_dof + d) * 3];
      if (v >= 0.0) {
        px[1] = fade;
        px[2] = fade;
      } else {
        px[0] = fade;
        px[1] = fade;
      }
    }
  }
  return img;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  if (image.width == 0 || image.height == 0) throw ConfigError("write_png: empty image");
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = image.width;
  png.height = image.height;
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, image.rgb.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw std::runtime_error("cannot write " + path.string() + ": " + msg);
  }
}

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr std::array<Rgb, 6> kPalette{{{{31, 119, 180}}, {{214, 39, 40}}, {{44, 160, 44}},
                                       {{255, 127, 14}}, {{148, 103, 189}}, {{140, 86, 75}}}};

class Canvas {
 public:
  static constexpr int kW = 640, kH = 400, kMargin = 40;

  Canvas(double x0, double x1, double y0, double y1) : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    img_.width = kW;
    img_.height = kH;
    img_.rgb.assign(kW * kH * 3, 255);
    if (x1_ <= x0_) x1_ = x0_ + 1.0;
    if (y1_ <= y0_) y1_ = y0_ + 1.0;
    const Rgb black{0, 0, 0};
    line_px(kMargin, kH - kMargin, kW - kMargin, kH - kMargin, black);
    line_px(kMargin, kMargin, kMargin, kH - kMargin, black);
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const Rgb& c) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto [px, py] = map(pts[i]);
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) put(px + dx, py + dy, c);
      if (i > 0) {
        const auto [qx, qy] = map(pts[i - 1]);
        line_px(qx, qy, px, py, c);
      }
    }
  }

  const Image& image() const { return img_; }

 private:
  std::pair<int, int> map(const std::pair<double, double>& p) const {
    const double fx = (p.first - x0_) / (x1_ - x0_);
    const double fy = (p.second - y0_) / (y1_ - y0_);
    return {kMargin + static_cast<int>(std::lround(fx * (kW - 2 * kMargin))),
            kH - kMargin - static_cast<int>(std::lround(fy * (kH - 2 * kMargin)))};
  }

  void put(int x, int y, const Rgb& c) {
    if (x < 0 || y < 0 || x >= kW || y >= kH) return;
    std::copy(c.begin(), c.end(), img_.rgb.begin() + (static_cast<std::size_t>(y) * kW + x) * 3);
  }

  void line_px(int x0, int y0, int x1, int y1, const Rgb& c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      put(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  Image img_;
  double x0_, x1_, y0_, y1_;
};

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_';
  return out;
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const RomReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::vector<std::filesystem::path> written;

  double scale = 0.0;
  for (const auto& m : report.rows) scale = std::max(scale, m.max_abs);
  for (const auto& m : report.rows) {
    if (m.discrepancy.values.empty()) continue;
    std::ostringstream name;
    name << "discrepancy_" << slug(m.method) << "_" << slug(m.variable) << "_" << m.parameter << ".png";
    const auto p = dir / slug(name.str());
    write_png(discrepancy_image(m.discrepancy, scale), p);
    written.push_back(p);
  }

  std::map<std::string, std::vector<std::pair<double, double>>> curves;
  for (const auto& m : report.rows) {
    if (m.rel_l2) curves[m.method + "/" + m.variable].emplace_back(m.parameter, *m.rel_l2);
  }
  if (!curves.empty()) {
    double x0 = 1e300, x1 = -1e300, y1 = 0.0;
    for (auto& [_, pts] : curves) {
      std::sort(pts.begin(), pts.end());
      for (const auto& [x, y] : pts) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    const double pad = x1 > x0 ? 0.05 * (x1 - x0) : 0.5;
    Canvas c(x0 - pad, x1 + pad, 0.0, y1 > 0.0 ? 1.1 * y1 : 1.0);
    std::ofstream csv(dir / "error_vs_parameter.csv");
    if (!csv) throw std::runtime_error("cannot write " + (dir / "error_vs_parameter.csv").string());
    csv.precision(10);
    csv << "series,parameter,rel_l2,color_index\n";
    std::size_t color = 0;
    for (const auto& [series, pts] : curves) {
      c.polyline(pts, kPalette[color % kPalette.size()]);
      for (const auto& [x, y] : pts) csv << series << "," << x << "," << y << "," << color << "\n";
      ++color;
    }
    const auto p = dir / "error_vs_parameter.png";
    write_png(c.image(), p);
    written.push_back(dir / "error_vs_parameter.csv");
    written.push_back(p);
  }

  if (report.timing) {
    const TimingLedger& t = *report.timing;
    const double cross = cost_crossover(t);
    const double n_max = std::isfinite(cross) ? std::max(2.0, std::ceil(2.0 * cross)) : 10.0;
    std::vector<std::pair<double, double>> fom, rom;
    std::ofstream csv(dir / "cost_lines.csv");
    if (!csv) throw std::runtime_error("cannot write " + (dir / "cost_lines.csv").string());
    csv.precision(10);
    csv << "queries,fom_hours,rom_hours\n";
    const int steps = 50;
    for (int i = 0; i <= steps; ++i) {
      const double n = n_max * i / steps;
      fom.emplace_back(n, t.per_query_fom_hours * n);
      rom.emplace_back(n, t.offline_total_hours() + t.online_hours * n);
      csv << n << "," << fom.back().second << "," << rom.back().second << "\n";
    }
    const double y1 = std::max(fom.back().second, rom.back().second);
    Canvas c(0.0, n_max, 0.0, y1);
    c.polyline(fom, kPalette[1]);
    c.polyline(rom, kPalette[0]);
    const auto p = dir / "cost_lines.png";
    write_png(c.image(), p);
    written.push_back(dir / "cost_lines.csv");
    written.push_back(p);
  }
  return written;
}

}  // namespace lshrom
