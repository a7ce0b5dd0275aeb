#include "fortattack/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fortattack/errors.hpp"

namespace fortattack::replay {

Canvas::Canvas(int width, int height, Color background)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) throw UsageError("canvas must be at least 1x1");
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) set_pixel(x, y, background);
}

void Canvas::set_pixel(int x, int y, Color c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  pixels_[i] = c[0];
  pixels_[i + 1] = c[1];
  pixels_[i + 2] = c[2];
}

Color Canvas::pixel(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

namespace {

struct Bounds {
  int x0, x1, y0, y1;
};

Bounds clip_box(double cx, double cy, double r, int w, int h) {
  return {std::max(0, static_cast<int>(std::floor(cx - r))),
          std::min(w - 1, static_cast<int>(std::ceil(cx + r))),
          std::max(0, static_cast<int>(std::floor(cy - r))),
          std::min(h - 1, static_cast<int>(std::ceil(cy + r)))};
}

}  // namespace

void Canvas::fill_circle(double cx, double cy, double radius, Color c) {
  const Bounds b = clip_box(cx, cy, radius, width_, height_);
  const double r2 = radius * radius;
  for (int y = b.y0; y <= b.y1; ++y)
    for (int x = b.x0; x <= b.x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      if (dx * dx + dy * dy <= r2) set_pixel(x, y, c);
    }
}

void Canvas::draw_ring(double cx, double cy, double radius, double thickness,
                       Color c) {
  const double outer = radius + thickness / 2;
  const double inner = std::max(0.0, radius - thickness / 2);
  const Bounds b = clip_box(cx, cy, outer, width_, height_);
  const double out2 = outer * outer, in2 = inner * inner;
  for (int y = b.y0; y <= b.y1; ++y)
    for (int x = b.x0; x <= b.x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= out2 && d2 >= in2) set_pixel(x, y, c);
    }
}

void Canvas::fill_sector(double cx, double cy, double radius, double heading,
                         double half_angle, Color c) {
  const Bounds b = clip_box(cx, cy, radius, width_, height_);
  const double r2 = radius * radius;
  const double hx = std::cos(heading), hy = std::sin(heading);
  const double cos_half = std::cos(half_angle);
  for (int y = b.y0; y <= b.y1; ++y)
    for (int x = b.x0; x <= b.x1; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double d2 = dx * dx + dy * dy;
      if (d2 > r2) continue;
      if (d2 == 0) {
        set_pixel(x, y, c);
        continue;
      }
      const double d = std::sqrt(d2);
      if ((dx * hx + dy * hy) / d >= cos_half) set_pixel(x, y, c);
    }
}

void Canvas::draw_line(double x0, double y0, double x1, double y1, Color c) {
  // Sampled line; enough for heading ticks.
  const double dx = x1 - x0, dy = y1 - y0;
  const int steps =
      std::max(1, static_cast<int>(std::ceil(std::max(std::abs(dx),
                                                      std::abs(dy)))));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    set_pixel(static_cast<int>(std::lround(x0 + t * dx)),
              static_cast<int>(std::lround(y0 + t * dy)), c);
  }
}

void Canvas::write_ppm(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open image for writing: " + path.string());
  os << "P6\n" << width_ << " " << height_ << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels_.data()),
           static_cast<std::streamsize>(pixels_.size()));
  if (!os) throw IoError("failed writing image: " + path.string());
}

}  // namespace fortattack::replay
