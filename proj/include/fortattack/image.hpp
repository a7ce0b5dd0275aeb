#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace fortattack::replay {

using Color = std::array<std::uint8_t, 3>;

// Fixed-size RGB canvas with the handful of primitives the renderer needs.
// All drawing is integer/double arithmetic over explicit predicates, so a
// given draw sequence produces byte-identical pixels everywhere.
class Canvas {
 public:
  Canvas(int width, int height, Color background);

  int width() const { return width_; }
  int height() const { return height_; }

  void set_pixel(int x, int y, Color c);
  void fill_circle(double cx, double cy, double radius, Color c);
  // Annulus between inner and outer radius.
  void draw_ring(double cx, double cy, double radius, double thickness,
                 Color c);
  // Filled circular sector: points within `radius` of (cx, cy) whose bearing
  // is within half_angle of `heading` (radians).
  void fill_sector(double cx, double cy, double radius, double heading,
                   double half_angle, Color c);
  void draw_line(double x0, double y0, double x1, double y1, Color c);

  // Binary PPM (P6); lossless and byte-stable.
  void write_ppm(const std::filesystem::path& path) const;
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  Color pixel(int x, int y) const;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;  // RGB rows, top to bottom
};

}  // namespace fortattack::replay
