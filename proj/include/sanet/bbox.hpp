#pragma once

#include <string>

namespace sanet {

// Top-left corner plus extents, in pixels, 0-based.
struct BBox {
  double x = 0;
  double y = 0;
  double w = 1;
  double h = 1;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }
  bool valid() const { return w > 0 && h > 0; }
  bool operator==(const BBox&) const = default;
};

double iou(const BBox& a, const BBox& b);
double center_distance(const BBox& a, const BBox& b);
std::string to_string(const BBox& b);

}  // namespace sanet
