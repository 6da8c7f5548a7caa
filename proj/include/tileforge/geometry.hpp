// Copyright 2026 The tileforge Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tileforge/error.hpp"

namespace tileforge {

/// Axis-aligned rectangle in continuous pixel coordinates (origin top-left,
/// y down). Pixel (i, j) covers [i, i+1) x [j, j+1). Width and height are
/// always strictly positive; construction of a degenerate box throws.
class BBox {
 public:
  BBox(double x1, double y1, double x2, double y2)
      : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
    if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
          std::isfinite(y2)) ||
        !(x1 < x2) || !(y1 < y2)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "degenerate box (" + std::to_string(x1) + "," +
                      std::to_string(y1) + "," + std::to_string(x2) + "," +
                      std::to_string(y2) + ")");
    }
  }

  double x1() const noexcept { return x1_; }
  double y1() const noexcept { return y1_; }
  double x2() const noexcept { return x2_; }
  double y2() const noexcept { return y2_; }
  double width() const noexcept { return x2_ - x1_; }
  double height() const noexcept { return y2_ - y1_; }
  double area() const noexcept { return width() * height(); }

  bool contains(const BBox& other) const noexcept {
    return x1_ <= other.x1_ && y1_ <= other.y1_ && other.x2_ <= x2_ &&
           other.y2_ <= y2_;
  }

  BBox translated(double dx, double dy) const {
    return {x1_ + dx, y1_ + dy, x2_ + dx, y2_ + dy};
  }

  BBox scaled(double s) const { return {x1_ * s, y1_ * s, x2_ * s, y2_ * s}; }

  friend bool operator==(const BBox&, const BBox&) = default;

 private:
  double x1_, y1_, x2_, y2_;
};

/// Area of the overlap; 0 when the boxes are disjoint or only touch.
inline double intersection_area(const BBox& a, const BBox& b) noexcept {
  const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

inline std::optional<BBox> intersection(const BBox& a, const BBox& b) {
  const double x1 = std::max(a.x1(), b.x1());
  const double y1 = std::max(a.y1(), b.y1());
  const double x2 = std::min(a.x2(), b.x2());
  const double y2 = std::min(a.y2(), b.y2());
  if (!(x1 < x2) || !(y1 < y2)) return std::nullopt;
  return BBox(x1, y1, x2, y2);
}

inline double iou_pair(const BBox& a, const BBox& b) noexcept {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

/// Anchor shape set: every (size, ratio, scale) combination. Ratio is
/// height / width, so 0.5 is a wide shape.
struct AnchorConfig {
  std::vector<double> sizes;
  std::vector<double> ratios;
  std::vector<double> scales;

  /// 5 base sizes x 3 ratios x 3 scales.
  static AnchorConfig defaults() {
    return {{32, 64, 128, 256, 512}, {0.5, 1.0, 2.0}, {1.0, 1.2, 1.6}};
  }

  std::size_t shape_count() const noexcept {
    return sizes.size() * ratios.size() * scales.size();
  }

  void validate() const {
    auto check = [](const std::vector<double>& v, const char* name) {
      if (v.empty()) {
        throw Error(ErrorCode::kInvalidArgument,
                    std::string("anchor ") + name + " must be non-empty");
      }
      for (double x : v) {
        if (!(x > 0.0) || !std::isfinite(x)) {
          throw Error(ErrorCode::kInvalidArgument,
                      std::string("anchor ") + name + " must be positive");
        }
      }
    };
    check(sizes, "sizes");
    check(ratios, "ratios");
    check(scales, "scales");
  }

  friend bool operator==(const AnchorConfig&, const AnchorConfig&) = default;
};

/// Width and height of a box, position dropped.
struct BoxSize {
  double w = 0.0;
  double h = 0.0;
};

struct AnchorShape {
  double width;
  double height;
};

inline AnchorShape make_anchor_shape(double size, double ratio, double scale) {
  const double side = size * scale;
  const double root = std::sqrt(ratio);
  return {side / root, side * root};
}

/// Size-major, then ratio, then scale.
inline std::vector<AnchorShape> anchor_shapes(const AnchorConfig& cfg) {
  cfg.validate();
  std::vector<AnchorShape> shapes;
  shapes.reserve(cfg.shape_count());
  for (double size : cfg.sizes) {
    for (double ratio : cfg.ratios) {
      for (double scale : cfg.scales) {
        shapes.push_back(make_anchor_shape(size, ratio, scale));
      }
    }
  }
  return shapes;
}

/// IoU of a box and an anchor placed on the same center.
inline double centered_iou(double box_w, double box_h,
                           const AnchorShape& anchor) noexcept {
  const double inter =
      std::min(box_w, anchor.width) * std::min(box_h, anchor.height);
  return inter / (box_w * box_h + anchor.width * anchor.height - inter);
}

inline double centered_max_iou(double box_w, double box_h,
                               std::span<const AnchorShape> shapes) noexcept {
  double best = 0.0;
  for (const auto& s : shapes) best = std::max(best, centered_iou(box_w, box_h, s));
  return best;
}

/// Best shape match of a (w, h) box against the anchor set, with anchor and
/// box concentric. Translation is ignored because anchors are placed densely.
inline double centered_max_iou(double box_w, double box_h,
                               const AnchorConfig& cfg) {
  if (!(box_w > 0.0) || !(box_h > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "box dimensions must be positive");
  }
  const auto shapes = anchor_shapes(cfg);
  return centered_max_iou(box_w, box_h, shapes);
}

// JSON form: {"sizes":[...],"ratios":[...],"scales":[...]}
inline void to_json(nlohmann::json& j, const AnchorConfig& cfg) {
  j = nlohmann::json{
      {"sizes", cfg.sizes}, {"ratios", cfg.ratios}, {"scales", cfg.scales}};
}

inline void from_json(const nlohmann::json& j, AnchorConfig& cfg) {
  j.at("sizes").get_to(cfg.sizes);
  j.at("ratios").get_to(cfg.ratios);
  j.at("scales").get_to(cfg.scales);
  cfg.validate();
}

inline nlohmann::json box_to_json(const BBox& b) {
  return nlohmann::json::array({b.x1(), b.y1(), b.x2(), b.y2()});
}

inline BBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw Error(ErrorCode::kInvalidArgument, "box must be [x1,y1,x2,y2]");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}

}  // namespace tileforge
