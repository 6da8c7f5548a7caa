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
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "tileforge/cropper.hpp"
#include "tileforge/error.hpp"
#include "tileforge/geometry.hpp"
#include "tileforge/image.hpp"

namespace tileforge {

/// One tile: a window of the source image, upscaled by `scale` after
/// extraction. Maps between source space and scaled tile space.
struct TileSpec {
  std::string source_id;
  int row = 0;
  int col = 0;
  int offset_x = 0;
  int offset_y = 0;
  int tile_w = 0;
  int tile_h = 0;
  double scale = 1.0;

  BBox source_rect() const {
    return {double(offset_x), double(offset_y), double(offset_x + tile_w),
            double(offset_y + tile_h)};
  }

  friend bool operator==(const TileSpec&, const TileSpec&) = default;
};

struct TilePlan {
  int source_w = 0;
  int source_h = 0;
  int n_x = 0;
  int n_y = 0;
  std::vector<TileSpec> tiles;  // row-major

  friend bool operator==(const TilePlan&, const TilePlan&) = default;
};

struct GridCount {
  int n_x = 5;
  int n_y = 5;
};

struct Overlap {
  int x = 0;
  int y = 0;
};

using TilingMode = std::variant<GridCount, Overlap>;

namespace detail {

// Evenly spread offsets, round-half-up, mirrored so that
// off[i] + off[n-1-i] == span for every i except an unavoidable middle tie.
inline std::vector<int> grid_offsets(int length, int tile, int n) {
  const long long span = length - tile;
  std::vector<int> off(static_cast<std::size_t>(n), 0);
  if (n == 1) return off;
  const long long den = n - 1;
  for (int i = 0; 2 * i <= n - 1; ++i) {
    off[i] = static_cast<int>((2 * i * span + den) / (2 * den));
  }
  for (int i = n - 1; 2 * i > n - 1; --i) {
    off[i] = static_cast<int>(span - off[n - 1 - i]);
  }
  return off;
}

inline std::vector<int> overlap_offsets(int length, int tile, int overlap) {
  const int stride = tile - overlap;
  const int span = length - tile;
  const int n = (span + stride - 1) / stride + 1;
  std::vector<int> off;
  off.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) off.push_back(std::min(i * stride, span));
  return off;
}

}  // namespace detail

/// Covers a src_w x src_h image with overlapping tile_w x tile_h windows.
inline TilePlan plan_tiles(int src_w, int src_h, int tile_w, int tile_h,
                           const TilingMode& mode, double scale = 1.0,
                           const std::string& source_id = {}) {
  if (src_w <= 0 || src_h <= 0 || tile_w <= 0 || tile_h <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "dimensions must be positive");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorCode::kInvalidArgument, "scale must be positive");
  }
  if (tile_w > src_w || tile_h > src_h) {
    throw Error(ErrorCode::kTileLargerThanImage,
                "tile " + std::to_string(tile_w) + "x" + std::to_string(tile_h) +
                    " exceeds image " + std::to_string(src_w) + "x" +
                    std::to_string(src_h));
  }
  std::vector<int> xs, ys;
  if (const auto* g = std::get_if<GridCount>(&mode)) {
    if (g->n_x < 1 || g->n_y < 1) {
      throw Error(ErrorCode::kInvalidArgument, "grid counts must be >= 1");
    }
    if ((g->n_x == 1 && tile_w != src_w) || (g->n_y == 1 && tile_h != src_h)) {
      // A single tile along an axis only covers when it spans the axis.
      throw Error(ErrorCode::kInvalidArgument,
                  "single-tile axis must match the image size for coverage");
    }
    xs = detail::grid_offsets(src_w, tile_w, g->n_x);
    ys = detail::grid_offsets(src_h, tile_h, g->n_y);
    auto has_gap = [](const std::vector<int>& off, int tile) {
      for (std::size_t i = 1; i < off.size(); ++i) {
        if (off[i] - off[i - 1] > tile) return true;
      }
      return false;
    };
    if (has_gap(xs, tile_w) || has_gap(ys, tile_h)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "grid too sparse: tiles would leave gaps");
    }
  } else {
    const auto& ov = std::get<Overlap>(mode);
    if (ov.x < 0 || ov.x >= tile_w || ov.y < 0 || ov.y >= tile_h) {
      throw Error(ErrorCode::kInvalidArgument,
                  "overlap must lie in [0, tile size)");
    }
    xs = detail::overlap_offsets(src_w, tile_w, ov.x);
    ys = detail::overlap_offsets(src_h, tile_h, ov.y);
  }

  TilePlan plan{src_w, src_h, static_cast<int>(xs.size()),
                static_cast<int>(ys.size()), {}};
  plan.tiles.reserve(xs.size() * ys.size());
  for (std::size_t r = 0; r < ys.size(); ++r) {
    for (std::size_t c = 0; c < xs.size(); ++c) {
      plan.tiles.push_back({source_id, static_cast<int>(r), static_cast<int>(c),
                            xs[c], ys[r], tile_w, tile_h, scale});
    }
  }
  return plan;
}

inline std::string tile_file_name(const TileSpec& t) {
  return t.source_id + "_r" + std::to_string(t.row) + "_c" +
         std::to_string(t.col) + ".png";
}

/// Clip to the tile, keep if clipped/original area >= min_visibility, then
/// move into scaled tile coordinates.
inline std::optional<BBox> project_box(const BBox& box, const TileSpec& tile,
                                       double min_visibility) {
  const auto clipped = intersection(box, tile.source_rect());
  if (!clipped) return std::nullopt;
  if (clipped->area() / box.area() < min_visibility) return std::nullopt;
  const double s = tile.scale;
  return BBox((clipped->x1() - tile.offset_x) * s,
              (clipped->y1() - tile.offset_y) * s,
              (clipped->x2() - tile.offset_x) * s,
              (clipped->y2() - tile.offset_y) * s);
}

inline std::vector<BBox> project_annotations_to_tile(std::span<const BBox> annots,
                                                     const TileSpec& tile,
                                                     double min_visibility = 0.25) {
  std::vector<BBox> out;
  for (const auto& a : annots) {
    if (auto p = project_box(a, tile, min_visibility)) out.push_back(*p);
  }
  return out;
}

inline BBox detection_to_source_coords(const BBox& det, const TileSpec& tile) {
  const double s = tile.scale;
  return {det.x1() / s + tile.offset_x, det.y1() / s + tile.offset_y,
          det.x2() / s + tile.offset_x, det.y2() / s + tile.offset_y};
}

enum class Interpolation { kBilinear, kNearest };

/// round-half-up
inline int scaled_dim(int dim, double scale) {
  return static_cast<int>(std::floor(dim * scale + 0.5));
}

/// Resamples with pixel-center alignment: output pixel d samples source
/// position (d + 0.5) / scale - 0.5, clamped to the edge pixels.
template <GrayPixel Pixel>
GrayImage<Pixel> resize(const GrayImage<Pixel>& src, int out_w, int out_h,
                        Interpolation interp) {
  const double sx = static_cast<double>(out_w) / src.width();
  const double sy = static_cast<double>(out_h) / src.height();
  GrayImage<Pixel> out(out_w, out_h);

  if (interp == Interpolation::kNearest) {
    std::vector<int> xi(static_cast<std::size_t>(out_w));
    for (int x = 0; x < out_w; ++x) {
      xi[x] = std::min(src.width() - 1, static_cast<int>(std::floor((x + 0.5) / sx)));
    }
    for (int y = 0; y < out_h; ++y) {
      const int yy = std::min(src.height() - 1, static_cast<int>(std::floor((y + 0.5) / sy)));
      for (int x = 0; x < out_w; ++x) out.at(x, y) = src.at(xi[x], yy);
    }
    return out;
  }

  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int n_out, int n_src, double s) {
    std::vector<Tap> t(static_cast<std::size_t>(n_out));
    for (int d = 0; d < n_out; ++d) {
      double p = (d + 0.5) / s - 0.5;
      p = std::clamp(p, 0.0, static_cast<double>(n_src - 1));
      const int i0 = static_cast<int>(std::floor(p));
      t[d] = {i0, std::min(i0 + 1, n_src - 1), p - i0};
    }
    return t;
  };
  const auto tx = taps(out_w, src.width(), sx);
  const auto ty = taps(out_h, src.height(), sy);
  constexpr double kMax = std::numeric_limits<Pixel>::max();
  for (int y = 0; y < out_h; ++y) {
    const auto& [y0, y1, fy] = ty[y];
    for (int x = 0; x < out_w; ++x) {
      const auto& [x0, x1, fx] = tx[x];
      const double top = src.at(x0, y0) * (1.0 - fx) + src.at(x1, y0) * fx;
      const double bottom = src.at(x0, y1) * (1.0 - fx) + src.at(x1, y1) * fx;
      const double v = top * (1.0 - fy) + bottom * fy;
      out.at(x, y) = static_cast<Pixel>(std::clamp(std::floor(v + 0.5), 0.0, kMax));
    }
  }
  return out;
}

/// Extracts the tile window and upscales it by tile.scale.
template <GrayPixel Pixel>
GrayImage<Pixel> crop_tile(const GrayImage<Pixel>& img, const TileSpec& tile,
                           Interpolation interp = Interpolation::kBilinear) {
  if (tile.offset_x < 0 || tile.offset_y < 0 || tile.tile_w <= 0 ||
      tile.tile_h <= 0 || tile.offset_x + tile.tile_w > img.width() ||
      tile.offset_y + tile.tile_h > img.height()) {
    throw Error(ErrorCode::kTileOutOfBounds,
                "tile " + tile_file_name(tile) + " exceeds image bounds");
  }
  auto window = extract_region(img, tile.offset_x, tile.offset_y, tile.tile_w,
                               tile.tile_h);
  const int out_w = scaled_dim(tile.tile_w, tile.scale);
  const int out_h = scaled_dim(tile.tile_h, tile.scale);
  if (out_w == tile.tile_w && out_h == tile.tile_h) return window;
  return resize(window, out_w, out_h, interp);
}

inline void to_json(nlohmann::json& j, const TilePlan& plan) {
  nlohmann::json tiles = nlohmann::json::array();
  for (const auto& t : plan.tiles) {
    tiles.push_back({{"row", t.row},
                     {"col", t.col},
                     {"offset_x", t.offset_x},
                     {"offset_y", t.offset_y},
                     {"file", tile_file_name(t)}});
  }
  const TileSpec* first = plan.tiles.empty() ? nullptr : &plan.tiles.front();
  j = nlohmann::json{{"source_id", first ? first->source_id : ""},
                     {"source_width", plan.source_w},
                     {"source_height", plan.source_h},
                     {"grid", {plan.n_x, plan.n_y}},
                     {"tile_width", first ? first->tile_w : 0},
                     {"tile_height", first ? first->tile_h : 0},
                     {"scale", first ? first->scale : 1.0},
                     {"tiles", std::move(tiles)}};
}

inline void from_json(const nlohmann::json& j, TilePlan& plan) {
  plan.source_w = j.at("source_width").get<int>();
  plan.source_h = j.at("source_height").get<int>();
  plan.n_x = j.at("grid").at(0).get<int>();
  plan.n_y = j.at("grid").at(1).get<int>();
  const auto id = j.at("source_id").get<std::string>();
  const int tw = j.at("tile_width").get<int>();
  const int th = j.at("tile_height").get<int>();
  const double scale = j.at("scale").get<double>();
  plan.tiles.clear();
  for (const auto& t : j.at("tiles")) {
    plan.tiles.push_back({id, t.at("row").get<int>(), t.at("col").get<int>(),
                          t.at("offset_x").get<int>(), t.at("offset_y").get<int>(),
                          tw, th, scale});
  }
}

}  // namespace tileforge
