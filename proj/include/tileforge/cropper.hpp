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

// Foreground (aerofoil) extraction: Otsu threshold, 8-connected component
// labeling, and a margin-padded crop that keeps its source offset.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tileforge/error.hpp"
#include "tileforge/geometry.hpp"
#include "tileforge/image.hpp"

namespace tileforge {

enum class Polarity { kBrightForeground, kDarkForeground };

/// Otsu's criterion over the full intensity range of the pixel type. Pixels
/// <= threshold form the lower class. Ties resolve to the smallest level.
template <GrayPixel Pixel>
Pixel otsu_threshold(const GrayImage<Pixel>& img) {
  if (img.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty image");
  }
  constexpr std::size_t levels = GrayImage<Pixel>::kLevels;
  std::vector<std::uint64_t> hist(levels, 0);
  for (Pixel p : img.pixels()) ++hist[p];

  const std::uint64_t total = img.pixels().size();
  long double total_sum = 0;
  for (std::size_t v = 0; v < levels; ++v) total_sum += static_cast<long double>(v) * hist[v];

  std::uint64_t n_low = 0;
  long double sum_low = 0;
  double best_var = -1.0;
  std::size_t best_t = 0;
  for (std::size_t t = 0; t + 1 < levels; ++t) {
    n_low += hist[t];
    sum_low += static_cast<long double>(t) * hist[t];
    const std::uint64_t n_high = total - n_low;
    if (n_low == 0 || n_high == 0) continue;
    const long double mean_low = sum_low / n_low;
    const long double mean_high = (total_sum - sum_low) / n_high;
    const long double diff = mean_low - mean_high;
    const double var = static_cast<double>(
        static_cast<long double>(n_low) * n_high * diff * diff);
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  if (best_var <= 0.0) {
    throw Error(ErrorCode::kConstantImage,
                "all pixels share one intensity; no threshold exists");
  }
  return static_cast<Pixel>(best_t);
}

template <GrayPixel Pixel>
bool is_foreground(Pixel value, Pixel threshold, Polarity polarity) noexcept {
  return polarity == Polarity::kBrightForeground ? value > threshold
                                                 : value <= threshold;
}

/// Pixel extent [x_min, x_max] x [y_min, y_max] plus pixel count.
struct Component {
  std::size_t area = 0;
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  BBox bbox() const { return {double(x_min), double(y_min), double(x_max) + 1, double(y_max) + 1}; }
};

/// All 8-connected foreground components in raster order of their first
/// pixel.
template <GrayPixel Pixel>
std::vector<Component> connected_components(const GrayImage<Pixel>& img,
                                            Pixel threshold,
                                            Polarity polarity) {
  const int w = img.width();
  const int h = img.height();
  std::vector<std::uint8_t> visited(img.pixels().size(), 0);
  std::vector<Component> components;
  std::vector<std::pair<int, int>> stack;

  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      const std::size_t idx0 = static_cast<std::size_t>(y0) * w + x0;
      if (visited[idx0] || !is_foreground(img.at(x0, y0), threshold, polarity)) {
        continue;
      }
      Component c{0, x0, y0, x0, y0};
      visited[idx0] = 1;
      stack.emplace_back(x0, y0);
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        ++c.area;
        c.x_min = std::min(c.x_min, x);
        c.x_max = std::max(c.x_max, x);
        c.y_min = std::min(c.y_min, y);
        c.y_max = std::max(c.y_max, y);
        for (int dy = -1; dy <= 1; ++dy) {
          const int ny = y + dy;
          if (ny < 0 || ny >= h) continue;
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx;
            if (nx < 0 || nx >= w || (dx == 0 && dy == 0)) continue;
            const std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
            if (!visited[nidx] && is_foreground(img.at(nx, ny), threshold, polarity)) {
              visited[nidx] = 1;
              stack.emplace_back(nx, ny);
            }
          }
        }
      }
      components.push_back(c);
    }
  }
  return components;
}

/// Tight box of the component with the most pixels (first in raster order
/// on ties).
template <GrayPixel Pixel>
BBox largest_foreground_bbox(const GrayImage<Pixel>& img, Pixel threshold,
                             Polarity polarity) {
  const auto components = connected_components(img, threshold, polarity);
  if (components.empty()) {
    throw Error(ErrorCode::kNoForeground,
                "no foreground pixels at threshold " + std::to_string(threshold));
  }
  const Component* best = &components.front();
  for (const auto& c : components) {
    if (c.area > best->area) best = &c;
  }
  return best->bbox();
}

template <GrayPixel Pixel>
struct CropResult {
  GrayImage<Pixel> image;
  BBox crop_box;  // realized crop in source coordinates (integer corners)
};

template <GrayPixel Pixel>
GrayImage<Pixel> extract_region(const GrayImage<Pixel>& img, int x, int y,
                                int w, int h) {
  std::vector<Pixel> out;
  out.reserve(static_cast<std::size_t>(w) * h);
  for (int yy = y; yy < y + h; ++yy) {
    const auto r = img.row(yy);
    out.insert(out.end(), r.begin() + x, r.begin() + x + w);
  }
  return {w, h, std::move(out)};
}

/// Expands `box` outward to whole pixels plus `margin` on each side,
/// clamped to the image. Adding crop_box's (x1, y1) to any in-crop
/// coordinate gives the source coordinate.
template <GrayPixel Pixel>
CropResult<Pixel> crop_with_margin(const GrayImage<Pixel>& img, const BBox& box,
                                   int margin) {
  if (margin < 0) {
    throw Error(ErrorCode::kInvalidArgument, "margin must be non-negative");
  }
  const BBox bounds(0, 0, img.width(), img.height());
  if (!bounds.contains(box)) {
    throw Error(ErrorCode::kInvalidArgument, "crop box outside image bounds");
  }
  const int x1 = std::max(0, static_cast<int>(std::floor(box.x1())) - margin);
  const int y1 = std::max(0, static_cast<int>(std::floor(box.y1())) - margin);
  const int x2 = std::min(img.width(), static_cast<int>(std::ceil(box.x2())) + margin);
  const int y2 = std::min(img.height(), static_cast<int>(std::ceil(box.y2())) + margin);
  return {extract_region(img, x1, y1, x2 - x1, y2 - y1),
          BBox(x1, y1, x2, y2)};
}

}  // namespace tileforge
