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

// Synthetic scans (bright convex blade on dark background with small dark
// elliptical defects) and a controllable stand-in detector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tileforge/error.hpp"
#include "tileforge/eval.hpp"
#include "tileforge/geometry.hpp"
#include "tileforge/image.hpp"
#include "tileforge/rng.hpp"

namespace tileforge {

struct SynthSpec {
  int width = 1200;
  int height = 1000;
  double blade_scale = 0.8;     // blade extent as a fraction of each image axis
  double blade_exponent = 4.0;  // superellipse exponent (>= 1 keeps it convex)
  int min_defects = 0;
  int max_defects = 4;
  int defect_w_mean = 14;
  int defect_h_mean = 18;
  int defect_w_jitter = 3;
  int defect_h_jitter = 4;
  std::uint8_t background = 20;
  std::uint8_t blade = 180;
  std::uint8_t defect = 90;
  std::uint64_t seed = 0;

  void validate() const {
    if (width < 16 || height < 16) {
      throw Error(ErrorCode::kInvalidArgument, "synthetic image too small");
    }
    if (!(blade_scale > 0.0 && blade_scale <= 1.0) || !(blade_exponent >= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "invalid blade shape");
    }
    if (min_defects < 0 || max_defects < min_defects) {
      throw Error(ErrorCode::kInvalidArgument, "invalid defect count range");
    }
    if (defect_w_jitter < 0 || defect_h_jitter < 0 ||
        defect_w_mean - defect_w_jitter < 2 || defect_h_mean - defect_h_jitter < 2) {
      throw Error(ErrorCode::kInvalidArgument, "defects must be at least 2 px");
    }
    if (!(background < defect && defect < blade)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "intensities must satisfy background < defect < blade");
    }
  }
};

struct SynthScan {
  GrayImage8 image;
  std::vector<BBox> defects;
};

/// Integer defect size, uniform in mean +- jitter on each axis.
inline BoxSize sample_defect_size(Rng& rng, const SynthSpec& spec) {
  return {static_cast<double>(rng.integer(spec.defect_w_mean - spec.defect_w_jitter,
                                          spec.defect_w_mean + spec.defect_w_jitter)),
          static_cast<double>(rng.integer(spec.defect_h_mean - spec.defect_h_jitter,
                                          spec.defect_h_mean + spec.defect_h_jitter))};
}

inline SynthScan generate_synthetic_scan(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const double W = spec.width, H = spec.height;
  const double cx = W / 2 + rng.uniform(-0.03, 0.03) * W;
  const double cy = H / 2 + rng.uniform(-0.03, 0.03) * H;
  const double ax = std::min(spec.blade_scale * W / 2 * rng.uniform(0.85, 1.0),
                             std::min(cx, W - cx) - 2);
  const double ay = std::min(spec.blade_scale * H / 2 * rng.uniform(0.85, 1.0),
                             std::min(cy, H - cy) - 2);
  const double p = spec.blade_exponent;
  auto inside_blade = [&](double x, double y) {
    return std::pow(std::abs((x - cx) / ax), p) + std::pow(std::abs((y - cy) / ay), p) <= 1.0;
  };

  SynthScan scan{GrayImage8(spec.width, spec.height, spec.background), {}};
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if (inside_blade(x + 0.5, y + 0.5)) scan.image.at(x, y) = spec.blade;
    }
  }

  const auto n = rng.integer(spec.min_defects, spec.max_defects);
  for (long long k = 0; k < n; ++k) {
    const BoxSize size = sample_defect_size(rng, spec);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double x1 = static_cast<double>(rng.integer(
          static_cast<long long>(std::ceil(cx - ax)),
          static_cast<long long>(std::floor(cx + ax - size.w))));
      const double y1 = static_cast<double>(rng.integer(
          static_cast<long long>(std::ceil(cy - ay)),
          static_cast<long long>(std::floor(cy + ay - size.h))));
      const BBox box(x1, y1, x1 + size.w, y1 + size.h);
      // A convex region containing all four corners contains the box.
      if (!inside_blade(box.x1(), box.y1()) || !inside_blade(box.x2(), box.y1()) ||
          !inside_blade(box.x1(), box.y2()) || !inside_blade(box.x2(), box.y2())) {
        continue;
      }
      const BBox padded(box.x1() - 2, box.y1() - 2, box.x2() + 2, box.y2() + 2);
      const bool overlaps = std::any_of(scan.defects.begin(), scan.defects.end(),
                                        [&](const BBox& d) { return intersection_area(d, padded) > 0; });
      if (overlaps) continue;
      scan.defects.push_back(box);
      break;
    }
  }

  for (const auto& d : scan.defects) {
    const double ex = (d.x1() + d.x2()) / 2, ey = (d.y1() + d.y2()) / 2;
    const double rx = d.width() / 2, ry = d.height() / 2;
    for (int y = static_cast<int>(d.y1()); y < static_cast<int>(d.y2()); ++y) {
      for (int x = static_cast<int>(d.x1()); x < static_cast<int>(d.x2()); ++x) {
        const double u = (x + 0.5 - ex) / rx, v = (y + 0.5 - ey) / ry;
        if (u * u + v * v <= 1.0) scan.image.at(x, y) = spec.defect;
      }
    }
  }
  return scan;
}

struct OracleDetectorParams {
  double jitter = 0.0;     // max absolute perturbation per coordinate
  double drop_rate = 0.0;  // probability of missing a ground-truth box
  double fp_rate = 0.0;    // false positives ~ Poisson(fp_rate * (|gt| + 1))
  std::uint64_t seed = 0;
  std::string label = "defect";
};

/// Detector stand-in: true positives score in [0.6, 1), false positives in
/// [0, 0.6). False positives are placed inside `extent`.
inline std::vector<Detection> oracle_detector(const std::string& image_id,
                                              std::span<const BBox> gts,
                                              const BBox& extent,
                                              const OracleDetectorParams& p) {
  if (!(p.jitter >= 0.0) || !(p.drop_rate >= 0.0 && p.drop_rate <= 1.0) ||
      !(p.fp_rate >= 0.0 && p.fp_rate <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "jitter must be >= 0 and rates in [0, 1]");
  }
  Rng rng(p.seed);
  std::vector<Detection> dets;
  for (const auto& g : gts) {
    if (rng.bernoulli(p.drop_rate)) continue;
    double c[4] = {g.x1(), g.y1(), g.x2(), g.y2()};
    if (p.jitter > 0.0) {
      for (double& v : c) v += rng.uniform(-p.jitter, p.jitter);
      if (c[0] > c[2]) std::swap(c[0], c[2]);
      if (c[1] > c[3]) std::swap(c[1], c[3]);
      if (c[2] - c[0] < 1.0) c[2] = c[0] + 1.0;
      if (c[3] - c[1] < 1.0) c[3] = c[1] + 1.0;
    }
    dets.push_back({image_id, BBox(c[0], c[1], c[2], c[3]), p.label, rng.uniform(0.6, 1.0)});
  }
  const auto n_fp = rng.poisson(p.fp_rate * static_cast<double>(gts.size()) + p.fp_rate);
  for (std::size_t k = 0; k < n_fp; ++k) {
    const double w = std::min<double>(rng.integer(8, 24), extent.width());
    const double h = std::min<double>(rng.integer(8, 24), extent.height());
    const double x = rng.uniform(extent.x1(), extent.x2() - w);
    const double y = rng.uniform(extent.y1(), extent.y2() - h);
    dets.push_back({image_id, BBox(x, y, x + w, y + h), p.label, rng.uniform(0.0, 0.6)});
  }
  return dets;
}

}  // namespace tileforge
