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

// Anchor ratio/scale search: maximize the mean best concentric IoU between
// ground-truth box shapes and the anchor set. The decision vector is
// (r, s1, s2, s3); ratios are instantiated as (1/r, 1, r), base sizes stay
// fixed.

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "tileforge/differential_evolution.hpp"
#include "tileforge/error.hpp"
#include "tileforge/geometry.hpp"

namespace tileforge {

struct SearchSpace {
  Interval ratio{1.0, 4.0};
  Interval scale{0.3, 2.0};
  std::vector<double> sizes = AnchorConfig::defaults().sizes;

  void validate() const {
    if (!(ratio.lo >= 1.0) || !(ratio.lo < ratio.hi) || !std::isfinite(ratio.hi)) {
      throw Error(ErrorCode::kInvalidBounds, "ratio bounds must satisfy 1 <= lo < hi");
    }
    if (!(scale.lo > 0.0) || !(scale.lo < scale.hi) || !std::isfinite(scale.hi)) {
      throw Error(ErrorCode::kInvalidBounds, "scale bounds must satisfy 0 < lo < hi");
    }
    if (sizes.empty()) throw Error(ErrorCode::kInvalidArgument, "no base sizes");
  }

  std::array<Interval, 4> bounds() const { return {ratio, scale, scale, scale}; }
};

struct OptimizationResult {
  AnchorConfig best;
  double fitness = 0.0;
  std::vector<double> history;
  std::size_t below_half = 0;  // GT boxes whose best IoU < 0.5 under `best`
  AnchorConfig baseline;
  double baseline_fitness = 0.0;
  std::size_t baseline_below_half = 0;
  int generations = 0;
  int best_generation = 0;
  bool converged = false;
};

inline double objective_mean_max_iou(std::span<const BoxSize> gt,
                                     std::span<const AnchorShape> shapes) {
  if (gt.empty()) throw Error(ErrorCode::kEmptyGroundTruth, "no ground-truth boxes");
  double sum = 0.0;
  for (const auto& b : gt) sum += centered_max_iou(b.w, b.h, shapes);
  return sum / static_cast<double>(gt.size());
}

inline double objective_mean_max_iou(std::span<const BoxSize> gt,
                                     const AnchorConfig& cfg) {
  if (gt.empty()) throw Error(ErrorCode::kEmptyGroundTruth, "no ground-truth boxes");
  for (const auto& b : gt) {
    if (!(b.w > 0.0) || !(b.h > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "ground-truth sizes must be positive");
    }
  }
  const auto shapes = anchor_shapes(cfg);
  return objective_mean_max_iou(gt, shapes);
}

inline std::size_t count_below(std::span<const BoxSize> gt, const AnchorConfig& cfg,
                               double threshold = 0.5) {
  const auto shapes = anchor_shapes(cfg);
  return static_cast<std::size_t>(std::count_if(gt.begin(), gt.end(), [&](const BoxSize& b) {
    return centered_max_iou(b.w, b.h, shapes) < threshold;
  }));
}

inline AnchorConfig config_from_vector(std::span<const double> x,
                                       const std::vector<double>& sizes) {
  std::vector<double> scales{x[1], x[2], x[3]};
  std::sort(scales.begin(), scales.end());
  return {sizes, {1.0 / x[0], 1.0, x[0]}, std::move(scales)};
}

/// (r, s1, s2, s3) for configs of the searched form, i.e. three ratios
/// (1/r, 1, r) and three scales.
inline std::optional<std::vector<double>> vector_from_config(const AnchorConfig& cfg) {
  if (cfg.ratios.size() != 3 || cfg.scales.size() != 3) return std::nullopt;
  std::vector<double> ratios = cfg.ratios;
  std::sort(ratios.begin(), ratios.end());
  const double r = ratios[2];
  if (ratios[1] != 1.0 || std::abs(ratios[0] * r - 1.0) > 1e-12) return std::nullopt;
  return std::vector<double>{r, cfg.scales[0], cfg.scales[1], cfg.scales[2]};
}

/// Runs the search with `baseline` seeded into the starting population, so
/// the result is never worse than the baseline when the baseline lies in
/// the search space.
inline OptimizationResult optimize_anchors(std::span<const BoxSize> gt,
                                           const SearchSpace& space,
                                           const DEParams& params,
                                           const AnchorConfig& baseline = AnchorConfig::defaults()) {
  if (gt.empty()) throw Error(ErrorCode::kEmptyGroundTruth, "no ground-truth boxes");
  space.validate();
  const auto bounds = space.bounds();

  auto objective = [&](std::span<const double> x) {
    const auto shapes = anchor_shapes(config_from_vector(x, space.sizes));
    return objective_mean_max_iou(gt, shapes);
  };

  std::vector<std::vector<double>> initial;
  AnchorConfig seeded = baseline;
  seeded.sizes = space.sizes;
  if (auto v = vector_from_config(seeded)) initial.push_back(*v);

  const auto de = differential_evolution(objective, bounds, params, initial);

  OptimizationResult res;
  res.best = config_from_vector(de.best, space.sizes);
  res.fitness = de.value;
  res.history = de.history;
  res.below_half = count_below(gt, res.best);
  res.baseline = baseline;
  res.baseline_fitness = objective_mean_max_iou(gt, baseline);
  res.baseline_below_half = count_below(gt, baseline);
  res.generations = de.generations;
  res.best_generation = de.best_generation;
  res.converged = de.converged;
  return res;
}

inline nlohmann::json report_json(const OptimizationResult& r) {
  return {{"anchors", r.best},
          {"fitness", r.fitness},
          {"history", r.history},
          {"below_0_5", r.below_half},
          {"baseline", r.baseline},
          {"baseline_fitness", r.baseline_fitness},
          {"baseline_below_0_5", r.baseline_below_half},
          {"generations", r.generations},
          {"best_generation", r.best_generation},
          {"converged", r.converged}};
}

}  // namespace tileforge
