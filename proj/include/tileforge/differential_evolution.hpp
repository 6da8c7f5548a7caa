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

// Bounded differential evolution (DE/best/1/bin) maximizer.
//
// Each generation draws one mutation factor F from [mutation_lo, mutation_hi)
// (dither). For member i the donor is best + F * (x_a - x_b) with a, b
// distinct and different from i; binomial crossover takes each donor
// coordinate with probability CR and always at least one. Coordinates that
// leave the box are re-drawn uniformly inside it. Trials are all built from
// the previous generation before any is evaluated, so evaluation can be
// spread across threads without changing the result.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "tileforge/error.hpp"
#include "tileforge/rng.hpp"

namespace tileforge {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

struct DEParams {
  int population_multiplier = 15;
  double mutation_lo = 0.5;
  double mutation_hi = 1.0;
  double crossover = 0.7;
  int max_generations = 100;
  double tolerance = 0.01;  // stop when max - min <= tolerance * |mean|
  std::uint64_t seed = 0;
  unsigned threads = 1;     // objective evaluations in flight per generation
};

struct DEResult {
  std::vector<double> best;
  double value = 0.0;
  std::vector<double> history;  // best value after init and each generation
  int generations = 0;
  int best_generation = 0;      // generation in which `best` first appeared
  bool converged = false;
};

template <typename F>
concept Objective = std::regular_invocable<const F&, std::span<const double>> &&
                    std::convertible_to<std::invoke_result_t<const F&, std::span<const double>>,
                                        double>;

namespace detail {

template <typename F>
void evaluate_all(const F& f, const std::vector<std::vector<double>>& xs,
                  std::vector<double>& out, unsigned threads) {
  out.resize(xs.size());
  const std::size_t n = xs.size();
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(std::span<const double>(xs[i]));
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        out[i] = f(std::span<const double>(xs[i]));
      }
    });
  }
}

inline bool population_converged(const std::vector<double>& fit, double tol) {
  const auto [lo, hi] = std::minmax_element(fit.begin(), fit.end());
  const double mean = std::accumulate(fit.begin(), fit.end(), 0.0) / fit.size();
  return (*hi - *lo) <= tol * std::abs(mean);
}

}  // namespace detail

inline void validate_de(std::span<const Interval> bounds, const DEParams& p) {
  if (bounds.empty()) throw Error(ErrorCode::kInvalidBounds, "no dimensions");
  for (const auto& b : bounds) {
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || !(b.lo < b.hi)) {
      throw Error(ErrorCode::kInvalidBounds,
                  "bound [" + std::to_string(b.lo) + ", " + std::to_string(b.hi) +
                      "] is empty or not finite");
    }
  }
  const auto pop = static_cast<std::size_t>(p.population_multiplier) * bounds.size();
  if (p.population_multiplier <= 0 || pop < 4) {
    throw Error(ErrorCode::kInvalidArgument, "population size must be >= 4");
  }
  if (!(p.crossover >= 0.0 && p.crossover <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "crossover must lie in [0, 1]");
  }
  if (!(p.mutation_lo >= 0.0 && p.mutation_lo <= p.mutation_hi && p.mutation_hi <= 2.0)) {
    throw Error(ErrorCode::kInvalidArgument, "mutation range must lie in [0, 2]");
  }
  if (p.max_generations < 0) {
    throw Error(ErrorCode::kInvalidArgument, "max_generations must be >= 0");
  }
}

/// Maximizes `f` over the box `bounds`. Points in `initial` that lie inside
/// the box replace the first random members of the starting population.
template <Objective F>
DEResult differential_evolution(const F& f, std::span<const Interval> bounds,
                                const DEParams& params,
                                std::span<const std::vector<double>> initial = {}) {
  validate_de(bounds, params);
  const std::size_t dim = bounds.size();
  const std::size_t pop_size = static_cast<std::size_t>(params.population_multiplier) * dim;
  Rng rng(params.seed);

  std::vector<std::vector<double>> pop(pop_size, std::vector<double>(dim));
  for (auto& x : pop) {
    for (std::size_t j = 0; j < dim; ++j) x[j] = rng.uniform(bounds[j].lo, bounds[j].hi);
  }
  std::size_t slot = 0;
  for (const auto& x : initial) {
    if (slot == pop_size) break;
    if (x.size() != dim) {
      throw Error(ErrorCode::kInvalidArgument, "initial point has wrong dimension");
    }
    bool inside = true;
    for (std::size_t j = 0; j < dim; ++j) inside = inside && bounds[j].contains(x[j]);
    if (inside) pop[slot++] = x;
  }

  std::vector<double> fit;
  detail::evaluate_all(f, pop, fit, params.threads);
  auto argmax = [](const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  };

  DEResult res;
  std::size_t best = argmax(fit);
  res.history.push_back(fit[best]);
  res.converged = detail::population_converged(fit, params.tolerance);

  std::vector<std::vector<double>> trials(pop_size, std::vector<double>(dim));
  std::vector<double> trial_fit;
  for (int g = 1; g <= params.max_generations && !res.converged; ++g) {
    const double F_gen = rng.uniform(params.mutation_lo, params.mutation_hi);
    for (std::size_t i = 0; i < pop_size; ++i) {
      std::size_t a, b;
      do a = rng.index(pop_size); while (a == i);
      do b = rng.index(pop_size); while (b == i || b == a);
      const std::size_t forced = rng.index(dim);
      auto& t = trials[i];
      for (std::size_t j = 0; j < dim; ++j) {
        const bool take = rng.uniform() < params.crossover || j == forced;
        if (!take) {
          t[j] = pop[i][j];
          continue;
        }
        const double v = pop[best][j] + F_gen * (pop[a][j] - pop[b][j]);
        t[j] = bounds[j].contains(v) ? v : rng.uniform(bounds[j].lo, bounds[j].hi);
      }
    }
    detail::evaluate_all(f, trials, trial_fit, params.threads);
    const double previous_best = fit[best];
    for (std::size_t i = 0; i < pop_size; ++i) {
      if (trial_fit[i] >= fit[i]) {
        pop[i] = trials[i];
        fit[i] = trial_fit[i];
      }
    }
    best = argmax(fit);
    if (fit[best] > previous_best) res.best_generation = g;
    res.history.push_back(fit[best]);
    res.generations = g;
    res.converged = detail::population_converged(fit, params.tolerance);
  }

  res.best = pop[best];
  res.value = fit[best];
  return res;
}

}  // namespace tileforge
