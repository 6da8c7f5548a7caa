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

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tileforge/error.hpp"

namespace tileforge {

template <typename T>
concept GrayPixel = std::same_as<T, std::uint8_t> || std::same_as<T, std::uint16_t>;

/// Row-major single-channel image.
template <GrayPixel Pixel>
class GrayImage {
 public:
  using pixel_type = Pixel;
  static constexpr std::size_t kLevels =
      std::size_t{std::numeric_limits<Pixel>::max()} + 1;

  GrayImage() = default;

  GrayImage(int width, int height, Pixel fill = 0)
      : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "image dimensions must be positive");
    }
    pixels_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  GrayImage(int width, int height, std::vector<Pixel> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (width <= 0 || height <= 0 ||
        pixels_.size() != static_cast<std::size_t>(width) * height) {
      throw Error(ErrorCode::kInvalidArgument,
                  "pixel buffer does not match " + std::to_string(width) +
                      "x" + std::to_string(height));
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }

  Pixel at(int x, int y) const noexcept {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }
  Pixel& at(int x, int y) noexcept {
    return pixels_[static_cast<std::size_t>(y) * width_ + x];
  }

  std::span<const Pixel> row(int y) const noexcept {
    return {pixels_.data() + static_cast<std::size_t>(y) * width_,
            static_cast<std::size_t>(width_)};
  }

  std::span<const Pixel> pixels() const noexcept { return pixels_; }
  std::span<Pixel> pixels() noexcept { return pixels_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Pixel> pixels_;
};

using GrayImage8 = GrayImage<std::uint8_t>;
using GrayImage16 = GrayImage<std::uint16_t>;

/// Bit depth is only known at load time.
using AnyGrayImage = std::variant<GrayImage8, GrayImage16>;

}  // namespace tileforge
