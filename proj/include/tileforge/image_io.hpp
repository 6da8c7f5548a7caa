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

// 8/16-bit grayscale PNG and TIFF codecs (OpenCV imgcodecs). Requires
// linking tileforge::image_io.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "tileforge/error.hpp"
#include "tileforge/image.hpp"
#include "tileforge/io.hpp"

namespace tileforge {

namespace detail {

template <GrayPixel Pixel>
GrayImage<Pixel> from_mat(const cv::Mat& m) {
  std::vector<Pixel> px(static_cast<std::size_t>(m.rows) * m.cols);
  for (int y = 0; y < m.rows; ++y) {
    std::memcpy(px.data() + static_cast<std::size_t>(y) * m.cols, m.ptr<Pixel>(y),
                sizeof(Pixel) * m.cols);
  }
  return {m.cols, m.rows, std::move(px)};
}

}  // namespace detail

/// Loads a single-channel 8- or 16-bit image. Color images are converted
/// to gray by the codec.
inline AnyGrayImage read_gray_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw Error(ErrorCode::kIo, "cannot decode image " + path.string());
  switch (m.depth()) {
    case CV_8U: return detail::from_mat<std::uint8_t>(m);
    case CV_16U: return detail::from_mat<std::uint16_t>(m);
    default:
      throw Error(ErrorCode::kIo, "unsupported pixel depth in " + path.string());
  }
}

template <GrayPixel Pixel>
std::vector<unsigned char> encode_png(const GrayImage<Pixel>& img) {
  constexpr int type = sizeof(Pixel) == 1 ? CV_8UC1 : CV_16UC1;
  const cv::Mat m(img.height(), img.width(), type,
                  const_cast<Pixel*>(img.pixels().data()));
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", m, buf)) throw Error(ErrorCode::kIo, "PNG encoding failed");
  return buf;
}

template <GrayPixel Pixel>
void write_png(const std::filesystem::path& path, const GrayImage<Pixel>& img) {
  const auto buf = encode_png(img);
  write_bytes_atomic(path, std::span<const char>(reinterpret_cast<const char*>(buf.data()),
                                                 buf.size()));
}

}  // namespace tileforge
