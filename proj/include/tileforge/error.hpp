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

#include <stdexcept>
#include <string>
#include <string_view>

namespace tileforge {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum class ErrorCode {
  kInvalidArgument,
  kConstantImage,
  kNoForeground,
  kTileLargerThanImage,
  kTileOutOfBounds,
  kMalformedLine,
  kNoPositives,
  kTooFewGroups,
  kEmptyGroundTruth,
  kInvalidBounds,
  kNoDefinedClasses,
  kBothEmpty,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kConstantImage: return "ConstantImage";
    case ErrorCode::kNoForeground: return "NoForeground";
    case ErrorCode::kTileLargerThanImage: return "TileLargerThanImage";
    case ErrorCode::kTileOutOfBounds: return "TileOutOfBounds";
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kNoPositives: return "NoPositives";
    case ErrorCode::kTooFewGroups: return "TooFewGroups";
    case ErrorCode::kEmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::kInvalidBounds: return "InvalidBounds";
    case ErrorCode::kNoDefinedClasses: return "NoDefinedClasses";
    case ErrorCode::kBothEmpty: return "BothEmpty";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tileforge
