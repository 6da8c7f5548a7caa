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

// Everything except the image codecs (tileforge/image_io.hpp), which need
// OpenCV at link time.

#include "tileforge/anchor_opt.hpp"
#include "tileforge/cropper.hpp"
#include "tileforge/dataset.hpp"
#include "tileforge/differential_evolution.hpp"
#include "tileforge/error.hpp"
#include "tileforge/eval.hpp"
#include "tileforge/geometry.hpp"
#include "tileforge/image.hpp"
#include "tileforge/io.hpp"
#include "tileforge/rng.hpp"
#include "tileforge/synthkit.hpp"
#include "tileforge/tiler.hpp"
