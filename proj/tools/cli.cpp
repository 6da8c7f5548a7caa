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
#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tileforge/image_io.hpp"
#include "tileforge/tileforge.hpp"

namespace tileforge::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  bool json = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
  sub->add_flag("--json", c.json, "Print a JSON summary to standard output");
}

std::pair<int, int> parse_dims(const std::string& s, const std::string& what) {
  const auto x = s.find_first_of("xX");
  int a = 0, b = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    a = std::stoi(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    b = std::stoi(s.substr(x + 1), &used);
    if (used != s.size() - x - 1) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw UsageError(what + " expects WxH, got '" + s + "'");
  }
  return {a, b};
}

Interval parse_interval(const std::string& s, const std::string& what) {
  const auto c = s.find(',');
  try {
    if (c == std::string::npos) throw std::invalid_argument(s);
    return {std::stod(s.substr(0, c)), std::stod(s.substr(c + 1))};
  } catch (const std::exception&) {
    throw UsageError(what + " expects LO,HI, got '" + s + "'");
  }
}

unsigned thread_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TILEFORGE_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

/// Runs f(i) for i in [0, n) on up to thread_count() threads. The first
/// exception (lowest index) is rethrown.
template <typename F>
void parallel_for(std::size_t n, F&& f) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(thread_count(), std::max<std::size_t>(n, 1)));
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) {
          try {
            f(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-item seed that depends only on the run seed and a stable key.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : key) h = (h ^ c) * 0x100000001b3ULL;
  return splitmix64(seed ^ splitmix64(h));
}

std::string provenance(std::uint64_t seed) {
  return "tool_version=" + std::string(kToolVersion) + " seed=" + std::to_string(seed);
}

json stamped(json j, std::uint64_t seed) {
  j["tool_version"] = std::string(kToolVersion);
  j["seed"] = seed;
  return j;
}

void write_json(const fs::path& path, const json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

void write_manifest_csv(const fs::path& path, const Manifest& m, std::uint64_t seed) {
  std::ostringstream os;
  write_annotations_csv(os, m, provenance(seed));
  write_file_atomic(path, os.str());
}

/// Relative image paths in a CSV are relative to the CSV's directory.
fs::path resolve_image(const fs::path& csv, const std::string& image_path) {
  const fs::path p(image_path);
  return p.is_absolute() ? p : csv.parent_path() / p;
}

void emit(std::ostream& out, const Common& c, const json& summary, const std::string& text) {
  if (c.json) {
    out << stamped(summary, c.seed).dump() << '\n';
  } else {
    out << text << '\n';
  }
}

Polarity parse_polarity(const std::string& s) {
  if (s == "bright") return Polarity::kBrightForeground;
  if (s == "dark") return Polarity::kDarkForeground;
  throw UsageError("--polarity expects bright or dark, got '" + s + "'");
}

/// Source images for crop/tile: explicit --image list, else every image
/// listed in --annotations.
struct Inputs {
  std::vector<AnnotationRecord> records;
  std::vector<fs::path> files;
  bool annotated = false;
};

Inputs gather_inputs(const std::vector<std::string>& images, const std::string& annotations) {
  Inputs in;
  std::unordered_map<std::string, const AnnotationRecord*> by_path;
  Manifest m;
  if (!annotations.empty()) {
    m = read_annotations_csv(annotations);
    in.annotated = true;
    for (const auto& r : m.records) by_path[r.image_path] = &r;
  }
  if (images.empty()) {
    if (annotations.empty()) throw UsageError("give --image or --annotations");
    for (const auto& r : m.records) {
      in.records.push_back(r);
      in.files.push_back(resolve_image(annotations, r.image_path));
    }
    return in;
  }
  for (const auto& img : images) {
    const std::string key = fs::path(img).filename().string();
    const AnnotationRecord* r = nullptr;
    if (auto it = by_path.find(img); it != by_path.end()) r = it->second;
    else if (auto it2 = by_path.find(key); it2 != by_path.end()) r = it2->second;
    in.records.push_back(r ? *r : AnnotationRecord{key, {}, default_group_id(key), std::nullopt});
    in.files.push_back(img);
  }
  return in;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOpts {
  Common c;
  std::string out_dir;
  int count = 10;
  SynthSpec spec;
};

int run_synth(const SynthOpts& o, std::ostream& out) {
  if (o.count < 1) throw UsageError("--count must be >= 1");
  const fs::path dir(o.out_dir);
  std::vector<AnnotationRecord> records(static_cast<std::size_t>(o.count));
  parallel_for(records.size(), [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scan_%04zu.png", i);
    SynthSpec spec = o.spec;
    spec.seed = derive_seed(o.c.seed, name);
    const auto scan = generate_synthetic_scan(spec);
    write_png(dir / name, scan.image);
    AnnotationRecord r{name, {}, default_group_id(name), std::nullopt};
    for (const auto& b : scan.defects) r.boxes.push_back({b, "defect"});
    records[i] = std::move(r);
  });
  Manifest m{std::move(records), o.c.seed, 0};
  write_manifest_csv(dir / "annotations.csv", m, o.c.seed);
  emit(out, o.c,
       {{"command", "synth"}, {"images", m.records.size()}, {"boxes", m.box_count()},
        {"positives", m.positive_count()}},
       "synth: " + std::to_string(m.records.size()) + " scans, " +
           std::to_string(m.box_count()) + " defects -> " + (dir / "annotations.csv").string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// crop

struct CropOpts {
  Common c;
  std::vector<std::string> images;
  std::string annotations;
  std::string out_dir;
  int margin = 16;
  std::string polarity = "bright";
  std::optional<int> threshold;
};

int run_crop(const CropOpts& o, std::ostream& out) {
  if (o.margin < 0) throw UsageError("--margin must be >= 0");
  const Polarity polarity = parse_polarity(o.polarity);
  const auto in = gather_inputs(o.images, o.annotations);
  const fs::path dir(o.out_dir);
  std::vector<AnnotationRecord> records(in.records.size());
  std::vector<json> crops(in.records.size());

  parallel_for(in.records.size(), [&](std::size_t i) {
    const auto& src = in.records[i];
    const std::string stem = fs::path(src.image_path).stem().string();
    const std::string out_name = stem + ".png";
    const auto image = read_gray_image(in.files[i]);
    const auto [crop_box, threshold] = std::visit(
        [&](const auto& img) {
          using P = typename std::decay_t<decltype(img)>::pixel_type;
          P t;
          if (o.threshold) {
            if (*o.threshold < 0 || *o.threshold > std::numeric_limits<P>::max()) {
              throw Error(ErrorCode::kInvalidArgument, "--threshold out of range for image depth");
            }
            t = static_cast<P>(*o.threshold);
          } else {
            t = otsu_threshold(img);
          }
          const BBox fg = largest_foreground_bbox(img, t, polarity);
          auto cropped = crop_with_margin(img, fg, o.margin);
          write_png(dir / out_name, cropped.image);
          return std::pair<BBox, int>{cropped.crop_box, static_cast<int>(t)};
        },
        image);
    write_json(dir / (stem + ".crop.json"),
               stamped({{"source", src.image_path},
                        {"image", out_name},
                        {"crop_box", box_to_json(crop_box)},
                        {"threshold", threshold},
                        {"polarity", o.polarity}},
                       o.c.seed));

    AnnotationRecord r{out_name, {}, src.group_id, std::nullopt};
    const BBox extent(0, 0, crop_box.width(), crop_box.height());
    for (const auto& a : src.boxes) {
      const auto moved = a.box.translated(-crop_box.x1(), -crop_box.y1());
      if (auto clipped = intersection(moved, extent)) r.boxes.push_back({*clipped, a.label});
    }
    records[i] = std::move(r);
    crops[i] = {{"image", out_name}, {"crop_box", box_to_json(crop_box)}};
  });

  if (in.annotated) {
    write_manifest_csv(dir / "annotations.csv", Manifest{records, o.c.seed, 0}, o.c.seed);
  }
  emit(out, o.c, {{"command", "crop"}, {"images", records.size()}, {"crops", crops}},
       "crop: " + std::to_string(records.size()) + " images -> " + dir.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// tile

struct TileOpts {
  Common c;
  std::vector<std::string> images;
  std::string annotations;
  std::string out_dir;
  std::string tile = "500x600";
  std::string grid = "5x5";
  std::string overlap;
  double scale = 2.0;
  double min_visibility = 0.25;
  std::string interp = "bilinear";
};

int run_tile(const TileOpts& o, std::ostream& out) {
  const auto [tw, th] = parse_dims(o.tile, "--tile");
  TilingMode mode;
  if (!o.overlap.empty()) {
    const auto [ox, oy] = parse_dims(o.overlap, "--overlap");
    mode = Overlap{ox, oy};
  } else {
    const auto [nx, ny] = parse_dims(o.grid, "--grid");
    mode = GridCount{nx, ny};
  }
  Interpolation interp;
  if (o.interp == "bilinear") interp = Interpolation::kBilinear;
  else if (o.interp == "nearest") interp = Interpolation::kNearest;
  else throw UsageError("--interp expects bilinear or nearest");
  if (!(o.min_visibility >= 0.0 && o.min_visibility <= 1.0)) {
    throw UsageError("--min-visibility must lie in [0, 1]");
  }

  const auto in = gather_inputs(o.images, o.annotations);
  const fs::path dir(o.out_dir);
  std::vector<std::vector<AnnotationRecord>> per_image(in.records.size());
  std::vector<std::size_t> tile_counts(in.records.size());

  parallel_for(in.records.size(), [&](std::size_t i) {
    const auto& src = in.records[i];
    const std::string stem = fs::path(src.image_path).stem().string();
    const auto image = read_gray_image(in.files[i]);
    std::visit(
        [&](const auto& img) {
          const auto plan = plan_tiles(img.width(), img.height(), tw, th, mode, o.scale, stem);
          std::vector<BBox> boxes;
          for (const auto& a : src.boxes) boxes.push_back(a.box);
          for (const auto& t : plan.tiles) {
            const std::string name = tile_file_name(t);
            write_png(dir / name, crop_tile(img, t, interp));
            AnnotationRecord r{name, {}, src.group_id, std::nullopt};
            for (const auto& a : src.boxes) {
              if (auto p = project_box(a.box, t, o.min_visibility)) r.boxes.push_back({*p, a.label});
            }
            per_image[i].push_back(std::move(r));
          }
          json pj = plan;
          pj["source_image"] = src.image_path;
          write_json(dir / (stem + ".plan.json"), stamped(pj, o.c.seed));
          tile_counts[i] = plan.tiles.size();
        },
        image);
  });

  Manifest tiles;
  tiles.seed = o.c.seed;
  for (auto& v : per_image) {
    for (auto& r : v) tiles.records.push_back(std::move(r));
  }
  if (in.annotated) write_manifest_csv(dir / "annotations.csv", tiles, o.c.seed);
  emit(out, o.c,
       {{"command", "tile"}, {"images", in.records.size()}, {"tiles", tiles.records.size()},
        {"positive_tiles", tiles.positive_count()}, {"boxes", tiles.box_count()}},
       "tile: " + std::to_string(in.records.size()) + " images -> " +
           std::to_string(tiles.records.size()) + " tiles in " + dir.string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// balance / split / stats

struct BalanceOpts {
  Common c;
  std::string annotations;
  std::string out;
  double ratio = 1.1;
};

int run_balance(const BalanceOpts& o, std::ostream& out) {
  const auto m = read_annotations_csv(o.annotations);
  const auto res = balance_negatives(m, o.ratio, o.c.seed);
  write_manifest_csv(o.out, res.manifest, o.c.seed);
  emit(out, o.c,
       {{"command", "balance"}, {"positives", res.positives},
        {"negatives_available", res.negatives_available},
        {"negatives_kept", res.negatives_kept}, {"achieved_ratio", res.achieved_ratio}},
       "balance: " + std::to_string(res.positives) + " positive, " +
           std::to_string(res.negatives_kept) + "/" + std::to_string(res.negatives_available) +
           " negative kept, ratio " + std::to_string(res.achieved_ratio));
  return kExitOk;
}

struct SplitOpts {
  Common c;
  std::string annotations;
  std::string out;
  int k = 3;
};

int run_split(const SplitOpts& o, std::ostream& out) {
  if (o.k < 2) throw UsageError("--k must be >= 2");
  const auto m = assign_folds(read_annotations_csv(o.annotations), o.k, o.c.seed);
  write_json(o.out, stamped(json(m), o.c.seed));
  json folds = json::array();
  std::string text = "split:";
  for (int f = 0; f < o.k; ++f) {
    std::set<std::string> groups;
    std::size_t records = 0, positives = 0;
    for (const auto& r : m.records) {
      if (*r.fold != f) continue;
      groups.insert(r.group_id);
      ++records;
      positives += r.positive();
    }
    folds.push_back({{"fold", f}, {"groups", groups.size()}, {"records", records},
                     {"positives", positives}});
    text += " fold" + std::to_string(f) + "=" + std::to_string(groups.size()) + "g/" +
            std::to_string(records) + "r";
  }
  emit(out, o.c, {{"command", "split"}, {"k", o.k}, {"folds", folds}}, text);
  return kExitOk;
}

struct StatsOpts {
  Common c;
  std::string annotations;
  std::string out;
  double reference_area = 1024.0;
  std::string bins = "0:4:16";
  std::vector<double> edges;
  double scale = 1.0;
};

int run_stats(const StatsOpts& o, std::ostream& out) {
  if (!(o.scale > 0.0)) throw UsageError("--scale must be positive");
  std::vector<double> edges = o.edges;
  if (edges.empty()) {
    double lo = 0, hi = 0;
    int n = 0;
    char c1 = 0, c2 = 0;
    std::istringstream is(o.bins);
    if (!(is >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':') {
      throw UsageError("--bins expects LO:HI:N, got '" + o.bins + "'");
    }
    edges = uniform_edges(lo, hi, n);
  }
  auto m = read_annotations_csv(o.annotations);
  if (o.scale != 1.0) m = scale_annotations(m, o.scale);
  const auto h = normalized_area_histogram(m, o.reference_area, edges);
  std::ostringstream os;
  os << "# " << provenance(o.c.seed) << '\n';
  write_histogram_csv(os, h);
  write_file_atomic(o.out, os.str());

  double sum_w = 0, sum_h = 0;
  for (const auto& r : m.records) {
    for (const auto& a : r.boxes) {
      sum_w += a.box.width();
      sum_h += a.box.height();
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(h.total, 1));
  emit(out, o.c,
       {{"command", "stats"}, {"images", m.records.size()}, {"positives", m.positive_count()},
        {"boxes", h.total}, {"mean_width", sum_w / n}, {"mean_height", sum_h / n},
        {"fraction_below_reference", h.fraction_below_one}, {"underflow", h.underflow},
        {"overflow", h.overflow}},
       "stats: " + std::to_string(h.total) + " boxes, " +
           std::to_string(h.fraction_below_one) + " below the reference area");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// optimize-anchors

struct AnchorOpts {
  Common c;
  std::string annotations;
  std::string out;
  std::string report;
  std::string base;
  std::string ratio_bounds = "1,4";
  std::string scale_bounds = "0.3,2";
  DEParams de;
};

int run_optimize_anchors(const AnchorOpts& o, std::ostream& out) {
  const auto m = read_annotations_csv(o.annotations);
  std::vector<BoxSize> gt;
  for (const auto& r : m.records) {
    for (const auto& a : r.boxes) gt.push_back({a.box.width(), a.box.height()});
  }
  AnchorConfig base = AnchorConfig::defaults();
  if (!o.base.empty()) base = json::parse(read_file(o.base)).get<AnchorConfig>();
  SearchSpace space;
  space.ratio = parse_interval(o.ratio_bounds, "--ratio-bounds");
  space.scale = parse_interval(o.scale_bounds, "--scale-bounds");
  space.sizes = base.sizes;
  DEParams de = o.de;
  de.seed = o.c.seed;
  de.threads = thread_count();

  const auto res = optimize_anchors(gt, space, de, base);
  write_json(o.out, stamped(json(res.best), o.c.seed));
  fs::path report = o.report;
  if (report.empty()) report = fs::path(o.out).replace_extension(".report.json");
  json rj = report_json(res);
  rj["gt_boxes"] = gt.size();
  write_json(report, stamped(rj, o.c.seed));
  emit(out, o.c,
       {{"command", "optimize-anchors"}, {"fitness", res.fitness},
        {"baseline_fitness", res.baseline_fitness}, {"below_0_5", res.below_half},
        {"generations", res.generations}, {"anchors", res.best}},
       "optimize-anchors: fitness " + std::to_string(res.fitness) + " (baseline " +
           std::to_string(res.baseline_fitness) + ") -> " + o.out);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// detect-oracle / merge / evaluate

struct OracleOpts {
  Common c;
  std::string annotations;
  std::string out;
  double jitter = 0.0;
  double drop_rate = 0.0;
  double fp_rate = 0.0;
  std::string extent = "1000x1200";
};

int run_detect_oracle(const OracleOpts& o, std::ostream& out) {
  const auto [ew, eh] = parse_dims(o.extent, "--extent");
  const BBox extent(0, 0, ew, eh);
  const auto m = read_annotations_csv(o.annotations);
  std::vector<Detection> dets;
  for (const auto& r : m.records) {
    std::map<std::string, std::vector<BBox>> by_label;
    for (const auto& a : r.boxes) by_label[a.label].push_back(a.box);
    if (by_label.empty()) by_label["defect"];
    for (const auto& [label, boxes] : by_label) {
      OracleDetectorParams p{o.jitter, o.drop_rate, o.fp_rate,
                             derive_seed(o.c.seed, r.image_path + "\n" + label), label};
      auto d = oracle_detector(r.image_path, boxes, extent, p);
      dets.insert(dets.end(), d.begin(), d.end());
    }
  }
  std::ostringstream os;
  write_detections_csv(os, dets, provenance(o.c.seed));
  write_file_atomic(o.out, os.str());
  emit(out, o.c, {{"command", "detect-oracle"}, {"images", m.records.size()}, {"detections", dets.size()}},
       "detect-oracle: " + std::to_string(dets.size()) + " detections -> " + o.out);
  return kExitOk;
}

struct MergeOpts {
  Common c;
  std::vector<std::string> plans;
  std::string detections;
  std::string out;
  double nms_iou = 0.5;
};

int run_merge(const MergeOpts& o, std::ostream& out) {
  std::vector<fs::path> plan_files;
  for (const auto& p : o.plans) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        const auto name = e.path().filename().string();
        if (name.size() > 10 && name.ends_with(".plan.json")) plan_files.push_back(e.path());
      }
    } else {
      plan_files.emplace_back(p);
    }
  }
  std::sort(plan_files.begin(), plan_files.end());
  if (plan_files.empty()) throw Error(ErrorCode::kIo, "no tile plans found");

  struct TileRef {
    TileSpec spec;
    std::string source;
  };
  std::unordered_map<std::string, TileRef> tiles;
  std::vector<std::string> sources;
  for (const auto& f : plan_files) {
    const json j = json::parse(read_file(f));
    const auto plan = j.get<TilePlan>();
    const std::string source = j.value("source_image", plan.tiles.empty() ? "" : plan.tiles[0].source_id);
    sources.push_back(source);
    for (const auto& t : plan.tiles) tiles[tile_file_name(t)] = {t, source};
  }

  std::unordered_map<std::string, std::vector<Detection>> by_source;
  for (auto d : read_detections_csv(o.detections)) {
    const auto key = fs::path(d.image_id).filename().string();
    const auto it = tiles.find(key);
    if (it == tiles.end()) {
      throw Error(ErrorCode::kInvalidArgument, "detection on unknown tile " + d.image_id);
    }
    d.box = detection_to_source_coords(d.box, it->second.spec);
    d.image_id = it->second.source;
    by_source[it->second.source].push_back(std::move(d));
  }
  std::vector<Detection> merged;
  std::size_t before = 0;
  for (const auto& s : sources) {
    auto it = by_source.find(s);
    if (it == by_source.end()) continue;
    before += it->second.size();
    auto kept = nms(it->second, o.nms_iou);
    merged.insert(merged.end(), kept.begin(), kept.end());
    by_source.erase(it);
  }
  std::ostringstream os;
  write_detections_csv(os, merged, provenance(o.c.seed));
  write_file_atomic(o.out, os.str());
  emit(out, o.c,
       {{"command", "merge"}, {"plans", plan_files.size()}, {"tile_detections", before},
        {"merged_detections", merged.size()}},
       "merge: " + std::to_string(before) + " tile detections -> " +
           std::to_string(merged.size()) + " after NMS");
  return kExitOk;
}

struct EvalOpts {
  Common c;
  std::string annotations;
  std::string detections;
  std::string out;
  std::string manifest;
  std::optional<int> fold;
  EvalOptions eval;
};

int run_evaluate(const EvalOpts& o, std::ostream& out) {
  auto gt = read_annotations_csv(o.annotations);
  auto dets = read_detections_csv(o.detections);
  if (o.fold.has_value() != !o.manifest.empty()) {
    throw UsageError("--manifest and --fold go together");
  }
  if (o.fold) {
    const auto folds = json::parse(read_file(o.manifest)).get<Manifest>();
    std::set<std::string> groups;
    for (const auto& r : folds.records) {
      if (r.fold && *r.fold == *o.fold) groups.insert(r.group_id);
    }
    if (groups.empty()) throw Error(ErrorCode::kInvalidArgument, "fold has no records");
    std::unordered_map<std::string, std::string> group_of;
    std::erase_if(gt.records, [&](const AnnotationRecord& r) {
      group_of[r.image_path] = r.group_id;
      return !groups.count(r.group_id);
    });
    std::erase_if(dets, [&](const Detection& d) {
      const auto it = group_of.find(d.image_id);
      const auto g = it != group_of.end() ? it->second : default_group_id(d.image_id);
      return !groups.count(g);
    });
  }
  const auto report = evaluate(gt, dets, o.eval);
  json rj = to_json(report);
  rj["options"] = {{"match_iou", o.eval.match_iou},
                   {"score_threshold", o.eval.score_threshold},
                   {"union_iou_min", o.eval.union_iou_min}};
  if (o.fold) rj["fold"] = *o.fold;
  write_json(o.out, stamped(rj, o.c.seed));
  std::size_t correct = 0;
  for (const auto& v : report.per_image) correct += v.correct;
  emit(out, o.c,
       {{"command", "evaluate"}, {"map", rj["map"]}, {"accuracy", report.accuracy},
        {"images", report.per_image.size()}, {"correct", correct}, {"tp", report.tp},
        {"fp", report.fp}, {"fn", report.fn}},
       "evaluate: mAP " + (report.map ? std::to_string(*report.map) : std::string("n/a")) +
           ", accuracy " + std::to_string(report.accuracy) + " (" + std::to_string(correct) +
           "/" + std::to_string(report.per_image.size()) + ")");
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"tileforge: cropping, tiling, splitting, anchor search and evaluation for "
               "small-defect detection datasets"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  SynthOpts synth;
  auto* s = app.add_subcommand("synth", "Generate synthetic scans and their annotations CSV");
  add_common(s, synth.c);
  s->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  s->add_option("--count", synth.count, "Number of scans")->capture_default_str();
  s->add_option("--width", synth.spec.width)->capture_default_str();
  s->add_option("--height", synth.spec.height)->capture_default_str();
  s->add_option("--min-defects", synth.spec.min_defects)->capture_default_str();
  s->add_option("--max-defects", synth.spec.max_defects)->capture_default_str();

  CropOpts crop;
  auto* c = app.add_subcommand("crop", "Crop each scan to its largest foreground region");
  add_common(c, crop.c);
  c->add_option("--image", crop.images, "Input image(s)");
  c->add_option("--annotations", crop.annotations, "Annotations CSV (shifted into crop space)");
  c->add_option("--out-dir", crop.out_dir, "Output directory")->required();
  c->add_option("--margin", crop.margin, "Margin in pixels around the foreground")->capture_default_str();
  c->add_option("--polarity", crop.polarity, "bright or dark foreground")->capture_default_str();
  c->add_option("--threshold", crop.threshold, "Fixed threshold instead of Otsu");

  TileOpts tile;
  auto* t = app.add_subcommand("tile", "Split images into overlapping, upscaled tiles");
  add_common(t, tile.c);
  t->add_option("--image", tile.images, "Input image(s)");
  t->add_option("--annotations", tile.annotations, "Annotations CSV (projected into tiles)");
  t->add_option("--out-dir", tile.out_dir, "Output directory")->required();
  t->add_option("--tile", tile.tile, "Tile size WxH")->capture_default_str();
  auto* grid = t->add_option("--grid", tile.grid, "Tile grid NXxNY")->capture_default_str();
  t->add_option("--overlap", tile.overlap, "Overlap XxY (instead of --grid)")->excludes(grid);
  t->add_option("--scale", tile.scale, "Upscaling factor")->capture_default_str();
  t->add_option("--min-visibility", tile.min_visibility,
                "Minimum visible fraction for a clipped annotation")->capture_default_str();
  t->add_option("--interp", tile.interp, "bilinear or nearest")->capture_default_str();

  BalanceOpts bal;
  auto* b = app.add_subcommand("balance", "Subsample negatives to a negative/positive ratio");
  add_common(b, bal.c);
  b->add_option("--annotations", bal.annotations)->required();
  b->add_option("--out", bal.out)->required();
  b->add_option("--ratio", bal.ratio, "Negatives per positive")->capture_default_str();

  SplitOpts split;
  auto* sp = app.add_subcommand("split", "Grouped k-fold assignment (no group spans folds)");
  add_common(sp, split.c);
  sp->add_option("--annotations", split.annotations)->required();
  sp->add_option("--out", split.out, "Manifest JSON")->required();
  sp->add_option("--k", split.k, "Number of folds")->capture_default_str();

  AnchorOpts anc;
  auto* a = app.add_subcommand("optimize-anchors", "Differential-evolution anchor ratio/scale search");
  add_common(a, anc.c);
  a->add_option("--annotations", anc.annotations)->required();
  a->add_option("--out", anc.out, "Anchor config JSON")->required();
  a->add_option("--report", anc.report, "Report JSON (default: <out>.report.json)");
  a->add_option("--base", anc.base, "Baseline anchor config JSON (default: 32..512 sizes)");
  a->add_option("--ratio-bounds", anc.ratio_bounds, "Bounds for r, ratios are (1/r, 1, r)")->capture_default_str();
  a->add_option("--scale-bounds", anc.scale_bounds)->capture_default_str();
  a->add_option("--population-multiplier", anc.de.population_multiplier)->capture_default_str();
  a->add_option("--generations", anc.de.max_generations)->capture_default_str();
  a->add_option("--crossover", anc.de.crossover)->capture_default_str();
  a->add_option("--tolerance", anc.de.tolerance)->capture_default_str();

  OracleOpts orc;
  auto* d = app.add_subcommand("detect-oracle", "Stand-in detector: perturbed ground truth plus false positives");
  add_common(d, orc.c);
  d->add_option("--annotations", orc.annotations)->required();
  d->add_option("--out", orc.out, "Detections CSV")->required();
  d->add_option("--jitter", orc.jitter)->capture_default_str();
  d->add_option("--drop-rate", orc.drop_rate)->capture_default_str();
  d->add_option("--fp-rate", orc.fp_rate)->capture_default_str();
  d->add_option("--extent", orc.extent, "Image extent WxH for false positives")->capture_default_str();

  MergeOpts mer;
  auto* mg = app.add_subcommand("merge", "Map tile detections to source images and apply NMS");
  add_common(mg, mer.c);
  mg->add_option("--plans", mer.plans, "Plan JSON files or directories")->required();
  mg->add_option("--detections", mer.detections, "Tile detections CSV")->required();
  mg->add_option("--out", mer.out, "Merged detections CSV")->required();
  mg->add_option("--nms", mer.nms_iou, "NMS IoU threshold")->capture_default_str();

  EvalOpts ev;
  auto* e = app.add_subcommand("evaluate", "mAP and image-level accuracy");
  add_common(e, ev.c);
  e->add_option("--annotations", ev.annotations)->required();
  e->add_option("--detections", ev.detections)->required();
  e->add_option("--out", ev.out, "Report JSON")->required();
  e->add_option("--iou", ev.eval.match_iou, "Matching IoU for AP")->capture_default_str();
  e->add_option("--score-threshold", ev.eval.score_threshold,
                "Minimum score counted by the accuracy metric")->capture_default_str();
  e->add_option("--union-iou-min", ev.eval.union_iou_min)->capture_default_str();
  e->add_option("--manifest", ev.manifest, "Split manifest JSON");
  e->add_option("--fold", ev.fold, "Evaluate only this fold's images");

  StatsOpts st;
  auto* stc = app.add_subcommand("stats", "Histogram of box areas normalized by a reference area");
  add_common(stc, st.c);
  stc->add_option("--annotations", st.annotations)->required();
  stc->add_option("--out", st.out, "Histogram CSV")->required();
  stc->add_option("--reference-area", st.reference_area)->capture_default_str();
  stc->add_option("--bins", st.bins, "LO:HI:N uniform bins")->capture_default_str();
  stc->add_option("--edges", st.edges, "Explicit bin edges")->delimiter(',');
  stc->add_option("--scale", st.scale, "Scale boxes before binning")->capture_default_str();

  std::vector<std::string> argv_store{"tileforge"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& x : argv_store) argv.push_back(x.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "tileforge: " << ex.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (s->parsed()) return run_synth(synth, out);
    if (c->parsed()) return run_crop(crop, out);
    if (t->parsed()) return run_tile(tile, out);
    if (b->parsed()) return run_balance(bal, out);
    if (sp->parsed()) return run_split(split, out);
    if (a->parsed()) return run_optimize_anchors(anc, out);
    if (d->parsed()) return run_detect_oracle(orc, out);
    if (mg->parsed()) return run_merge(mer, out);
    if (e->parsed()) return run_evaluate(ev, out);
    if (stc->parsed()) return run_stats(st, out);
  } catch (const UsageError& ex) {
    err << "tileforge: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "tileforge: error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace tileforge::cli
