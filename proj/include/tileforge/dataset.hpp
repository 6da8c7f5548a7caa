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

// Annotation ingestion, negative balancing, leakage-free grouped k-fold
// splitting, and normalized defect-area histograms.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tileforge/error.hpp"
#include "tileforge/geometry.hpp"
#include "tileforge/rng.hpp"

namespace tileforge {

struct Annotation {
  BBox box;
  std::string label;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// All annotations of one image. An empty box list marks a negative image.
struct AnnotationRecord {
  std::string image_path;
  std::vector<Annotation> boxes;
  std::string group_id;
  std::optional<int> fold;

  bool positive() const noexcept { return !boxes.empty(); }

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct Manifest {
  std::vector<AnnotationRecord> records;
  std::optional<std::uint64_t> seed;
  int k = 0;  // number of folds when assigned, else 0

  std::size_t positive_count() const {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(), [](const auto& r) { return r.positive(); }));
  }
  std::size_t negative_count() const { return records.size() - positive_count(); }
  std::size_t box_count() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.boxes.size();
    return n;
  }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// "dir/a_r0_c3.png" -> "a"; "b.tif" -> "b". Tiles of one source image
/// share the source's group.
inline std::string default_group_id(std::string_view image_path) {
  const auto slash = image_path.find_last_of("/\\");
  std::string_view name =
      slash == std::string_view::npos ? image_path : image_path.substr(slash + 1);
  const auto dot = name.find_last_of('.');
  if (dot != std::string_view::npos && dot > 0) name = name.substr(0, dot);
  static const std::regex kTileSuffix(R"(^(.*)_r\d+_c\d+$)");
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_match(name.begin(), name.end(), m, kTileSuffix)) return m[1].str();
  return std::string(name);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

inline std::optional<double> parse_number(std::string_view s) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline bool is_skippable(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

[[noreturn]] inline void malformed(const std::string& source, std::size_t line_no,
                                   const std::string& why) {
  throw Error(ErrorCode::kMalformedLine,
              source + ":" + std::to_string(line_no) + ": " + why);
}

}  // namespace detail

/// Rows `image_path,x1,y1,x2,y2,class[,group_id]`. `image_path,,,,,` declares
/// a negative image. Blank lines, `#` comments and an `image_path,...`
/// header row are skipped. Records keep first-appearance order.
inline Manifest read_annotations_csv(std::istream& in,
                                     const std::string& source = "<stream>") {
  Manifest m;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_skippable(line)) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 6 && f.size() != 7) {
      detail::malformed(source, line_no,
                        "expected 6 or 7 fields, got " + std::to_string(f.size()));
    }
    if (f[0] == "image_path") continue;
    if (f[0].empty()) detail::malformed(source, line_no, "empty image_path");

    const std::string path(f[0]);
    auto [it, inserted] = index.try_emplace(path, m.records.size());
    if (inserted) {
      m.records.push_back({path, {}, default_group_id(path), std::nullopt});
    }
    auto& rec = m.records[it->second];
    if (f.size() == 7 && !f[6].empty()) rec.group_id = std::string(f[6]);

    const bool negative = f[1].empty() && f[2].empty() && f[3].empty() &&
                          f[4].empty() && f[5].empty();
    if (negative) continue;

    double c[4];
    for (int i = 0; i < 4; ++i) {
      const auto v = detail::parse_number(f[1 + i]);
      if (!v) {
        detail::malformed(source, line_no,
                          "non-numeric coordinate '" + std::string(f[1 + i]) + "'");
      }
      c[i] = *v;
    }
    if (!(c[0] < c[2])) detail::malformed(source, line_no, "x1 >= x2");
    if (!(c[1] < c[3])) detail::malformed(source, line_no, "y1 >= y2");
    if (f[5].empty()) detail::malformed(source, line_no, "missing class label");
    rec.boxes.push_back({BBox(c[0], c[1], c[2], c[3]), std::string(f[5])});
  }
  return m;
}

inline Manifest read_annotations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_annotations_csv(in, path);
}

/// Inverse of read_annotations_csv. The group column is written only when a
/// record's group differs from the one derived from its path.
inline void write_annotations_csv(std::ostream& out, const Manifest& m,
                                  const std::string& header_comment = {}) {
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  for (const auto& r : m.records) {
    const bool custom_group = r.group_id != default_group_id(r.image_path);
    const std::string group_suffix = custom_group ? "," + r.group_id : "";
    if (r.boxes.empty()) {
      out << r.image_path << ",,,,," << group_suffix << '\n';
      continue;
    }
    for (const auto& a : r.boxes) {
      out << r.image_path << ',' << detail::format_number(a.box.x1()) << ','
          << detail::format_number(a.box.y1()) << ','
          << detail::format_number(a.box.x2()) << ','
          << detail::format_number(a.box.y2()) << ',' << a.label << group_suffix
          << '\n';
    }
  }
}

struct BalanceResult {
  Manifest manifest;
  std::size_t positives = 0;
  std::size_t negatives_available = 0;
  std::size_t negatives_kept = 0;
  double achieved_ratio = 0.0;  // negatives_kept / positives
};

/// Keeps every positive and round-half-up(ratio * positives) negatives drawn
/// without replacement (all of them when too few exist). Record order is
/// preserved.
inline BalanceResult balance_negatives(const Manifest& m, double ratio,
                                       std::uint64_t seed) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) {
    throw Error(ErrorCode::kInvalidArgument, "ratio must be non-negative");
  }
  std::vector<std::size_t> negatives;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (m.records[i].positive()) {
      ++n_pos;
    } else {
      negatives.push_back(i);
    }
  }
  if (n_pos == 0) throw Error(ErrorCode::kNoPositives, "no positive records");

  const auto target =
      static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n_pos) + 0.5));
  const std::size_t keep = std::min(target, negatives.size());
  Rng rng(seed);
  rng.shuffle(negatives);
  std::vector<bool> kept(m.records.size(), false);
  for (std::size_t i = 0; i < keep; ++i) kept[negatives[i]] = true;

  BalanceResult res;
  res.manifest.seed = seed;
  res.manifest.k = m.k;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    if (m.records[i].positive() || kept[i]) res.manifest.records.push_back(m.records[i]);
  }
  res.positives = n_pos;
  res.negatives_available = negatives.size();
  res.negatives_kept = keep;
  res.achieved_ratio = static_cast<double>(keep) / static_cast<double>(n_pos);
  return res;
}

/// Sets `fold` on every record. Distinct groups are sorted, shuffled with
/// `seed`, and dealt round-robin, so fold group counts differ by at most one
/// and no group ever spans two folds.
inline Manifest assign_folds(const Manifest& m, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "k must be >= 2");
  std::set<std::string> unique;
  for (const auto& r : m.records) unique.insert(r.group_id);
  if (unique.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::kTooFewGroups,
                std::to_string(unique.size()) + " groups for " +
                    std::to_string(k) + " folds");
  }
  std::vector<std::string> groups(unique.begin(), unique.end());
  Rng rng(seed);
  rng.shuffle(groups);
  std::unordered_map<std::string, int> fold_of;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    fold_of[groups[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  }
  Manifest out = m;
  out.seed = seed;
  out.k = k;
  for (auto& r : out.records) r.fold = fold_of.at(r.group_id);
  return out;
}

/// The k folds as separate manifests (fold i holds the records with fold i).
inline std::vector<Manifest> grouped_kfold(const Manifest& m, int k,
                                           std::uint64_t seed) {
  const Manifest assigned = assign_folds(m, k, seed);
  std::vector<Manifest> folds(static_cast<std::size_t>(k));
  for (auto& f : folds) {
    f.seed = seed;
    f.k = k;
  }
  for (const auto& r : assigned.records) folds[*r.fold].records.push_back(r);
  return folds;
}

/// Records outside `fold` (train) or inside it (validation).
inline Manifest select_fold(const Manifest& m, int fold, bool validation) {
  Manifest out;
  out.seed = m.seed;
  out.k = m.k;
  for (const auto& r : m.records) {
    if (!r.fold) throw Error(ErrorCode::kInvalidArgument, "manifest has no fold assignment");
    if ((*r.fold == fold) == validation) out.records.push_back(r);
  }
  return out;
}

inline Manifest scale_annotations(const Manifest& m, double s) {
  Manifest out = m;
  for (auto& r : out.records) {
    for (auto& a : r.boxes) a.box = a.box.scaled(s);
  }
  return out;
}

struct AreaHistogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;  // counts[i] covers [edges[i], edges[i+1])
  std::size_t underflow = 0;        // below edges.front()
  std::size_t overflow = 0;         // above edges.back()
  std::size_t total = 0;
  double fraction_below_one = 0.0;
};

inline std::vector<double> uniform_edges(double lo, double hi, int bins) {
  if (bins < 1 || !(lo < hi)) {
    throw Error(ErrorCode::kInvalidArgument, "invalid histogram range");
  }
  std::vector<double> e(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) e[i] = lo + (hi - lo) * i / bins;
  return e;
}

/// Histogram of box area / reference_area over every box. The last bin is
/// closed on the right.
inline AreaHistogram normalized_area_histogram(const Manifest& m,
                                               double reference_area,
                                               std::span<const double> bin_edges) {
  if (!(reference_area > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "reference area must be positive");
  }
  if (bin_edges.size() < 2 || !std::is_sorted(bin_edges.begin(), bin_edges.end()) ||
      std::adjacent_find(bin_edges.begin(), bin_edges.end()) != bin_edges.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                "bin edges must be strictly increasing, at least two");
  }
  AreaHistogram h;
  h.edges.assign(bin_edges.begin(), bin_edges.end());
  h.counts.assign(h.edges.size() - 1, 0);
  std::size_t below_one = 0;
  for (const auto& r : m.records) {
    for (const auto& a : r.boxes) {
      const double v = a.box.area() / reference_area;
      ++h.total;
      if (v < 1.0) ++below_one;
      if (v < h.edges.front()) {
        ++h.underflow;
      } else if (v > h.edges.back()) {
        ++h.overflow;
      } else {
        auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
        auto bin = static_cast<std::size_t>(it - h.edges.begin()) - 1;
        ++h.counts[std::min(bin, h.counts.size() - 1)];
      }
    }
  }
  h.fraction_below_one =
      h.total == 0 ? 0.0 : static_cast<double>(below_one) / static_cast<double>(h.total);
  return h;
}

/// CSV `bin_low,bin_high,count` with a header row.
inline void write_histogram_csv(std::ostream& out, const AreaHistogram& h) {
  out << "bin_low,bin_high,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out << detail::format_number(h.edges[i]) << ','
        << detail::format_number(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
  }
}

inline void to_json(nlohmann::json& j, const Manifest& m) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : m.records) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& a : r.boxes) {
      boxes.push_back({{"box", box_to_json(a.box)}, {"label", a.label}});
    }
    nlohmann::json rec{{"image_path", r.image_path},
                       {"group_id", r.group_id},
                       {"boxes", std::move(boxes)}};
    rec["fold"] = r.fold ? nlohmann::json(*r.fold) : nlohmann::json(nullptr);
    records.push_back(std::move(rec));
  }
  j = nlohmann::json{{"k", m.k}, {"records", std::move(records)}};
  j["seed"] = m.seed ? nlohmann::json(*m.seed) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, Manifest& m) {
  m.records.clear();
  m.k = j.value("k", 0);
  if (j.contains("seed") && !j.at("seed").is_null()) {
    m.seed = j.at("seed").get<std::uint64_t>();
  } else {
    m.seed.reset();
  }
  for (const auto& r : j.at("records")) {
    AnnotationRecord rec;
    rec.image_path = r.at("image_path").get<std::string>();
    rec.group_id = r.value("group_id", default_group_id(rec.image_path));
    if (r.contains("fold") && !r.at("fold").is_null()) rec.fold = r.at("fold").get<int>();
    for (const auto& b : r.at("boxes")) {
      rec.boxes.push_back({box_from_json(b.at("box")), b.at("label").get<std::string>()});
    }
    m.records.push_back(std::move(rec));
  }
}

}  // namespace tileforge
