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

// Detection evaluation: NMS tile merge, greedy matching, all-point
// interpolated AP / mAP, exact union-of-rectangles IoU, and the image-level
// accuracy (enough detections and union IoU above a floor).

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tileforge/dataset.hpp"
#include "tileforge/error.hpp"
#include "tileforge/geometry.hpp"

namespace tileforge {

struct Detection {
  std::string image_id;
  BBox box;
  std::string label;
  double score = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Score descending, then larger area, then input order.
inline std::vector<std::size_t> detection_order(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
    return dets[a].box.area() > dets[b].box.area();
  });
  return order;
}

/// Greedy per-class suppression of detections with IoU > iou_threshold
/// against an already kept one. Expects detections from a single image.
inline std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "NMS threshold must lie in [0, 1]");
  }
  const auto order = detection_order(dets);
  std::vector<bool> suppressed(dets.size(), false);
  std::vector<Detection> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const auto i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(dets[i]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const auto j = order[oj];
      if (!suppressed[j] && dets[j].label == dets[i].label &&
          iou_pair(dets[i].box, dets[j].box) > iou_threshold) {
        suppressed[j] = true;
      }
    }
  }
  return kept;
}

/// Runs nms() separately for each image id; output grouped by image in
/// first-appearance order.
inline std::vector<Detection> nms_per_image(std::span<const Detection> dets,
                                            double iou_threshold) {
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::vector<Detection>> by_image;
  for (const auto& d : dets) {
    auto [it, inserted] = by_image.try_emplace(d.image_id);
    if (inserted) ids.push_back(d.image_id);
    it->second.push_back(d);
  }
  std::vector<Detection> out;
  for (const auto& id : ids) {
    auto kept = nms(by_image.at(id), iou_threshold);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

struct ScoredLabel {
  double score = 0.0;
  bool tp = false;
};

struct MatchResult {
  std::vector<ScoredLabel> labels;   // in score-descending order
  std::vector<std::size_t> det_index;  // input index of each label
  std::size_t fn = 0;
  std::size_t tp_count() const {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                  [](const auto& l) { return l.tp; }));
  }
};

/// Greedy by score: each detection takes its best-IoU unmatched ground truth
/// of the same label if that IoU reaches `iou_threshold`.
inline MatchResult match_detections(std::span<const Detection> dets,
                                    std::span<const Annotation> gts,
                                    double iou_threshold) {
  MatchResult res;
  std::vector<bool> matched(gts.size(), false);
  for (const auto i : detection_order(dets)) {
    double best_iou = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].label != dets[i].label) continue;
      const double iou = iou_pair(dets[i].box, gts[g].box);
      if (iou > best_iou) {
        best_iou = iou;
        best_gt = g;
      }
    }
    const bool tp = best_gt < gts.size() && best_iou >= iou_threshold;
    if (tp) matched[best_gt] = true;
    res.labels.push_back({dets[i].score, tp});
    res.det_index.push_back(i);
  }
  res.fn = static_cast<std::size_t>(std::count(matched.begin(), matched.end(), false));
  return res;
}

struct APResult {
  double value = 0.0;
  bool defined = false;  // false when the class has no ground truth
  std::size_t n_gt = 0;
};

/// All-point interpolated AP. Detections sharing a score enter the PR curve
/// together, so the result does not depend on their order.
inline APResult average_precision(std::span<const ScoredLabel> labels, std::size_t n_gt) {
  if (n_gt == 0) return {0.0, false, 0};
  std::vector<ScoredLabel> sorted(labels.begin(), labels.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });

  std::vector<double> recall, precision;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    for (; j < sorted.size() && sorted[j].score == sorted[i].score; ++j) {
      sorted[j].tp ? ++tp : ++fp;
    }
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    i = j;
  }
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    if (recall[k] > prev_recall) {
      ap += (recall[k] - prev_recall) * precision[k];
      prev_recall = recall[k];
    }
  }
  return {ap, true, n_gt};
}

/// Mean over classes with at least one ground-truth instance.
inline double mean_average_precision(const std::map<std::string, APResult>& per_class) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [label, ap] : per_class) {
    if (!ap.defined) continue;
    sum += ap.value;
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::kNoDefinedClasses, "no class has ground truth");
  return sum / static_cast<double>(n);
}

namespace detail {

// Coverage of the cells of the grid induced by every x and y coordinate.
class CompressedGrid {
 public:
  explicit CompressedGrid(std::initializer_list<std::span<const BBox>> sets) {
    for (const auto& set : sets) {
      for (const auto& b : set) {
        xs_.push_back(b.x1());
        xs_.push_back(b.x2());
        ys_.push_back(b.y1());
        ys_.push_back(b.y2());
      }
    }
    std::sort(xs_.begin(), xs_.end());
    xs_.erase(std::unique(xs_.begin(), xs_.end()), xs_.end());
    std::sort(ys_.begin(), ys_.end());
    ys_.erase(std::unique(ys_.begin(), ys_.end()), ys_.end());
  }

  std::size_t cols() const { return xs_.empty() ? 0 : xs_.size() - 1; }
  std::size_t rows() const { return ys_.empty() ? 0 : ys_.size() - 1; }

  std::vector<bool> cover(std::span<const BBox> boxes) const {
    std::vector<bool> covered(cols() * rows(), false);
    for (const auto& b : boxes) {
      const auto cx1 = index_of(xs_, b.x1()), cx2 = index_of(xs_, b.x2());
      const auto cy1 = index_of(ys_, b.y1()), cy2 = index_of(ys_, b.y2());
      for (auto r = cy1; r < cy2; ++r) {
        for (auto c = cx1; c < cx2; ++c) covered[r * cols() + c] = true;
      }
    }
    return covered;
  }

  double cell_area(std::size_t idx) const {
    const auto r = idx / cols(), c = idx % cols();
    return (xs_[c + 1] - xs_[c]) * (ys_[r + 1] - ys_[r]);
  }

 private:
  static std::size_t index_of(const std::vector<double>& v, double x) {
    return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
  }

  std::vector<double> xs_, ys_;
};

}  // namespace detail

/// Exact area of the union of rectangles (coordinate compression).
inline double union_area(std::span<const BBox> boxes) {
  if (boxes.empty()) return 0.0;
  const detail::CompressedGrid grid({boxes});
  const auto covered = grid.cover(boxes);
  double area = 0.0;
  for (std::size_t i = 0; i < covered.size(); ++i) {
    if (covered[i]) area += grid.cell_area(i);
  }
  return area;
}

/// IoU of the region covered by `g` and the region covered by `s`.
inline double union_iou(std::span<const BBox> g, std::span<const BBox> s) {
  if (g.empty() && s.empty()) {
    throw Error(ErrorCode::kBothEmpty, "union IoU of two empty box sets");
  }
  const detail::CompressedGrid grid({g, s});
  const auto cg = grid.cover(g);
  const auto cs = grid.cover(s);
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < cg.size(); ++i) {
    if (cg[i] && cs[i]) inter += grid.cell_area(i);
    if (cg[i] || cs[i]) uni += grid.cell_area(i);
  }
  return inter / uni;
}

struct EvalOptions {
  double match_iou = 0.5;
  double score_threshold = 0.5;
  double union_iou_min = 0.2;
};

struct ImageVerdict {
  std::string id;
  std::size_t n_annotations = 0;
  std::size_t n_detections = 0;  // after the score threshold
  bool cond_count = false;
  bool cond_union_iou = false;
  std::optional<double> union_iou;  // absent for negative images
  bool correct = false;
};

/// A positive image is correct when it has at least half as many detections
/// as annotations and the union IoU exceeds `union_iou_min`. A negative
/// image is correct only with zero detections; its union condition is
/// vacuously true.
inline ImageVerdict judge_image(const std::string& id, std::span<const BBox> annotations,
                                std::span<const Detection> dets, const EvalOptions& opt) {
  std::vector<BBox> kept;
  for (const auto& d : dets) {
    if (d.score >= opt.score_threshold) kept.push_back(d.box);
  }
  ImageVerdict v;
  v.id = id;
  v.n_annotations = annotations.size();
  v.n_detections = kept.size();
  if (annotations.empty()) {
    v.cond_count = kept.empty();
    v.cond_union_iou = true;
  } else {
    v.cond_count = static_cast<double>(kept.size()) >= 0.5 * static_cast<double>(annotations.size());
    v.union_iou = union_iou(annotations, kept);
    v.cond_union_iou = *v.union_iou > opt.union_iou_min;
  }
  v.correct = v.cond_count && v.cond_union_iou;
  return v;
}

struct EvalReport {
  std::map<std::string, APResult> per_class;
  std::optional<double> map;
  std::vector<ImageVerdict> per_image;
  double accuracy = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Full evaluation of `dets` against `gt`. Images are those of the manifest
/// followed by any image that only appears among the detections (treated
/// as negative).
inline EvalReport evaluate(const Manifest& gt, std::span<const Detection> dets,
                           const EvalOptions& opt = {}) {
  std::vector<std::string> ids;
  std::unordered_map<std::string, const AnnotationRecord*> records;
  for (const auto& r : gt.records) {
    if (records.emplace(r.image_path, &r).second) ids.push_back(r.image_path);
  }
  std::unordered_map<std::string, std::vector<Detection>> by_image;
  std::set<std::string> extra;
  for (const auto& d : dets) {
    by_image[d.image_id].push_back(d);
    if (!records.count(d.image_id)) extra.insert(d.image_id);
  }
  ids.insert(ids.end(), extra.begin(), extra.end());

  EvalReport report;
  std::map<std::string, std::vector<ScoredLabel>> labels;
  std::map<std::string, std::size_t> n_gt;
  std::size_t correct = 0;
  for (const auto& id : ids) {
    const auto rit = records.find(id);
    const std::vector<Annotation> none;
    const auto& annots = rit == records.end() ? none : rit->second->boxes;
    const auto dit = by_image.find(id);
    const std::vector<Detection> no_dets;
    const auto& image_dets = dit == by_image.end() ? no_dets : dit->second;

    for (const auto& a : annots) ++n_gt[a.label];
    for (const auto& d : image_dets) n_gt.try_emplace(d.label, 0);
    const auto m = match_detections(image_dets, annots, opt.match_iou);
    for (std::size_t k = 0; k < m.labels.size(); ++k) {
      labels[image_dets[m.det_index[k]].label].push_back(m.labels[k]);
    }
    const auto tp = m.tp_count();
    report.tp += tp;
    report.fp += m.labels.size() - tp;
    report.fn += m.fn;

    std::vector<BBox> boxes;
    for (const auto& a : annots) boxes.push_back(a.box);
    auto verdict = judge_image(id, boxes, image_dets, opt);
    correct += verdict.correct;
    report.per_image.push_back(std::move(verdict));
  }
  for (const auto& [label, count] : n_gt) {
    report.per_class[label] = average_precision(labels[label], count);
  }
  const bool any_defined = std::any_of(report.per_class.begin(), report.per_class.end(),
                                       [](const auto& kv) { return kv.second.defined; });
  if (any_defined) report.map = mean_average_precision(report.per_class);
  report.accuracy =
      ids.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(ids.size());
  return report;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [label, ap] : r.per_class) {
    per_class[label] = {{"ap", ap.value}, {"defined", ap.defined}, {"n_gt", ap.n_gt}};
  }
  nlohmann::json per_image = nlohmann::json::array();
  for (const auto& v : r.per_image) {
    per_image.push_back({{"id", v.id},
                         {"correct", v.correct},
                         {"cond_count", v.cond_count},
                         {"cond_union_iou", v.cond_union_iou},
                         {"n_annotations", v.n_annotations},
                         {"n_detections", v.n_detections},
                         {"union_iou", v.union_iou ? nlohmann::json(*v.union_iou)
                                                   : nlohmann::json(nullptr)}});
  }
  return {{"map", r.map ? nlohmann::json(*r.map) : nlohmann::json(nullptr)},
          {"per_class", std::move(per_class)},
          {"per_image", std::move(per_image)},
          {"accuracy", r.accuracy},
          {"tp", r.tp},
          {"fp", r.fp},
          {"fn", r.fn}};
}

/// Rows `image_path,x1,y1,x2,y2,class,score`.
inline std::vector<Detection> read_detections_csv(std::istream& in,
                                                  const std::string& source = "<stream>") {
  std::vector<Detection> dets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_skippable(line)) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 7) {
      detail::malformed(source, line_no, "expected 7 fields, got " + std::to_string(f.size()));
    }
    if (f[0] == "image_path") continue;
    double v[5];
    for (int i = 0; i < 5; ++i) {
      const auto x = detail::parse_number(f[i == 4 ? 6 : 1 + i]);
      if (!x) detail::malformed(source, line_no, "non-numeric field");
      v[i] = *x;
    }
    if (!(v[0] < v[2])) detail::malformed(source, line_no, "x1 >= x2");
    if (!(v[1] < v[3])) detail::malformed(source, line_no, "y1 >= y2");
    if (!(v[4] >= 0.0 && v[4] <= 1.0)) detail::malformed(source, line_no, "score outside [0, 1]");
    dets.push_back({std::string(f[0]), BBox(v[0], v[1], v[2], v[3]), std::string(f[5]), v[4]});
  }
  return dets;
}

inline std::vector<Detection> read_detections_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_detections_csv(in, path);
}

inline void write_detections_csv(std::ostream& out, std::span<const Detection> dets,
                                 const std::string& header_comment = {}) {
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  for (const auto& d : dets) {
    out << d.image_id << ',' << detail::format_number(d.box.x1()) << ','
        << detail::format_number(d.box.y1()) << ',' << detail::format_number(d.box.x2())
        << ',' << detail::format_number(d.box.y2()) << ',' << d.label << ','
        << detail::format_number(d.score) << '\n';
  }
}

}  // namespace tileforge
