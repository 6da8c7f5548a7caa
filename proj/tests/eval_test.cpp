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
#include "tileforge/eval.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"

namespace tileforge {
namespace {

Detection det(BBox b, double score, std::string label = "defect", std::string id = "img") {
  return {std::move(id), b, std::move(label), score};
}

std::vector<oracle::IntBox> random_int_boxes(std::mt19937& gen, int max_n, int grid) {
  std::vector<oracle::IntBox> out;
  const int n = static_cast<int>(gen() % (max_n + 1));
  for (int i = 0; i < n; ++i) {
    const int x1 = static_cast<int>(gen() % (grid - 1)), y1 = static_cast<int>(gen() % (grid - 1));
    const int x2 = x1 + 1 + static_cast<int>(gen() % (grid - x1 - 1));
    const int y2 = y1 + 1 + static_cast<int>(gen() % (grid - y1 - 1));
    out.push_back({x1, y1, x2, y2});
  }
  return out;
}

std::vector<BBox> to_boxes(const std::vector<oracle::IntBox>& v) {
  std::vector<BBox> out;
  for (const auto& b : v) out.emplace_back(b.x1, b.y1, b.x2, b.y2);
  return out;
}

TEST(NmsTest, DuplicateKeepsHigherScore) {
  const std::vector<Detection> d{det(BBox(0, 0, 10, 10), 0.8), det(BBox(0, 0, 10, 10), 0.9)};
  const auto k = nms(d, 0.5);
  ASSERT_EQ(k.size(), 1u);
  EXPECT_EQ(k[0].score, 0.9);
}

TEST(NmsTest, LowOverlapBothKept) {
  const std::vector<Detection> d{det(BBox(0, 0, 10, 10), 0.9), det(BBox(5, 5, 15, 15), 0.8)};
  EXPECT_EQ(nms(d, 0.5).size(), 2u);
  EXPECT_EQ(nms(d, 0.1).size(), 1u);
}

TEST(NmsTest, DisjointAndOtherClassSurvive) {
  const std::vector<Detection> d{det(BBox(0, 0, 10, 10), 0.9), det(BBox(20, 20, 30, 30), 0.8),
                                 det(BBox(0, 0, 10, 10), 0.7, "crack")};
  EXPECT_EQ(nms(d, 0.0).size(), 3u);
  EXPECT_EQ(nms(d, 1.0).size(), 3u);
  EXPECT_THROW(nms(d, 1.5), Error);
}

TEST(NmsTest, TieBrokenByLargerArea) {
  const std::vector<Detection> d{det(BBox(0, 0, 10, 10), 0.9), det(BBox(0, 0, 11, 11), 0.9)};
  const auto k = nms(d, 0.5);
  ASSERT_EQ(k.size(), 1u);
  EXPECT_EQ(k[0].box, BBox(0, 0, 11, 11));
}

TEST(NmsTest, PropertiesOnRandomInputs) {
  std::mt19937 gen(59);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Detection> d;
    for (const auto& b : to_boxes(random_int_boxes(gen, 12, 40))) {
      d.push_back(det(b, (gen() % 1000) / 1000.0, gen() % 3 ? "defect" : "crack"));
    }
    const double thr = (gen() % 100) / 100.0;
    const auto k = nms(d, thr);
    for (std::size_t i = 0; i < k.size(); ++i) {
      if (i > 0) {
        EXPECT_GE(k[i - 1].score, k[i].score);
      }
      for (std::size_t j = i + 1; j < k.size(); ++j) {
        if (k[i].label == k[j].label) {
          EXPECT_LE(iou_pair(k[i].box, k[j].box), thr);
        }
      }
    }
    auto shuffled = d;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    std::set<double> scores;
    for (const auto& x : d) scores.insert(x.score);
    if (scores.size() == d.size()) {
      EXPECT_EQ(nms(shuffled, thr), k);
    }
  }
}

TEST(MatchTest, SingleTruePositive) {
  const std::vector<Annotation> g{{BBox(0, 0, 10, 10), "defect"}};
  const std::vector<Detection> d{det(BBox(0, 0, 10, 8), 0.9)};
  const auto m = match_detections(d, g, 0.5);
  EXPECT_EQ(m.tp_count(), 1u);
  EXPECT_EQ(m.fn, 0u);
}

TEST(MatchTest, DoubleDetectionIsFalsePositive) {
  const std::vector<Annotation> g{{BBox(0, 0, 10, 10), "defect"}};
  const std::vector<Detection> d{det(BBox(0, 0, 10, 8), 0.7), det(BBox(0, 2, 10, 10), 0.9)};
  const auto m = match_detections(d, g, 0.5);
  ASSERT_EQ(m.labels.size(), 2u);
  EXPECT_TRUE(m.labels[0].tp);
  EXPECT_EQ(m.labels[0].score, 0.9);
  EXPECT_FALSE(m.labels[1].tp);
  EXPECT_EQ(m.fn, 0u);
}

TEST(MatchTest, PicksBestIouGroundTruth) {
  const std::vector<Annotation> g{{BBox(0, 0, 5.5, 10), "defect"}, {BBox(0, 0, 10, 6), "defect"}};
  const std::vector<Detection> d{det(BBox(0, 0, 10, 10), 0.9)};
  ASSERT_NEAR(iou_pair(d[0].box, g[0].box), 0.55, 1e-12);
  ASSERT_NEAR(iou_pair(d[0].box, g[1].box), 0.6, 1e-12);
  const auto m = match_detections(d, g, 0.5);
  EXPECT_EQ(m.tp_count(), 1u);
  EXPECT_EQ(m.fn, 1u);
  // The 0.55 box stays unmatched: a second identical detection claims it.
  const std::vector<Detection> d2{det(BBox(0, 0, 10, 10), 0.9), det(BBox(0, 0, 10, 10), 0.8)};
  EXPECT_EQ(match_detections(d2, g, 0.5).tp_count(), 2u);
  EXPECT_EQ(match_detections(d2, g, 0.58).tp_count(), 1u);
}

TEST(MatchTest, CountingLaws) {
  std::mt19937 gen(61);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Annotation> g;
    for (const auto& b : to_boxes(random_int_boxes(gen, 8, 30))) g.push_back({b, "defect"});
    std::vector<Detection> d;
    for (const auto& b : to_boxes(random_int_boxes(gen, 8, 30))) d.push_back(det(b, (gen() % 10) / 10.0));
    const auto m = match_detections(d, g, 0.3);
    EXPECT_LE(m.tp_count(), std::min(d.size(), g.size()));
    EXPECT_EQ(m.tp_count() + m.fn, g.size());
  }
}

TEST(ApTest, Examples) {
  EXPECT_EQ(average_precision(std::vector<ScoredLabel>{{0.9, true}}, 1).value, 1.0);
  EXPECT_EQ(average_precision(std::vector<ScoredLabel>{{0.9, true}, {0.8, false}}, 2).value, 0.5);
  EXPECT_EQ(average_precision(std::vector<ScoredLabel>{{0.9, false}, {0.8, true}}, 1).value, 0.5);
  const auto undefined = average_precision(std::vector<ScoredLabel>{}, 0);
  EXPECT_FALSE(undefined.defined);
  EXPECT_EQ(undefined.value, 0.0);
  EXPECT_EQ(average_precision(std::vector<ScoredLabel>{}, 3).value, 0.0);
}

TEST(ApTest, HandComputedCurve) {
  // 3 GT; TP, FP, TP, FP, TP -> precision envelope 1, 2/3, 3/5.
  const std::vector<ScoredLabel> l{{0.9, true}, {0.8, false}, {0.7, true}, {0.6, false}, {0.5, true}};
  EXPECT_NEAR(average_precision(l, 3).value, (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0, 1e-15);
}

TEST(ApTest, TiesDoNotDependOnOrder) {
  const std::vector<ScoredLabel> a{{0.5, true}, {0.5, false}};
  const std::vector<ScoredLabel> b{{0.5, false}, {0.5, true}};
  EXPECT_EQ(average_precision(a, 1).value, average_precision(b, 1).value);
  EXPECT_EQ(average_precision(a, 1).value, 0.5);
}

TEST(ApTest, MatchesBruteForceOnRandomInstances) {
  std::mt19937 gen(67);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n_gt = 1 + gen() % 10;
    const std::size_t n_det = gen() % 11;
    std::vector<ScoredLabel> l;
    std::vector<std::pair<double, bool>> raw;
    std::size_t tps = 0;
    for (std::size_t i = 0; i < n_det; ++i) {
      const double s = (gen() % 20) / 20.0;
      const bool tp = tps < n_gt && gen() % 2;
      tps += tp;
      l.push_back({s, tp});
      raw.emplace_back(s, tp);
    }
    EXPECT_EQ(average_precision(l, n_gt).value, oracle::brute_force_ap(raw, n_gt));
  }
}

TEST(MapTest, Examples) {
  EXPECT_DOUBLE_EQ(mean_average_precision({{"defect", {0.9, true, 4}}}), 0.9);
  EXPECT_DOUBLE_EQ(mean_average_precision({{"a", {0.8, true, 1}}, {"b", {0.6, true, 2}}}), 0.7);
  EXPECT_DOUBLE_EQ(
      mean_average_precision({{"a", {0.8, true, 1}}, {"b", {0.6, true, 2}}, {"c", {0.0, false, 0}}}),
      0.7);
  try {
    mean_average_precision({{"c", {0.0, false, 0}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoDefinedClasses);
  }
}

TEST(UnionTest, Examples) {
  EXPECT_EQ(union_area(std::vector<BBox>{BBox(0, 0, 1, 1), BBox(2, 2, 3, 3)}), 2.0);
  EXPECT_EQ(union_area(std::vector<BBox>{}), 0.0);
  const std::vector<BBox> a{BBox(0, 0, 10, 10)}, b{BBox(5, 5, 15, 15)};
  std::vector<BBox> both = a;
  both.push_back(b[0]);
  EXPECT_EQ(union_area(both), 175.0);
  EXPECT_EQ(oracle::pixel_union({{0, 0, 10, 10}, {5, 5, 15, 15}}, 20, 20), 175);
  EXPECT_DOUBLE_EQ(union_iou(a, b), 25.0 / 175.0);
  EXPECT_EQ(union_iou(both, both), 1.0);
  EXPECT_EQ(union_iou(a, std::vector<BBox>{}), 0.0);
  try {
    union_iou(std::vector<BBox>{}, std::vector<BBox>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBothEmpty);
  }
}

TEST(UnionTest, MatchesPixelCounting) {
  std::mt19937 gen(71);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = random_int_boxes(gen, 8, 100);
    const auto s = random_int_boxes(gen, 8, 100);
    EXPECT_EQ(union_area(to_boxes(g)), static_cast<double>(oracle::pixel_union(g, 100, 100)));
    if (g.empty() && s.empty()) continue;
    const auto [inter, uni] = oracle::pixel_set_overlap(g, s, 100, 100);
    EXPECT_EQ(union_iou(to_boxes(g), to_boxes(s)),
              static_cast<double>(inter) / static_cast<double>(uni));
  }
}

TEST(UnionTest, MonotoneAndPermutationInvariant) {
  std::mt19937 gen(73);
  for (int trial = 0; trial < 200; ++trial) {
    auto boxes = to_boxes(random_int_boxes(gen, 8, 50));
    const double a = union_area(boxes);
    auto more = boxes;
    more.emplace_back(gen() % 40, gen() % 40, 45, 45);
    EXPECT_GE(union_area(more), a);
    std::shuffle(boxes.begin(), boxes.end(), gen);
    EXPECT_EQ(union_area(boxes), a);
    auto dup = boxes;
    dup.insert(dup.end(), boxes.begin(), boxes.end());
    EXPECT_EQ(union_area(dup), a);
  }
}

TEST(AccuracyTest, HalfDetectedWithSufficientOverlap) {
  const std::vector<BBox> a{BBox(0, 0, 10, 10), BBox(20, 0, 30, 10)};
  const std::vector<Detection> d{det(BBox(0, 0, 10, 10), 0.9)};
  const auto v = judge_image("x", a, d, {});
  EXPECT_TRUE(v.cond_count);
  EXPECT_DOUBLE_EQ(*v.union_iou, 0.5);
  EXPECT_TRUE(v.cond_union_iou);
  EXPECT_TRUE(v.correct);
}

TEST(AccuracyTest, NegativeImages) {
  EXPECT_TRUE(judge_image("x", {}, {}, {}).correct);
  const std::vector<Detection> d{det(BBox(0, 0, 10, 10), 0.9)};
  EXPECT_FALSE(judge_image("x", {}, d, {}).correct);
  const std::vector<Detection> weak{det(BBox(0, 0, 10, 10), 0.2)};
  EXPECT_TRUE(judge_image("x", {}, weak, {}).correct);
}

TEST(AccuracyTest, MissedImage) {
  const std::vector<BBox> a{BBox(0, 0, 10, 10), BBox(20, 0, 30, 10)};
  const auto v = judge_image("x", a, {}, {});
  EXPECT_FALSE(v.cond_count);
  EXPECT_FALSE(v.correct);
}

TEST(AccuracyTest, FractionalHalfRule) {
  const std::vector<BBox> a{BBox(0, 0, 10, 10), BBox(20, 0, 30, 10), BBox(40, 0, 50, 10)};
  const std::vector<Detection> one{det(BBox(0, 0, 10, 10), 0.9)};
  EXPECT_FALSE(judge_image("x", a, one, {}).cond_count);
  const std::vector<Detection> two{det(BBox(0, 0, 10, 10), 0.9), det(BBox(20, 0, 30, 10), 0.9)};
  EXPECT_TRUE(judge_image("x", a, two, {}).correct);
}

TEST(AccuracyTest, VerdictInvariantUnderDetectionPermutation) {
  std::mt19937 gen(79);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = to_boxes(random_int_boxes(gen, 6, 60));
    std::vector<Detection> d;
    for (const auto& b : to_boxes(random_int_boxes(gen, 6, 60))) d.push_back(det(b, (gen() % 10) / 9.0));
    const auto v1 = judge_image("x", a, d, {});
    std::shuffle(d.begin(), d.end(), gen);
    const auto v2 = judge_image("x", a, d, {});
    EXPECT_EQ(v1.correct, v2.correct);
    EXPECT_EQ(v1.union_iou, v2.union_iou);
  }
}

TEST(EvaluateTest, PerfectDetectionsScoreOne) {
  Manifest m;
  m.records.push_back({"a.png", {{BBox(0, 0, 10, 10), "defect"}, {BBox(20, 20, 30, 34), "defect"}}, "a", {}});
  m.records.push_back({"b.png", {}, "b", {}});
  const std::vector<Detection> d{det(BBox(0, 0, 10, 10), 0.9, "defect", "a.png"),
                                 det(BBox(20, 20, 30, 34), 0.95, "defect", "a.png")};
  const auto r = evaluate(m, d);
  ASSERT_TRUE(r.map);
  EXPECT_EQ(*r.map, 1.0);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.tp, 2u);
  EXPECT_EQ(r.fp, 0u);
  EXPECT_EQ(r.fn, 0u);
  const auto j = to_json(r);
  EXPECT_EQ(j["map"], 1.0);
  EXPECT_EQ(j["per_image"].size(), 2u);
}

TEST(EvaluateTest, DetectionOnlyImageCountsAsNegative) {
  Manifest m;
  m.records.push_back({"a.png", {{BBox(0, 0, 10, 10), "defect"}}, "a", {}});
  const std::vector<Detection> d{det(BBox(0, 0, 10, 10), 0.9, "defect", "a.png"),
                                 det(BBox(0, 0, 10, 10), 0.9, "defect", "z.png")};
  const auto r = evaluate(m, d);
  ASSERT_EQ(r.per_image.size(), 2u);
  EXPECT_EQ(r.per_image[1].id, "z.png");
  EXPECT_FALSE(r.per_image[1].correct);
  EXPECT_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(*r.map, 0.5);  // tied TP and FP enter the curve together
}

TEST(DetectionsCsvTest, ParseAndRoundTrip) {
  std::istringstream in("# tool_version=0.1.0 seed=1\na.png,1,2,3,4,defect,0.75\nb.png,0,0,5,5,crack,1\n");
  const auto d = read_detections_csv(in);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0], det(BBox(1, 2, 3, 4), 0.75, "defect", "a.png"));
  std::ostringstream out;
  write_detections_csv(out, d);
  std::istringstream back(out.str());
  EXPECT_EQ(read_detections_csv(back), d);
  std::istringstream bad("a.png,1,2,3,4,defect,1.5\n");
  EXPECT_THROW(read_detections_csv(bad), Error);
  std::istringstream short_line("a.png,1,2,3,4,defect\n");
  EXPECT_THROW(read_detections_csv(short_line), Error);
}

}  // namespace
}  // namespace tileforge
