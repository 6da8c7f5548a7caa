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
#include "tileforge/dataset.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

namespace tileforge {
namespace {

Manifest parse(const std::string& text) {
  std::istringstream in(text);
  return read_annotations_csv(in, "test.csv");
}

Manifest synthetic(std::size_t positives, std::size_t negatives) {
  Manifest m;
  for (std::size_t i = 0; i < positives + negatives; ++i) {
    AnnotationRecord r{"img" + std::to_string(i) + ".png", {}, "g" + std::to_string(i), {}};
    if (i < positives) r.boxes.push_back({BBox(0, 0, 10, 10), "defect"});
    m.records.push_back(std::move(r));
  }
  return m;
}

Manifest grouped(int groups, int per_group) {
  Manifest m;
  for (int g = 0; g < groups; ++g) {
    for (int t = 0; t < per_group; ++t) {
      const std::string path = "blade" + std::to_string(g) + "_r" + std::to_string(t / 5) + "_c" +
                               std::to_string(t % 5) + ".png";
      m.records.push_back({path, {}, default_group_id(path), {}});
    }
  }
  return m;
}

TEST(ReadCsvTest, PositiveRowWithTileGroup) {
  const auto m = parse("a_r0_c0.png,100,120,114,138,defect\n");
  ASSERT_EQ(m.records.size(), 1u);
  const auto& r = m.records[0];
  ASSERT_EQ(r.boxes.size(), 1u);
  EXPECT_EQ(r.boxes[0].box, BBox(100, 120, 114, 138));
  EXPECT_EQ(r.boxes[0].box.width(), 14);
  EXPECT_EQ(r.boxes[0].box.height(), 18);
  EXPECT_EQ(r.boxes[0].label, "defect");
  EXPECT_EQ(r.group_id, "a");
}

TEST(ReadCsvTest, NegativeRow) {
  const auto m = parse("b_r1_c2.png,,,,,\n");
  ASSERT_EQ(m.records.size(), 1u);
  EXPECT_FALSE(m.records[0].positive());
  EXPECT_EQ(m.records[0].group_id, "b");
}

TEST(ReadCsvTest, MalformedLineReportsLineNumber) {
  try {
    parse("a.png,1,1,5,5,defect\nc.png,50,50,40,60,defect\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedLine);
    EXPECT_NE(std::string(e.what()).find("test.csv:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse("a.png,1,1,5\n"), Error);
  EXPECT_THROW(parse("a.png,x,1,5,5,defect\n"), Error);
  EXPECT_THROW(parse("a.png,1,9,5,5,defect\n"), Error);
}

TEST(ReadCsvTest, AccumulatesAndSkipsHeaderAndComments) {
  const auto m = parse(
      "# tool_version=0.1.0 seed=3\n"
      "image_path,x1,y1,x2,y2,class\n"
      "dir/s1_r0_c0.png,1,2,3,4,defect\n"
      "\n"
      "dir/s1_r0_c0.png,5,6,7,8,crack\n"
      "other.tif,1,1,2,2,defect,blade9\n");
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[0].boxes.size(), 2u);
  EXPECT_EQ(m.records[0].group_id, "s1");
  EXPECT_EQ(m.records[1].group_id, "blade9");
  EXPECT_EQ(m.box_count(), 3u);
}

TEST(ReadCsvTest, WriteThenReadRoundTrips) {
  const auto m = parse(
      "a_r0_c0.png,100.5,120,114,138.25,defect\n"
      "b_r1_c2.png,,,,,\n"
      "x.png,1,1,2,2,defect,custom\n");
  std::ostringstream out;
  write_annotations_csv(out, m, "tool_version=0.1.0 seed=0");
  EXPECT_EQ(out.str().rfind("# tool_version=0.1.0 seed=0\n", 0), 0u);
  EXPECT_EQ(parse(out.str()), m);
}

TEST(BalanceTest, KeepsRoundedRatioOfNegatives) {
  const auto r = balance_negatives(synthetic(363, 600), 1.1, 7);
  EXPECT_EQ(r.negatives_kept, 399u);
  EXPECT_EQ(r.manifest.positive_count(), 363u);
  EXPECT_EQ(r.manifest.negative_count(), 399u);
}

TEST(BalanceTest, TooFewNegativesKeepsAll) {
  const auto r = balance_negatives(synthetic(10, 5), 1.1, 7);
  EXPECT_EQ(r.negatives_kept, 5u);
  EXPECT_DOUBLE_EQ(r.achieved_ratio, 0.5);
}

TEST(BalanceTest, ZeroRatioDropsNegatives) {
  const auto r = balance_negatives(synthetic(10, 5), 0.0, 7);
  EXPECT_EQ(r.negatives_kept, 0u);
  EXPECT_EQ(r.manifest.records.size(), 10u);
}

TEST(BalanceTest, NoPositivesThrows) {
  try {
    balance_negatives(synthetic(0, 5), 1.1, 7);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoPositives);
  }
}

TEST(BalanceTest, ReproducibleAndCountLaw) {
  std::mt19937 gen(43);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t pos = 1 + gen() % 50, neg = gen() % 120;
    const double ratio = (gen() % 400) / 100.0;
    const auto m = synthetic(pos, neg);
    const std::uint64_t seed = gen();
    const auto a = balance_negatives(m, ratio, seed);
    const auto b = balance_negatives(m, ratio, seed);
    EXPECT_EQ(a.manifest, b.manifest);
    const auto target = static_cast<std::size_t>(std::floor(ratio * pos + 0.5));
    EXPECT_EQ(a.manifest.negative_count(), std::min(neg, target));
    EXPECT_EQ(a.manifest.positive_count(), pos);
  }
}

std::map<int, std::set<std::string>> groups_per_fold(const std::vector<Manifest>& folds) {
  std::map<int, std::set<std::string>> out;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    for (const auto& r : folds[i].records) out[static_cast<int>(i)].insert(r.group_id);
  }
  return out;
}

TEST(KFoldTest, SixGroupsThreeFolds) {
  const auto folds = grouped_kfold(grouped(6, 4), 3, 1);
  ASSERT_EQ(folds.size(), 3u);
  for (const auto& [i, g] : groups_per_fold(folds)) EXPECT_EQ(g.size(), 2u);
}

TEST(KFoldTest, SevenGroupsThreeFolds) {
  const auto folds = grouped_kfold(grouped(7, 4), 3, 1);
  std::vector<std::size_t> sizes;
  for (const auto& [i, g] : groups_per_fold(folds)) sizes.push_back(g.size());
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 3}));
}

TEST(KFoldTest, TooFewGroupsThrows) {
  try {
    grouped_kfold(grouped(2, 3), 3, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewGroups);
  }
  EXPECT_THROW(grouped_kfold(grouped(5, 1), 1, 1), Error);
}

TEST(KFoldTest, FoldsAreDisjointAndComplete) {
  std::mt19937 gen(47);
  for (int trial = 0; trial < 60; ++trial) {
    const int k = 2 + static_cast<int>(gen() % 5);
    const int n_groups = k + static_cast<int>(gen() % 20);
    Manifest m;
    for (int i = 0; i < 150; ++i) {
      m.records.push_back({"r" + std::to_string(i) + ".png", {},
                           "g" + std::to_string(gen() % n_groups), {}});
    }
    std::set<std::string> distinct;
    for (const auto& r : m.records) distinct.insert(r.group_id);
    if (distinct.size() < static_cast<std::size_t>(k)) continue;
    const auto folds = grouped_kfold(m, k, gen());
    std::size_t total = 0;
    for (const auto& f : folds) total += f.records.size();
    EXPECT_EQ(total, m.records.size());
    const auto gpf = groups_per_fold(folds);
    std::size_t lo = SIZE_MAX, hi = 0;
    for (int i = 0; i < k; ++i) {
      const auto it = gpf.find(i);
      const std::size_t n = it == gpf.end() ? 0 : it->second.size();
      lo = std::min(lo, n);
      hi = std::max(hi, n);
      for (int j = i + 1; j < k; ++j) {
        if (it == gpf.end() || !gpf.count(j)) continue;
        for (const auto& g : it->second) EXPECT_FALSE(gpf.at(j).count(g));
      }
    }
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(KFoldTest, SelectFold) {
  const auto m = assign_folds(grouped(6, 2), 3, 5);
  const auto val = select_fold(m, 1, true);
  const auto train = select_fold(m, 1, false);
  EXPECT_EQ(val.records.size() + train.records.size(), m.records.size());
  for (const auto& r : val.records) EXPECT_EQ(*r.fold, 1);
  for (const auto& r : train.records) EXPECT_NE(*r.fold, 1);
}

TEST(HistogramTest, TypicalDefectBelowAnchorArea) {
  const auto m = parse("a.png,0,0,14,18,defect\n");
  const auto edges = uniform_edges(0, 4, 16);
  const auto h = normalized_area_histogram(m, 1024, edges);
  EXPECT_EQ(h.counts[0], 1u);  // 252/1024 ~ 0.246 in [0, 0.25)
  EXPECT_DOUBLE_EQ(h.fraction_below_one, 1.0);
  const auto h2 = normalized_area_histogram(scale_annotations(m, 2.0), 1024, edges);
  EXPECT_EQ(h2.counts[3], 1u);  // 1008/1024 ~ 0.984 in [0.75, 1)
  EXPECT_DOUBLE_EQ(h2.fraction_below_one, 1.0);
  const auto exact = normalized_area_histogram(m, 1024, std::vector<double>{0.2460937, 0.2460938});
  EXPECT_EQ(exact.counts[0], 1u);
}

TEST(HistogramTest, AnchorSizedBoxIsExactlyOne) {
  const auto m = parse("a.png,0,0,32,32,defect\n");
  const auto h = normalized_area_histogram(m, 1024, std::vector<double>{0.5, 1.0});
  EXPECT_EQ(h.counts[0], 1u);  // last bin closed
  EXPECT_DOUBLE_EQ(h.fraction_below_one, 0.0);
  const auto h2 = normalized_area_histogram(m, 1024, std::vector<double>{1.0, 2.0});
  EXPECT_EQ(h2.counts[0], 1u);
}

TEST(HistogramTest, TotalsAndScalingLaw) {
  std::mt19937 gen(53);
  Manifest m;
  for (int i = 0; i < 40; ++i) {
    AnnotationRecord r{"i" + std::to_string(i) + ".png", {}, "g", {}};
    for (int b = 0; b < static_cast<int>(gen() % 4); ++b) {
      const double x = gen() % 100, y = gen() % 100;
      r.boxes.push_back({BBox(x, y, x + 1 + gen() % 40, y + 1 + gen() % 40), "d"});
    }
    m.records.push_back(r);
  }
  const auto edges = uniform_edges(0, 1, 10);
  const auto h = normalized_area_histogram(m, 1024, edges);
  std::size_t sum = h.underflow + h.overflow;
  for (auto c : h.counts) sum += c;
  EXPECT_EQ(sum, m.box_count());
  EXPECT_EQ(h.total, m.box_count());
  const auto scaled = scale_annotations(m, 2.0);
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    for (std::size_t b = 0; b < m.records[i].boxes.size(); ++b) {
      EXPECT_EQ(scaled.records[i].boxes[b].box.area(), 4.0 * m.records[i].boxes[b].box.area());
    }
  }
  EXPECT_TRUE(normalized_area_histogram(Manifest{}, 1024, edges).total == 0);
  std::ostringstream csv;
  write_histogram_csv(csv, h);
  EXPECT_EQ(csv.str().rfind("bin_low,bin_high,count\n0,0.1,", 0), 0u);
}

TEST(ManifestJsonTest, RoundTrip) {
  auto m = assign_folds(parse("a_r0_c0.png,1,2,3,4,defect\nb.png,,,,,\nc.png,1,1,2,2,x\n"), 2, 9);
  const nlohmann::json j = m;
  EXPECT_EQ(j["seed"], 9);
  EXPECT_EQ(j["k"], 2);
  EXPECT_EQ(j.get<Manifest>(), m);
}

TEST(GroupIdTest, DefaultDerivation) {
  EXPECT_EQ(default_group_id("dir/sub/blade_7_r3_c4.png"), "blade_7");
  EXPECT_EQ(default_group_id("scan.tif"), "scan");
  EXPECT_EQ(default_group_id("x_r1.png"), "x_r1");
}

}  // namespace
}  // namespace tileforge
