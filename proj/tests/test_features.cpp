#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "histoseg/error.hpp"
#include "histoseg/features.hpp"
#include "histoseg/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace histoseg;
using testutil::random_label_map;

namespace {

constexpr std::uint8_t kTumor = static_cast<std::uint8_t>(TissueClass::HighGradeTumor);
constexpr std::uint8_t kBg = static_cast<std::uint8_t>(TissueClass::Background);

// blobby random map: a few rectangles of random classes over a stroma field
LabelMap blob_map(int size, std::uint64_t seed, double ignore_fraction = 0.0) {
  Rng rng(seed);
  LabelMap map(size, size,
               static_cast<std::uint8_t>(TissueClass::StromaLaminaPropria));
  const int blobs = 6 + static_cast<int>(rng.below(10));
  for (int b = 0; b < blobs; ++b) {
    const int y0 = static_cast<int>(rng.below(size));
    const int x0 = static_cast<int>(rng.below(size));
    const int bh = 1 + static_cast<int>(rng.below(12));
    const int bw = 1 + static_cast<int>(rng.below(12));
    const std::uint8_t cls = static_cast<std::uint8_t>(rng.below(14));
    for (int y = y0; y < std::min(size, y0 + bh); ++y) {
      for (int x = x0; x < std::min(size, x0 + bw); ++x) map.at(y, x) = cls;
    }
  }
  if (ignore_fraction > 0.0) {
    for (auto& v : map.values) {
      if (rng.uniform() < ignore_fraction) v = kIgnoreLabel;
    }
  }
  return map;
}

} // namespace

TEST_SUITE_BEGIN("features");

TEST_CASE("connected components: basics") {
  LabelMap map(4, 4, kBg);
  CHECK(connected_components(map, TissueClass::HighGradeTumor, 4).empty());

  map.at(1, 1) = kTumor;
  map.at(2, 2) = kTumor;  // diagonal touch
  CHECK(connected_components(map, TissueClass::HighGradeTumor, 4).size() == 2);
  CHECK(connected_components(map, TissueClass::HighGradeTumor, 8).size() == 1);

  LabelMap block(3, 3, kTumor);
  const auto clusters = connected_components(block, TissueClass::HighGradeTumor, 4);
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].pixel_count == 9);
  CHECK(clusters[0].area == doctest::Approx(9.0));
}

TEST_CASE("connected components match the flood-fill oracle on random maps") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const LabelMap map = blob_map(64, seed, seed % 3 == 0 ? 0.05 : 0.0);
    for (int connectivity : {4, 8}) {
      const auto impl =
          connected_components(map, TissueClass::HighGradeTumor, connectivity);
      const auto want = oracle::flood_components(map, kTumor, connectivity);
      REQUIRE(impl.size() == want.size());
      for (std::size_t k = 0; k < impl.size(); ++k) {
        CHECK(impl[k].pixel_count ==
              static_cast<std::int64_t>(want[k].size()));
        std::vector<std::int64_t> a = impl[k].pixels;
        std::vector<std::int64_t> b = want[k];
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
      }
    }
  }
}

TEST_CASE("cluster filter boundary: 29 removed, 30 kept, area scaling") {
  LabelMap map(10, 10,
               static_cast<std::uint8_t>(TissueClass::StromaLaminaPropria));
  // 29-pixel tumor bar
  for (int i = 0; i < 29; ++i) map.values[i] = kTumor;
  auto clusters = connected_components(map, TissueClass::HighGradeTumor, 4);
  LabelMap working = map;
  CHECK(filter_small_clusters(clusters, working).empty());
  // removed pixels were relabeled
  for (int i = 0; i < 29; ++i) CHECK(working.values[i] != kTumor);

  // one more pixel crosses the boundary inclusively
  map.values[29] = kTumor;
  clusters = connected_components(map, TissueClass::HighGradeTumor, 4);
  working = map;
  CHECK(filter_small_clusters(clusters, working).size() == 1);

  // 10 pixels at 4 um^2/pixel = 40 um^2, kept
  LabelMap coarse(5, 5, kBg);
  for (int i = 0; i < 10; ++i) coarse.values[i] = kTumor;
  auto coarse_clusters =
      connected_components(coarse, TissueClass::HighGradeTumor, 4, 4.0);
  LabelMap coarse_working = coarse;
  CHECK(filter_small_clusters(coarse_clusters, coarse_working, 30.0, 4.0).size() == 1);
}

TEST_CASE("removed clusters take the boundary majority, ties to stroma") {
  LabelMap map(5, 5, static_cast<std::uint8_t>(TissueClass::Mucus));
  map.at(2, 2) = kTumor;
  auto clusters = connected_components(map, TissueClass::HighGradeTumor, 4);
  LabelMap working = map;
  (void)filter_small_clusters(clusters, working);
  CHECK(working.at(2, 2) == static_cast<std::uint8_t>(TissueClass::Mucus));

  // perfect two-class tie around the speck -> stroma lamina propria
  LabelMap tie(3, 3, static_cast<std::uint8_t>(TissueClass::Mucus));
  tie.at(0, 0) = tie.at(0, 1) = tie.at(0, 2) = tie.at(1, 0) =
      static_cast<std::uint8_t>(TissueClass::Muscle);
  tie.at(1, 1) = kTumor;
  auto tie_clusters = connected_components(tie, TissueClass::HighGradeTumor, 4);
  LabelMap tie_working = tie;
  (void)filter_small_clusters(tie_clusters, tie_working);
  CHECK(tie_working.at(1, 1) ==
        static_cast<std::uint8_t>(TissueClass::StromaLaminaPropria));
}

TEST_CASE("slide histogram counting") {
  LabelMap map(1, 4);
  map.values = {0, 0, 3, 5};
  const auto bins = slide_histogram(map);
  CHECK(bins[0] == doctest::Approx(0.5));
  CHECK(bins[3] == doctest::Approx(0.25));
  CHECK(bins[5] == doctest::Approx(0.25));
  CHECK(bins[1] == 0.0);

  LabelMap uniform(3, 3, 2);
  CHECK(slide_histogram(uniform)[2] == doctest::Approx(1.0));

  LabelMap all_ignore(2, 2, kIgnoreLabel);
  CHECK_THROWS_AS((void)slide_histogram(all_ignore), Error);
}

TEST_CASE("histogram sums to 1 on random maps") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const LabelMap map = blob_map(48, seed, 0.1);
    const auto bins = slide_histogram(map);
    double sum = 0.0;
    for (double b : bins) {
      CHECK(b >= 0.0);
      sum += b;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("extract_feature_vector hand cases") {
  LabelMap map(20, 20, kBg);
  // two tumor bars: 40 and 60 pixels
  for (int x = 0; x < 20; ++x) map.at(0, x) = map.at(1, x) = kTumor;
  for (int x = 0; x < 20; ++x) {
    map.at(5, x) = map.at(6, x) = map.at(7, x) = kTumor;
  }
  const SlideFeatureVector f = extract_feature_vector(map, 1.0, 4);
  CHECK(f.tumor_cluster_count == 2);
  CHECK(f.tumor_cluster_mean_area == doctest::Approx(50.0));
  CHECK(f.tumor_cluster_min_area == doctest::Approx(40.0));
  CHECK(f.tumor_cluster_max_area == doctest::Approx(60.0));

  LabelMap tumor_free(8, 8, kBg);
  const SlideFeatureVector g = extract_feature_vector(tumor_free);
  CHECK(g.tumor_cluster_count == 0);
  CHECK(g.tumor_cluster_mean_area == 0.0);
  CHECK(g.tumor_cluster_min_area == 0.0);
  CHECK(g.tumor_cluster_max_area == 0.0);

  LabelMap speck(8, 8, kBg);
  for (int i = 0; i < 10; ++i) speck.values[i] = kTumor;
  CHECK(extract_feature_vector(speck, 1.0, 4).tumor_cluster_count == 0);
}

TEST_CASE("extract_feature_vector matches the counting oracle exactly") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const LabelMap map = blob_map(64, seed + 100, seed % 4 == 0 ? 0.05 : 0.0);
    for (int connectivity : {4, 8}) {
      const SlideFeatureVector impl =
          extract_feature_vector(map, 1.0, connectivity);
      const SlideFeatureVector want =
          oracle::feature_vector(map, 1.0, connectivity);
      CHECK(impl.tumor_cluster_count == want.tumor_cluster_count);
      CHECK(impl.tumor_cluster_mean_area == want.tumor_cluster_mean_area);
      CHECK(impl.tumor_cluster_min_area == want.tumor_cluster_min_area);
      CHECK(impl.tumor_cluster_max_area == want.tumor_cluster_max_area);
      for (int c = 0; c < kTissueClassCount; ++c) {
        CHECK(impl.histogram[c] == want.histogram[c]);
      }
    }
  }
}

TEST_CASE("feature vector invariant under content translation") {
  LabelMap map(32, 32, kBg);
  for (int y = 2; y < 12; ++y) {
    for (int x = 2; x < 12; ++x) map.at(y, x) = kTumor;
  }
  for (int y = 14; y < 20; ++y) {
    for (int x = 5; x < 25; ++x) {
      map.at(y, x) = static_cast<std::uint8_t>(TissueClass::LowGradeDysplasia);
    }
  }
  LabelMap shifted(32, 32, kBg);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (map.at(y, x) != kBg && y + 7 < 32 && x + 4 < 32) {
        shifted.at(y + 7, x + 4) = map.at(y, x);
      }
    }
  }
  const SlideFeatureVector a = extract_feature_vector(map);
  const SlideFeatureVector b = extract_feature_vector(shifted);
  CHECK(a.tumor_cluster_count == b.tumor_cluster_count);
  CHECK(a.tumor_cluster_mean_area == doctest::Approx(b.tumor_cluster_mean_area));
  for (int c = 0; c < kTissueClassCount; ++c) {
    if (c == static_cast<int>(TissueClass::Background)) continue;
    CHECK(a.histogram[c] == doctest::Approx(b.histogram[c]).epsilon(1e-12));
  }
}

TEST_CASE("split_fragments: blobs, debris rule, empty map") {
  LabelMap map(120, 120, kBg);
  auto fill_disk = [&](int cy, int cx, int r, std::uint8_t cls) {
    for (int y = cy - r; y <= cy + r; ++y) {
      for (int x = cx - r; x <= cx + r; ++x) {
        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) {
          map.at(y, x) = cls;
        }
      }
    }
  };
  fill_disk(30, 30, 25, 5);   // ~1960 px
  fill_disk(85, 85, 28, 0);   // ~2460 px
  fill_disk(20, 100, 10, 6);  // ~314 px of debris
  const auto fragments = split_fragments(map);
  REQUIRE(fragments.size() == 2);
  // ordering by (min_row, min_col): the disk at (30,30) starts higher
  std::int64_t first_px = 0, second_px = 0;
  for (auto v : fragments[0].values) first_px += (v != kIgnoreLabel);
  for (auto v : fragments[1].values) second_px += (v != kIgnoreLabel);
  CHECK(first_px >= 1000);
  CHECK(second_px >= 1000);
  CHECK(fragments[0].values[30 * 120 + 30] == 5);
  CHECK(fragments[1].values[85 * 120 + 85] == 0);

  CHECK(split_fragments(LabelMap(32, 32, kBg)).empty());

  LabelMap tiny(64, 64, kBg);
  for (int i = 0; i < 500; ++i) tiny.values[i] = 3;
  CHECK(split_fragments(tiny).empty());
}

TEST_CASE("lumen relabeling thresholds") {
  ImageRGB rgb(1, 3);
  auto set_px = [&](int x, int value) {
    for (int ch = 0; ch < 3; ++ch) {
      rgb.at(0, x, ch) = static_cast<float>(value) / 255.0f;
    }
  };
  set_px(0, 250);
  set_px(1, 240);
  set_px(2, 0);
  LabelMap ref(1, 3, 5);
  const LabelMap out = relabel_lumen(rgb, ref);
  CHECK(out.values[0] == kBg);  // mean 250 > 240
  CHECK(out.values[1] == 5);    // mean exactly 240: unchanged
  CHECK(out.values[2] == 5);

  ImageRGB wrong(2, 2);
  CHECK_THROWS_AS((void)relabel_lumen(wrong, ref), Error);
}

TEST_CASE("worst grade ordering and properties") {
  using RC = RiskCategory;
  const RC both[] = {RC::LowGradeDysplasia, RC::Hyperplastic};
  CHECK(worst_grade(both) == RC::LowGradeDysplasia);
  const RC single[] = {RC::Other};
  CHECK(worst_grade(single) == RC::Other);
  const RC three[] = {RC::HighGradeTumor, RC::Other, RC::LowGradeDysplasia};
  CHECK(worst_grade(three) == RC::HighGradeTumor);

  CHECK_THROWS_AS((void)worst_grade(std::span<const RC>{}), Error);

  // idempotent, order independent, monotone
  Rng rng(55);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<RC> grades;
    const int n = 1 + static_cast<int>(rng.below(6));
    for (int i = 0; i < n; ++i) {
      grades.push_back(static_cast<RC>(rng.below(4)));
    }
    const RC w = worst_grade(grades);
    std::vector<RC> shuffled = grades;
    rng.shuffle(shuffled);
    CHECK(worst_grade(shuffled) == w);
    const RC pair[] = {w, w};
    CHECK(worst_grade(pair) == w);
    std::vector<RC> extended = grades;
    extended.push_back(static_cast<RC>(rng.below(4)));
    CHECK(static_cast<int>(worst_grade(extended)) >= static_cast<int>(w));
  }
}

TEST_CASE("risk category names round trip") {
  for (int g = 0; g < kRiskCategoryCount; ++g) {
    const auto grade = static_cast<RiskCategory>(g);
    CHECK(parse_risk_category(risk_category_name(grade)) == grade);
  }
  CHECK_THROWS_AS((void)parse_risk_category("benign"), Error);
}

TEST_SUITE_END();
