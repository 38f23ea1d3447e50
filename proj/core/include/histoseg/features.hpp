#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "histoseg/tensor.hpp"

namespace histoseg {

/// Connected set of same-class pixels.
struct Cluster {
  TissueClass cls = TissueClass::Background;
  std::int64_t pixel_count = 0;
  double area = 0.0;  // pixel_count * pixel_area, um^2
  int min_row = 0, min_col = 0, max_row = 0, max_col = 0;
  std::vector<std::int64_t> pixels;  // linear indices into the map
};

/// Maximal connected sets of pixels equal to target, under 4- or
/// 8-adjacency. Clusters are ordered by (min_row, min_col), ties by first
/// pixel in scan order.
std::vector<Cluster> connected_components(const LabelMap& map,
                                          TissueClass target, int connectivity,
                                          double pixel_area = 1.0);

/// Keeps clusters with area >= min_area. Removed tumor clusters are relabeled
/// in the working map to the majority class among the 8-neighbors surrounding
/// the cluster (ties and empty neighborhoods fall back to stroma lamina
/// propria); votes are taken on the map as it was before any relabeling.
std::vector<Cluster> filter_small_clusters(std::vector<Cluster> clusters,
                                           LabelMap& map,
                                           double min_area = 30.0,
                                           double pixel_area = 1.0);

/// Normalized class histogram over non-ignore pixels; sums to 1.
std::array<double, kTissueClassCount> slide_histogram(const LabelMap& map);

/// 18-dim slide descriptor: 14 histogram bins plus tumor-cluster statistics.
struct SlideFeatureVector {
  std::array<double, kTissueClassCount> histogram{};
  std::int64_t tumor_cluster_count = 0;
  double tumor_cluster_mean_area = 0.0;
  double tumor_cluster_min_area = 0.0;
  double tumor_cluster_max_area = 0.0;

  static constexpr int kDim = kTissueClassCount + 4;
  std::array<double, kDim> as_row() const;
};

/// Histogram after small-cluster removal, plus statistics over the surviving
/// tumor clusters (count and mean/min/max area in um^2; all zero when no
/// cluster survives the 30 um^2 filter).
SlideFeatureVector extract_feature_vector(const LabelMap& map,
                                          double pixel_area = 1.0,
                                          int connectivity = 4,
                                          double min_cluster_area = 30.0);

/// 8-connected components of non-background, non-ignore pixels. Components
/// below min_pixels are discarded as debris. Each returned map keeps the full
/// canvas with everything outside the fragment set to the ignore label.
std::vector<LabelMap> split_fragments(const LabelMap& map,
                                      std::int64_t min_pixels = 1000);

/// Relabels pixels whose 8-bit channel mean is strictly above the threshold
/// (0..255 scale) as background; used to harmonize reference masks whose
/// glands include the lumen.
LabelMap relabel_lumen(const ImageRGB& rgb, const LabelMap& ref,
                       double threshold = 240.0);

/// Slide-level risk, ordered by increasing clinical relevance.
enum class RiskCategory : int {
  Other = 0,
  Hyperplastic = 1,
  LowGradeDysplasia = 2,
  HighGradeTumor = 3,
};

inline constexpr int kRiskCategoryCount = 4;

const char* risk_category_name(RiskCategory grade);     // csv token
const char* risk_category_display(RiskCategory grade);  // report phrasing
RiskCategory parse_risk_category(std::string_view token);

/// Maximum under the ordinal order; a slide is graded by its worst fragment.
RiskCategory worst_grade(std::span<const RiskCategory> grades);

} // namespace histoseg
