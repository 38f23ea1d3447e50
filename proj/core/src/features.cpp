#include "histoseg/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "histoseg/error.hpp"

namespace histoseg {

namespace {

struct Neighborhood {
  int count;
  int dy[8];
  int dx[8];
};

Neighborhood make_neighborhood(int connectivity) {
  if (connectivity == 4) {
    return {4, {-1, 0, 0, 1}, {0, -1, 1, 0}};
  }
  if (connectivity == 8) {
    return {8, {-1, -1, -1, 0, 0, 1, 1, 1}, {-1, 0, 1, -1, 1, -1, 0, 1}};
  }
  raise(ErrorKind::InvalidParameter,
        "connectivity must be 4 or 8, got " + std::to_string(connectivity));
}

void order_clusters(std::vector<Cluster>& clusters) {
  std::stable_sort(clusters.begin(), clusters.end(),
                   [](const Cluster& a, const Cluster& b) {
                     if (a.min_row != b.min_row) return a.min_row < b.min_row;
                     if (a.min_col != b.min_col) return a.min_col < b.min_col;
                     return a.pixels.front() < b.pixels.front();
                   });
}

// Flood fill from every unvisited pixel accepted by `member`, in scan order.
template <class Member>
std::vector<Cluster> collect_components(const LabelMap& map, Member member,
                                        int connectivity, double pixel_area) {
  const Neighborhood nb = make_neighborhood(connectivity);
  const int h = map.height, w = map.width;
  std::vector<std::uint8_t> visited(map.values.size(), 0);
  std::vector<Cluster> clusters;
  std::vector<std::int64_t> queue;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int64_t start = static_cast<std::int64_t>(y) * w + x;
      if (visited[start] || !member(map.values[start])) continue;

      Cluster cluster;
      cluster.cls = static_cast<TissueClass>(map.values[start]);
      cluster.min_row = cluster.max_row = y;
      cluster.min_col = cluster.max_col = x;
      queue.clear();
      queue.push_back(start);
      visited[start] = 1;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::int64_t px = queue[head];
        const int py = static_cast<int>(px / w);
        const int pxx = static_cast<int>(px % w);
        cluster.pixels.push_back(px);
        cluster.min_row = std::min(cluster.min_row, py);
        cluster.max_row = std::max(cluster.max_row, py);
        cluster.min_col = std::min(cluster.min_col, pxx);
        cluster.max_col = std::max(cluster.max_col, pxx);
        for (int k = 0; k < nb.count; ++k) {
          const int ny = py + nb.dy[k];
          const int nx = pxx + nb.dx[k];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const std::int64_t npx = static_cast<std::int64_t>(ny) * w + nx;
          if (visited[npx] || map.values[npx] != map.values[start]) continue;
          if (!member(map.values[npx])) continue;
          visited[npx] = 1;
          queue.push_back(npx);
        }
      }
      cluster.pixel_count = static_cast<std::int64_t>(cluster.pixels.size());
      cluster.area = static_cast<double>(cluster.pixel_count) * pixel_area;
      clusters.push_back(std::move(cluster));
    }
  }
  order_clusters(clusters);
  return clusters;
}

} // namespace

std::vector<Cluster> connected_components(const LabelMap& map,
                                          TissueClass target, int connectivity,
                                          double pixel_area) {
  validate_labels(map, kTissueClassCount);
  if (!(pixel_area > 0.0)) {
    raise(ErrorKind::InvalidParameter, "pixel_area must be positive");
  }
  const std::uint8_t wanted = static_cast<std::uint8_t>(target);
  return collect_components(
      map, [wanted](std::uint8_t v) { return v == wanted; }, connectivity,
      pixel_area);
}

std::vector<Cluster> filter_small_clusters(std::vector<Cluster> clusters,
                                           LabelMap& map, double min_area,
                                           double pixel_area) {
  if (!(pixel_area > 0.0)) {
    raise(ErrorKind::InvalidParameter, "pixel_area must be positive");
  }
  std::vector<Cluster> kept;
  std::vector<const Cluster*> removed_tumor;
  for (auto& cluster : clusters) {
    if (cluster.area >= min_area) {
      kept.push_back(std::move(cluster));
    } else if (cluster.cls == TissueClass::HighGradeTumor) {
      removed_tumor.push_back(&cluster);
    }
  }
  if (removed_tumor.empty()) return kept;

  // Vote on the original map; apply all relabels afterwards so adjacent
  // removed clusters do not see each other's replacement labels.
  const int h = map.height, w = map.width;
  std::vector<std::uint8_t> replacement(removed_tumor.size());
  std::vector<std::uint8_t> seen(map.values.size(), 0);
  std::uint8_t stamp_round = 0;
  for (std::size_t r = 0; r < removed_tumor.size(); ++r) {
    const Cluster& cluster = *removed_tumor[r];
    ++stamp_round;
    if (stamp_round == 0) {
      std::fill(seen.begin(), seen.end(), 0);
      stamp_round = 1;
    }
    for (std::int64_t px : cluster.pixels) seen[px] = stamp_round;

    std::int64_t votes[kTissueClassCount] = {0};
    for (std::int64_t px : cluster.pixels) {
      const int py = static_cast<int>(px / w);
      const int pxx = static_cast<int>(px % w);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int ny = py + dy, nx = pxx + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const std::int64_t npx = static_cast<std::int64_t>(ny) * w + nx;
          if (seen[npx] == stamp_round) continue;  // each neighbor votes once
          seen[npx] = stamp_round;
          const std::uint8_t v = map.values[npx];
          if (v == kIgnoreLabel ||
              v == static_cast<std::uint8_t>(TissueClass::HighGradeTumor)) {
            continue;
          }
          ++votes[v];
        }
      }
    }
    int best = -1;
    bool tied = false;
    for (int c = 0; c < kTissueClassCount; ++c) {
      if (votes[c] == 0) continue;
      if (best < 0 || votes[c] > votes[best]) {
        best = c;
        tied = false;
      } else if (votes[c] == votes[best]) {
        tied = true;
      }
    }
    replacement[r] =
        (best < 0 || tied)
            ? static_cast<std::uint8_t>(TissueClass::StromaLaminaPropria)
            : static_cast<std::uint8_t>(best);
  }
  for (std::size_t r = 0; r < removed_tumor.size(); ++r) {
    for (std::int64_t px : removed_tumor[r]->pixels) {
      map.values[px] = replacement[r];
    }
  }
  return kept;
}

std::array<double, kTissueClassCount> slide_histogram(const LabelMap& map) {
  validate_labels(map, kTissueClassCount);
  std::int64_t counts[kTissueClassCount] = {0};
  std::int64_t total = 0;
  for (std::uint8_t v : map.values) {
    if (v == kIgnoreLabel) continue;
    ++counts[v];
    ++total;
  }
  if (total == 0) {
    raise(ErrorKind::EmptyInput, "all pixels are ignore; histogram undefined");
  }
  std::array<double, kTissueClassCount> bins{};
  for (int c = 0; c < kTissueClassCount; ++c) {
    bins[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
  }
  return bins;
}

std::array<double, SlideFeatureVector::kDim> SlideFeatureVector::as_row() const {
  std::array<double, kDim> row{};
  for (int c = 0; c < kTissueClassCount; ++c) row[c] = histogram[c];
  row[kTissueClassCount + 0] = static_cast<double>(tumor_cluster_count);
  row[kTissueClassCount + 1] = tumor_cluster_mean_area;
  row[kTissueClassCount + 2] = tumor_cluster_min_area;
  row[kTissueClassCount + 3] = tumor_cluster_max_area;
  return row;
}

SlideFeatureVector extract_feature_vector(const LabelMap& map,
                                          double pixel_area, int connectivity,
                                          double min_cluster_area) {
  LabelMap working = map;
  std::vector<Cluster> clusters = connected_components(
      working, TissueClass::HighGradeTumor, connectivity, pixel_area);
  std::vector<Cluster> kept =
      filter_small_clusters(std::move(clusters), working, min_cluster_area,
                            pixel_area);

  SlideFeatureVector features;
  features.histogram = slide_histogram(working);
  features.tumor_cluster_count = static_cast<std::int64_t>(kept.size());
  if (!kept.empty()) {
    std::int64_t total_pixels = 0;
    double min_area = kept.front().area, max_area = kept.front().area;
    for (const Cluster& cluster : kept) {
      total_pixels += cluster.pixel_count;
      min_area = std::min(min_area, cluster.area);
      max_area = std::max(max_area, cluster.area);
    }
    features.tumor_cluster_mean_area =
        static_cast<double>(total_pixels) * pixel_area /
        static_cast<double>(kept.size());
    features.tumor_cluster_min_area = min_area;
    features.tumor_cluster_max_area = max_area;
  }
  return features;
}

std::vector<LabelMap> split_fragments(const LabelMap& map,
                                      std::int64_t min_pixels) {
  validate_labels(map, kTissueClassCount);
  const std::uint8_t background =
      static_cast<std::uint8_t>(TissueClass::Background);
  // fragments are connected pieces of tissue; class identity does not matter,
  // so compare against a constant "is tissue" predicate instead of the label
  const int h = map.height, w = map.width;
  const Neighborhood nb = make_neighborhood(8);
  std::vector<std::uint8_t> visited(map.values.size(), 0);
  std::vector<std::vector<std::int64_t>> fragments;
  std::vector<std::int64_t> queue;

  auto is_tissue = [&](std::int64_t px) {
    const std::uint8_t v = map.values[px];
    return v != background && v != kIgnoreLabel;
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int64_t start = static_cast<std::int64_t>(y) * w + x;
      if (visited[start] || !is_tissue(start)) continue;
      queue.clear();
      queue.push_back(start);
      visited[start] = 1;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::int64_t px = queue[head];
        const int py = static_cast<int>(px / w);
        const int pxx = static_cast<int>(px % w);
        for (int k = 0; k < nb.count; ++k) {
          const int ny = py + nb.dy[k];
          const int nx = pxx + nb.dx[k];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const std::int64_t npx = static_cast<std::int64_t>(ny) * w + nx;
          if (visited[npx] || !is_tissue(npx)) continue;
          visited[npx] = 1;
          queue.push_back(npx);
        }
      }
      if (static_cast<std::int64_t>(queue.size()) < min_pixels) continue;
      fragments.push_back(queue);
    }
  }
  // scan order already yields (min_row, min_col)-ish ordering via the first
  // pixel; sort explicitly on the bounding box to pin the contract
  std::vector<std::pair<std::pair<int, int>, std::size_t>> keys;
  for (std::size_t f = 0; f < fragments.size(); ++f) {
    int min_row = h, min_col = w;
    for (std::int64_t px : fragments[f]) {
      min_row = std::min(min_row, static_cast<int>(px / w));
      min_col = std::min(min_col, static_cast<int>(px % w));
    }
    keys.push_back({{min_row, min_col}, f});
  }
  std::stable_sort(keys.begin(), keys.end());

  std::vector<LabelMap> masks;
  masks.reserve(fragments.size());
  for (const auto& [key, f] : keys) {
    LabelMap mask(h, w, kIgnoreLabel);
    for (std::int64_t px : fragments[f]) mask.values[px] = map.values[px];
    masks.push_back(std::move(mask));
  }
  return masks;
}

LabelMap relabel_lumen(const ImageRGB& rgb, const LabelMap& ref,
                       double threshold) {
  if (rgb.height != ref.height || rgb.width != ref.width) {
    raise(ErrorKind::InvalidInput, "image and reference shapes disagree");
  }
  LabelMap out = ref;
  for (std::int64_t i = 0; i < ref.pixel_count(); ++i) {
    // quantize each channel back to its 8-bit value so the strict ">"
    // boundary behaves exactly as on integer imagery
    long sum = 0;
    for (int ch = 0; ch < 3; ++ch) {
      const double v = static_cast<double>(rgb.values[i * 3 + ch]) * 255.0;
      sum += std::lround(std::clamp(v, 0.0, 255.0));
    }
    if (static_cast<double>(sum) / 3.0 > threshold) {
      out.values[i] = static_cast<std::uint8_t>(TissueClass::Background);
    }
  }
  return out;
}

const char* risk_category_name(RiskCategory grade) {
  switch (grade) {
    case RiskCategory::Other: return "other";
    case RiskCategory::Hyperplastic: return "hyperplastic";
    case RiskCategory::LowGradeDysplasia: return "lgd";
    case RiskCategory::HighGradeTumor: return "hgd_tumor";
  }
  return "unknown";
}

const char* risk_category_display(RiskCategory grade) {
  switch (grade) {
    case RiskCategory::Other: return "other";
    case RiskCategory::Hyperplastic: return "hyperplasia";
    case RiskCategory::LowGradeDysplasia: return "low-grade dysplasia";
    case RiskCategory::HighGradeTumor: return "HGD/tumor";
  }
  return "unknown";
}

RiskCategory parse_risk_category(std::string_view token) {
  if (token == "other" || token == "0") return RiskCategory::Other;
  if (token == "hyperplastic" || token == "1") return RiskCategory::Hyperplastic;
  if (token == "lgd" || token == "2") return RiskCategory::LowGradeDysplasia;
  if (token == "hgd_tumor" || token == "3") return RiskCategory::HighGradeTumor;
  raise(ErrorKind::InvalidInput,
        "unknown risk category: " + std::string(token));
}

RiskCategory worst_grade(std::span<const RiskCategory> grades) {
  if (grades.empty()) {
    raise(ErrorKind::EmptyInput, "worst_grade requires at least one grade");
  }
  RiskCategory worst = grades[0];
  for (RiskCategory g : grades) {
    if (static_cast<int>(g) > static_cast<int>(worst)) worst = g;
  }
  return worst;
}

} // namespace histoseg
