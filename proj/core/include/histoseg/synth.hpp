#pragma once

#include <array>
#include <cstdint>

#include "histoseg/features.hpp"
#include "histoseg/tensor.hpp"

namespace histoseg {

/// Deterministic multi-class tile with gland-like blob structure. Blobs come
/// from a jittered-grid Voronoi partition whose cells are assigned classes by
/// quota, so realized class frequencies track class_mix closely. Every class
/// renders with a distinct mean color; epithelium classes additionally carry
/// a radial ring texture, which makes the task learnable from local window
/// features.
struct TileSpec {
  int size = 128;
  std::array<double, kTissueClassCount> class_mix{};
  double blob_scale = 8.0;  // Voronoi cell pitch in pixels
  double noise = 0.05;      // appearance noise std, per channel
  std::uint64_t seed = 0;
};

/// All 14 classes with non-trivial shares.
std::array<double, kTissueClassCount> default_class_mix();

/// Compact 6-class task (normal glands, LGD, HGD/tumor, stroma lamina
/// propria, lymphocytes, background).
std::array<double, kTissueClassCount> six_class_mix();

struct SynthTile {
  ImageRGB image;
  LabelMap labels;
};

SynthTile gen_tile(const TileSpec& spec);

/// Reassigns exactly round(rate * non-ignore pixels) pixels, chosen without
/// replacement, to a uniformly random different class in [0, classes).
LabelMap inject_label_noise(const LabelMap& map, double rate, int classes,
                            std::uint64_t seed);

/// Synthetic biopsy slide: disjoint elliptical tissue fragments on a
/// background canvas, with a composition planted per grade:
///   HGD/tumor    -- at least one tumor cluster >= 500 um^2
///   LGD          -- LGD pixels >= 10% of tissue, no surviving tumor cluster
///                   (only sub-30 um^2 specks that the cluster filter removes)
///   hyperplastic -- elevated normal-gland + mucus mix, no dysplasia
///   other        -- stroma-dominated mix, no dysplasia
struct SlideSpec {
  RiskCategory grade = RiskCategory::Other;
  int fragments = 2;
  int canvas = 288;
  std::uint64_t seed = 0;
};

struct SynthSlide {
  LabelMap map;
  RiskCategory grade = RiskCategory::Other;
};

SynthSlide gen_slide(const SlideSpec& spec);

} // namespace histoseg
