#include "histoseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "histoseg/error.hpp"
#include "histoseg/rng.hpp"

namespace histoseg {

namespace {

constexpr double kTwoPi = 6.28318530717958647692528676655900577;

struct Color {
  float r, g, b;
};

const Color kClassColor[kTissueClassCount] = {
    {0.58f, 0.36f, 0.55f},  // normal glands
    {0.46f, 0.24f, 0.42f},  // low-grade dysplasia
    {0.34f, 0.14f, 0.30f},  // high-grade dysplasia / tumor
    {0.86f, 0.66f, 0.70f},  // submucosal stroma
    {0.74f, 0.54f, 0.58f},  // desmoplastic stroma
    {0.80f, 0.58f, 0.74f},  // stroma lamina propria
    {0.68f, 0.80f, 0.86f},  // mucus
    {0.60f, 0.50f, 0.34f},  // necrosis and debris
    {0.26f, 0.20f, 0.52f},  // lymphocytes
    {0.82f, 0.24f, 0.24f},  // erythrocytes
    {0.90f, 0.86f, 0.80f},  // adipose
    {0.70f, 0.42f, 0.46f},  // muscle
    {0.76f, 0.66f, 0.54f},  // nerve
    {0.97f, 0.97f, 0.97f},  // background
};

// ring texture on the epithelium classes only
const double kRingPeriod[3] = {7.0, 9.0, 5.0};
const double kRingAmp[3] = {0.10, 0.14, 0.18};

struct VoronoiPartition {
  std::vector<int> cell_of_pixel;  // parallel to the pixel list
  std::vector<double> seed_y, seed_x;
};

// Jittered-grid Voronoi over an arbitrary pixel set. Jitter stays below
// 0.45 * pitch, so the nearest seed of any pixel lies within two grid cells.
VoronoiPartition voronoi_partition(const std::vector<std::int64_t>& pixels,
                                   int map_width, int min_row, int min_col,
                                   int box_h, int box_w, double pitch,
                                   Rng& rng) {
  const int gy = std::max(2, static_cast<int>(std::llround(box_h / pitch)));
  const int gx = std::max(2, static_cast<int>(std::llround(box_w / pitch)));
  const double step_y = static_cast<double>(box_h) / gy;
  const double step_x = static_cast<double>(box_w) / gx;

  VoronoiPartition part;
  part.seed_y.resize(static_cast<std::size_t>(gy) * gx);
  part.seed_x.resize(static_cast<std::size_t>(gy) * gx);
  for (int r = 0; r < gy; ++r) {
    for (int c = 0; c < gx; ++c) {
      const std::size_t s = static_cast<std::size_t>(r) * gx + c;
      part.seed_y[s] = min_row + (r + 0.5 + rng.uniform(-0.45, 0.45)) * step_y;
      part.seed_x[s] = min_col + (c + 0.5 + rng.uniform(-0.45, 0.45)) * step_x;
    }
  }

  part.cell_of_pixel.resize(pixels.size());
  for (std::size_t t = 0; t < pixels.size(); ++t) {
    const int y = static_cast<int>(pixels[t] / map_width);
    const int x = static_cast<int>(pixels[t] % map_width);
    const int ry = std::clamp(static_cast<int>((y - min_row) / step_y), 0, gy - 1);
    const int rx = std::clamp(static_cast<int>((x - min_col) / step_x), 0, gx - 1);
    int best = -1;
    double best_d = 0.0;
    for (int r = std::max(0, ry - 2); r <= std::min(gy - 1, ry + 2); ++r) {
      for (int c = std::max(0, rx - 2); c <= std::min(gx - 1, rx + 2); ++c) {
        const int s = r * gx + c;
        const double dy = y - part.seed_y[s];
        const double dx = x - part.seed_x[s];
        const double d = dy * dy + dx * dx;
        if (best < 0 || d < best_d) {
          best = s;
          best_d = d;
        }
      }
    }
    part.cell_of_pixel[t] = best;
  }
  return part;
}

// Assigns classes to Voronoi cells so realized pixel counts track the target
// mix: cells in descending area order, each going to the class with the
// largest remaining quota.
std::vector<std::uint8_t> quota_assign(
    const VoronoiPartition& part,
    const std::array<double, kTissueClassCount>& mix) {
  const std::size_t n_cells = part.seed_y.size();
  std::vector<std::int64_t> cell_area(n_cells, 0);
  for (int cell : part.cell_of_pixel) ++cell_area[cell];

  std::vector<int> order(n_cells);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return cell_area[a] > cell_area[b];
  });

  const double total = static_cast<double>(part.cell_of_pixel.size());
  double remaining[kTissueClassCount];
  for (int c = 0; c < kTissueClassCount; ++c) remaining[c] = mix[c] * total;

  std::vector<std::uint8_t> cell_class(n_cells, 0);
  for (int cell : order) {
    int best = 0;
    for (int c = 1; c < kTissueClassCount; ++c) {
      if (remaining[c] > remaining[best]) best = c;
    }
    cell_class[cell] = static_cast<std::uint8_t>(best);
    remaining[best] -= static_cast<double>(cell_area[cell]);
  }
  return cell_class;
}

void check_mix(const std::array<double, kTissueClassCount>& mix) {
  double sum = 0.0;
  for (double v : mix) {
    if (!(v >= 0.0)) raise(ErrorKind::InvalidInput, "negative class_mix entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    raise(ErrorKind::InvalidInput,
          "class_mix must sum to 1, got " + std::to_string(sum));
  }
}

} // namespace

std::array<double, kTissueClassCount> default_class_mix() {
  return {0.12, 0.10, 0.08, 0.07, 0.05, 0.15, 0.045,
          0.04, 0.04, 0.035, 0.04, 0.03, 0.02, 0.18};
}

std::array<double, kTissueClassCount> six_class_mix() {
  std::array<double, kTissueClassCount> mix{};
  mix[static_cast<int>(TissueClass::NormalGlands)] = 0.20;
  mix[static_cast<int>(TissueClass::LowGradeDysplasia)] = 0.16;
  mix[static_cast<int>(TissueClass::HighGradeTumor)] = 0.14;
  mix[static_cast<int>(TissueClass::StromaLaminaPropria)] = 0.22;
  mix[static_cast<int>(TissueClass::Lymphocytes)] = 0.12;
  mix[static_cast<int>(TissueClass::Background)] = 0.16;
  return mix;
}

SynthTile gen_tile(const TileSpec& spec) {
  if (spec.size < 32) {
    raise(ErrorKind::InvalidInput, "tile size must be at least 32");
  }
  if (!(spec.blob_scale >= 2.0)) {
    raise(ErrorKind::InvalidInput, "blob_scale must be at least 2");
  }
  check_mix(spec.class_mix);

  const int size = spec.size;
  Rng rng_geom(mix_seed(spec.seed, 11));
  Rng rng_noise(mix_seed(spec.seed, 12));

  std::vector<std::int64_t> pixels(static_cast<std::size_t>(size) * size);
  std::iota(pixels.begin(), pixels.end(), std::int64_t{0});
  const VoronoiPartition part = voronoi_partition(
      pixels, size, 0, 0, size, size, spec.blob_scale, rng_geom);
  const std::vector<std::uint8_t> cell_class =
      quota_assign(part, spec.class_mix);

  SynthTile tile;
  tile.labels = LabelMap(size, size);
  tile.image = ImageRGB(size, size);
  for (std::int64_t px = 0; px < static_cast<std::int64_t>(pixels.size()); ++px) {
    const int cell = part.cell_of_pixel[px];
    const int cls = cell_class[cell];
    tile.labels.values[px] = static_cast<std::uint8_t>(cls);

    const Color base = kClassColor[cls];
    double factor = 1.0;
    if (cls <= 2) {
      const double dy = static_cast<double>(px / size) - part.seed_y[cell];
      const double dx = static_cast<double>(px % size) - part.seed_x[cell];
      const double dist = std::sqrt(dy * dy + dx * dx);
      factor = 1.0 + kRingAmp[cls] * std::sin(kTwoPi * dist / kRingPeriod[cls]);
    }
    const double rgb[3] = {base.r * factor, base.g * factor, base.b * factor};
    for (int ch = 0; ch < 3; ++ch) {
      const double v = rgb[ch] + spec.noise * rng_noise.normal();
      tile.image.values[px * 3 + ch] =
          static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return tile;
}

LabelMap inject_label_noise(const LabelMap& map, double rate, int classes,
                            std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 0.5)) {
    raise(ErrorKind::InvalidParameter, "noise rate must lie in [0, 0.5]");
  }
  validate_labels(map, classes);

  std::vector<std::int64_t> scored;
  for (std::int64_t i = 0; i < map.pixel_count(); ++i) {
    if (map.values[i] != kIgnoreLabel) scored.push_back(i);
  }
  const std::int64_t flips =
      std::llround(rate * static_cast<double>(scored.size()));

  LabelMap out = map;
  Rng rng(mix_seed(seed, 31));
  for (std::int64_t k = 0; k < flips; ++k) {
    // partial Fisher-Yates: draw without replacement
    const std::size_t j =
        static_cast<std::size_t>(k) +
        static_cast<std::size_t>(rng.below(scored.size() - k));
    std::swap(scored[k], scored[j]);
    const std::int64_t px = scored[k];
    std::uint8_t fresh =
        static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(classes - 1)));
    if (fresh >= out.values[px]) ++fresh;  // uniform over the other classes
    out.values[px] = fresh;
  }
  return out;
}

namespace {

struct FragmentGeometry {
  double cy, cx;      // center
  double a, b;        // semi-axes
  double cos_t, sin_t;
  std::vector<std::int64_t> pixels;
};

void fill_fragment(LabelMap& map, FragmentGeometry& frag,
                   const std::array<double, kTissueClassCount>& mix,
                   Rng& rng) {
  int min_row = map.height, min_col = map.width, max_row = 0, max_col = 0;
  for (std::int64_t px : frag.pixels) {
    const int y = static_cast<int>(px / map.width);
    const int x = static_cast<int>(px % map.width);
    min_row = std::min(min_row, y);
    max_row = std::max(max_row, y);
    min_col = std::min(min_col, x);
    max_col = std::max(max_col, x);
  }
  const VoronoiPartition part = voronoi_partition(
      frag.pixels, map.width, min_row, min_col, max_row - min_row + 1,
      max_col - min_col + 1, 8.0, rng);
  const std::vector<std::uint8_t> cell_class = quota_assign(part, mix);
  for (std::size_t t = 0; t < frag.pixels.size(); ++t) {
    map.values[frag.pixels[t]] = cell_class[part.cell_of_pixel[t]];
  }
}

void paint_disk(LabelMap& map, const FragmentGeometry& frag, double cy,
                double cx, double radius, TissueClass cls) {
  const int lo_y = std::max(0, static_cast<int>(cy - radius) - 1);
  const int hi_y = std::min(map.height - 1, static_cast<int>(cy + radius) + 1);
  const int lo_x = std::max(0, static_cast<int>(cx - radius) - 1);
  const int hi_x = std::min(map.width - 1, static_cast<int>(cx + radius) + 1);
  const double r2 = radius * radius;
  for (int y = lo_y; y <= hi_y; ++y) {
    for (int x = lo_x; x <= hi_x; ++x) {
      const double dy = y - cy, dx = x - cx;
      if (dy * dy + dx * dx > r2) continue;
      // stay inside the fragment so the canvas stays background
      const double ry = (y - frag.cy) * frag.cos_t + (x - frag.cx) * frag.sin_t;
      const double rx = -(y - frag.cy) * frag.sin_t + (x - frag.cx) * frag.cos_t;
      if ((ry * ry) / (frag.a * frag.a) + (rx * rx) / (frag.b * frag.b) > 1.0) {
        continue;
      }
      map.at(y, x) = static_cast<std::uint8_t>(cls);
    }
  }
}

std::array<double, kTissueClassCount> grade_mix(RiskCategory grade, Rng& rng) {
  std::array<double, kTissueClassCount> mix{};
  switch (grade) {
    case RiskCategory::Other:
      mix[0] = 0.20; mix[3] = 0.16; mix[5] = 0.44; mix[6] = 0.02;
      mix[8] = 0.07; mix[9] = 0.04; mix[11] = 0.05; mix[12] = 0.02;
      break;
    case RiskCategory::Hyperplastic:
      mix[0] = 0.42; mix[3] = 0.08; mix[5] = 0.28; mix[6] = 0.15;
      mix[8] = 0.05; mix[9] = 0.02;
      break;
    case RiskCategory::LowGradeDysplasia:
      mix[0] = 0.14; mix[1] = 0.24; mix[3] = 0.10; mix[5] = 0.36;
      mix[6] = 0.04; mix[8] = 0.06; mix[9] = 0.03; mix[11] = 0.03;
      break;
    case RiskCategory::HighGradeTumor:
      mix[0] = 0.08; mix[1] = 0.10; mix[2] = 0.12; mix[4] = 0.16;
      mix[5] = 0.30; mix[6] = 0.03; mix[7] = 0.06; mix[8] = 0.08;
      mix[9] = 0.04; mix[11] = 0.03;
      break;
  }
  // per-slide composition jitter keeps the cohort from being a lookup table
  double sum = 0.0;
  for (double& v : mix) {
    if (v > 0.0) v *= 1.0 + 0.15 * rng.uniform(-1.0, 1.0);
    sum += v;
  }
  for (double& v : mix) v /= sum;
  return mix;
}

} // namespace

SynthSlide gen_slide(const SlideSpec& spec) {
  if (spec.fragments < 1) {
    raise(ErrorKind::InvalidInput, "slide needs at least one fragment");
  }
  if (spec.fragments > 4) {
    raise(ErrorKind::InvalidInput, "at most 4 fragments fit on the canvas");
  }
  if (spec.canvas < 200) {
    raise(ErrorKind::InvalidInput, "canvas must be at least 200 pixels");
  }

  Rng rng(mix_seed(spec.seed, 21));
  SynthSlide slide;
  slide.grade = spec.grade;
  slide.map = LabelMap(spec.canvas, spec.canvas,
                       static_cast<std::uint8_t>(TissueClass::Background));

  // one fragment per quadrant slot keeps them disjoint
  std::vector<int> slots = {0, 1, 2, 3};
  rng.shuffle(slots);
  const double half = spec.canvas / 2.0;

  std::vector<FragmentGeometry> fragments;
  for (int f = 0; f < spec.fragments; ++f) {
    FragmentGeometry frag;
    const int slot = slots[f];
    frag.cy = (slot / 2) * half + half / 2.0 + rng.uniform(-12.0, 12.0);
    frag.cx = (slot % 2) * half + half / 2.0 + rng.uniform(-12.0, 12.0);
    frag.a = rng.uniform(34.0, 52.0);
    frag.b = frag.a * rng.uniform(0.75, 1.0);
    const double theta = rng.uniform(0.0, kTwoPi / 2.0);
    frag.cos_t = std::cos(theta);
    frag.sin_t = std::sin(theta);

    const int reach = static_cast<int>(frag.a) + 2;
    const int lo_y = std::max(0, static_cast<int>(frag.cy) - reach);
    const int hi_y = std::min(spec.canvas - 1, static_cast<int>(frag.cy) + reach);
    const int lo_x = std::max(0, static_cast<int>(frag.cx) - reach);
    const int hi_x = std::min(spec.canvas - 1, static_cast<int>(frag.cx) + reach);
    for (int y = lo_y; y <= hi_y; ++y) {
      for (int x = lo_x; x <= hi_x; ++x) {
        const double ry = (y - frag.cy) * frag.cos_t + (x - frag.cx) * frag.sin_t;
        const double rx = -(y - frag.cy) * frag.sin_t + (x - frag.cx) * frag.cos_t;
        if ((ry * ry) / (frag.a * frag.a) + (rx * rx) / (frag.b * frag.b) <= 1.0) {
          frag.pixels.push_back(static_cast<std::int64_t>(y) * spec.canvas + x);
        }
      }
    }
    fragments.push_back(std::move(frag));
  }

  for (auto& frag : fragments) {
    fill_fragment(slide.map, frag, grade_mix(spec.grade, rng), rng);
  }

  if (spec.grade == RiskCategory::HighGradeTumor) {
    // guaranteed tumor cluster of at least 500 um^2 in the first fragment
    FragmentGeometry& frag = fragments.front();
    const double radius = 14.0 + static_cast<double>(rng.below(6));
    paint_disk(slide.map, frag, frag.cy, frag.cx, radius,
               TissueClass::HighGradeTumor);
    const std::uint64_t extra = rng.below(3);
    for (std::uint64_t e = 0; e < extra; ++e) {
      const double angle = rng.uniform(0.0, kTwoPi);
      const double dist = 0.55 * frag.a;
      paint_disk(slide.map, frag, frag.cy + dist * std::cos(angle),
                 frag.cx + dist * std::sin(angle),
                 10.0 + static_cast<double>(rng.below(4)),
                 TissueClass::HighGradeTumor);
    }
  } else if (spec.grade == RiskCategory::LowGradeDysplasia) {
    // sub-30-pixel tumor specks exercise the cluster filter; they are the
    // only tumor pixels on an LGD slide, so none survive
    FragmentGeometry& frag = fragments.front();
    const std::uint64_t specks = rng.below(3);
    const double offsets[2][2] = {{10.0, -10.0}, {-12.0, 6.0}};
    for (std::uint64_t s = 0; s < specks; ++s) {
      paint_disk(slide.map, frag, frag.cy + offsets[s][0],
                 frag.cx + offsets[s][1], 1.6, TissueClass::HighGradeTumor);
    }
  }
  return slide;
}

} // namespace histoseg
