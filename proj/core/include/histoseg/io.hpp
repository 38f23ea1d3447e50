#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "histoseg/tensor.hpp"

namespace histoseg {

enum class TensorDType : std::uint8_t { F32 = 1, U8 = 2 };

/// Payload of a .tns container file.
///
/// Layout: magic "TNSR", u16 LE version (= 1), u8 dtype (1 = f32, 2 = u8),
/// u8 ndim (1..4), ndim x u32 LE dims, then the row-major payload
/// (f32 little-endian or raw bytes). Round trips are bit-exact.
struct TensorData {
  TensorDType dtype = TensorDType::F32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;        // used when dtype == F32
  std::vector<std::uint8_t> u8;  // used when dtype == U8

  std::int64_t element_count() const;
};

TensorData read_tensor(const std::filesystem::path& path);
void write_tensor(const TensorData& tensor, const std::filesystem::path& path);

/// f32 [H, W, 3] convenience wrappers.
ImageRGB read_rgb_tensor(const std::filesystem::path& path);
void write_rgb_tensor(const ImageRGB& image, const std::filesystem::path& path);

/// Label maps travel as binary 8-bit PGM ("P5", maxval 255); values are class
/// indices plus kIgnoreLabel.
LabelMap read_label_pgm(const std::filesystem::path& path,
                        int classes = kTissueClassCount);
void write_label_pgm(const LabelMap& labels, const std::filesystem::path& path);

} // namespace histoseg
