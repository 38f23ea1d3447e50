#include "histoseg/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "histoseg/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor container I/O assumes a little-endian host");

namespace histoseg {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
constexpr std::uint16_t kVersion = 1;
constexpr std::int64_t kMaxElements = std::int64_t(1) << 31;

[[noreturn]] void format_error(const std::filesystem::path& path,
                               const std::string& what, std::size_t offset) {
  raise(ErrorKind::Format, path.string() + ": " + what + " at byte offset " +
                               std::to_string(offset));
}

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::Io, "cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (in.bad()) raise(ErrorKind::Io, "read failed for " + path.string());
  return bytes;
}

void write_all(const std::filesystem::path& path, const char* data,
               std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot create " + path.string());
  out.write(data, static_cast<std::streamsize>(size));
  if (!out) raise(ErrorKind::Io, "write failed for " + path.string());
}

} // namespace

std::int64_t TensorData::element_count() const {
  std::int64_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

TensorData read_tensor(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_all(path);
  std::size_t off = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - off < n) format_error(path, std::string("truncated ") + what, off);
  };

  need(4, "header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    format_error(path, "bad magic", 0);
  }
  off = 4;

  need(2, "version field");
  std::uint16_t version;
  std::memcpy(&version, bytes.data() + off, 2);
  if (version != kVersion) {
    format_error(path, "unsupported version " + std::to_string(version), off);
  }
  off += 2;

  need(2, "dtype/ndim fields");
  const std::uint8_t dtype_raw = static_cast<std::uint8_t>(bytes[off]);
  const std::uint8_t ndim = static_cast<std::uint8_t>(bytes[off + 1]);
  if (dtype_raw != 1 && dtype_raw != 2) {
    format_error(path, "unknown dtype " + std::to_string(dtype_raw), off);
  }
  if (ndim < 1 || ndim > 4) {
    format_error(path, "ndim " + std::to_string(ndim) + " outside 1..4", off + 1);
  }
  off += 2;

  TensorData tensor;
  tensor.dtype = static_cast<TensorDType>(dtype_raw);
  std::int64_t count = 1;
  for (int i = 0; i < ndim; ++i) {
    need(4, "dimension field");
    std::uint32_t d;
    std::memcpy(&d, bytes.data() + off, 4);
    if (d == 0) format_error(path, "zero dimension", off);
    count *= d;
    if (count > kMaxElements) format_error(path, "dimension overflow", off);
    tensor.dims.push_back(d);
    off += 4;
  }

  const std::size_t elem_size = tensor.dtype == TensorDType::F32 ? 4 : 1;
  const std::size_t payload = static_cast<std::size_t>(count) * elem_size;
  if (bytes.size() - off < payload) {
    format_error(path,
                 "truncated payload (expected " + std::to_string(payload) +
                     " bytes, found " + std::to_string(bytes.size() - off) + ")",
                 off);
  }
  if (bytes.size() - off > payload) {
    format_error(path, "trailing bytes after payload", off + payload);
  }

  if (tensor.dtype == TensorDType::F32) {
    tensor.f32.resize(static_cast<std::size_t>(count));
    std::memcpy(tensor.f32.data(), bytes.data() + off, payload);
  } else {
    tensor.u8.resize(static_cast<std::size_t>(count));
    std::memcpy(tensor.u8.data(), bytes.data() + off, payload);
  }
  return tensor;
}

void write_tensor(const TensorData& tensor, const std::filesystem::path& path) {
  if (tensor.dims.empty() || tensor.dims.size() > 4) {
    raise(ErrorKind::InvalidInput, "tensor must have 1..4 dimensions");
  }
  std::int64_t count = 1;
  for (std::uint32_t d : tensor.dims) {
    if (d == 0) raise(ErrorKind::InvalidInput, "zero tensor dimension");
    count *= d;
    if (count > kMaxElements) raise(ErrorKind::InvalidInput, "tensor too large");
  }
  const std::size_t expected = static_cast<std::size_t>(count);
  if (tensor.dtype == TensorDType::F32 && tensor.f32.size() != expected) {
    raise(ErrorKind::InvalidInput, "f32 payload size does not match dims");
  }
  if (tensor.dtype == TensorDType::U8 && tensor.u8.size() != expected) {
    raise(ErrorKind::InvalidInput, "u8 payload size does not match dims");
  }

  std::vector<char> bytes;
  const std::size_t elem_size = tensor.dtype == TensorDType::F32 ? 4 : 1;
  bytes.reserve(8 + 4 * tensor.dims.size() + expected * elem_size);
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  const std::uint16_t version = kVersion;
  bytes.resize(bytes.size() + 2);
  std::memcpy(bytes.data() + bytes.size() - 2, &version, 2);
  bytes.push_back(static_cast<char>(tensor.dtype));
  bytes.push_back(static_cast<char>(tensor.dims.size()));
  for (std::uint32_t d : tensor.dims) {
    bytes.resize(bytes.size() + 4);
    std::memcpy(bytes.data() + bytes.size() - 4, &d, 4);
  }
  const std::size_t payload_off = bytes.size();
  bytes.resize(bytes.size() + expected * elem_size);
  if (tensor.dtype == TensorDType::F32) {
    std::memcpy(bytes.data() + payload_off, tensor.f32.data(), expected * 4);
  } else {
    std::memcpy(bytes.data() + payload_off, tensor.u8.data(), expected);
  }
  write_all(path, bytes.data(), bytes.size());
}

ImageRGB read_rgb_tensor(const std::filesystem::path& path) {
  TensorData tensor = read_tensor(path);
  if (tensor.dtype != TensorDType::F32 || tensor.dims.size() != 3 ||
      tensor.dims[2] != 3) {
    raise(ErrorKind::Format,
          path.string() + ": expected an f32 tensor shaped [H, W, 3]");
  }
  ImageRGB image(static_cast<int>(tensor.dims[0]),
                 static_cast<int>(tensor.dims[1]));
  image.values = std::move(tensor.f32);
  return image;
}

void write_rgb_tensor(const ImageRGB& image, const std::filesystem::path& path) {
  TensorData tensor;
  tensor.dtype = TensorDType::F32;
  tensor.dims = {static_cast<std::uint32_t>(image.height),
                 static_cast<std::uint32_t>(image.width), 3};
  tensor.f32 = image.values;
  write_tensor(tensor, path);
}

LabelMap read_label_pgm(const std::filesystem::path& path, int classes) {
  const std::vector<char> bytes = read_all(path);
  std::size_t off = 0;

  auto skip_space = [&] {
    while (off < bytes.size()) {
      const char c = bytes[off];
      if (c == '#') {  // comment runs to end of line
        while (off < bytes.size() && bytes[off] != '\n') ++off;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++off;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    const std::size_t start = off;
    long value = 0;
    while (off < bytes.size() && bytes[off] >= '0' && bytes[off] <= '9') {
      value = value * 10 + (bytes[off] - '0');
      if (value > 1 << 20) format_error(path, std::string(what) + " too large", start);
      ++off;
    }
    if (off == start) format_error(path, std::string("missing ") + what, start);
    return value;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    format_error(path, "bad magic (expected P5)", 0);
  }
  off = 2;
  const long width = read_int("width");
  const long height = read_int("height");
  const long maxval = read_int("maxval");
  if (maxval != 255) {
    format_error(path, "maxval must be 255, got " + std::to_string(maxval), off);
  }
  if (off >= bytes.size()) format_error(path, "truncated header", off);
  ++off;  // single whitespace byte separating header and payload

  const std::size_t payload = static_cast<std::size_t>(width) * height;
  if (bytes.size() - off < payload) {
    format_error(path, "truncated payload", off);
  }

  LabelMap labels(static_cast<int>(height), static_cast<int>(width));
  std::memcpy(labels.values.data(), bytes.data() + off, payload);
  validate_labels(labels, classes);
  return labels;
}

void write_label_pgm(const LabelMap& labels, const std::filesystem::path& path) {
  const std::string header = "P5\n" + std::to_string(labels.width) + " " +
                             std::to_string(labels.height) + "\n255\n";
  std::vector<char> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), labels.values.begin(), labels.values.end());
  write_all(path, bytes.data(), bytes.size());
}

} // namespace histoseg
