#include "dvta/dataio/feature_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "dvta/dataio/crc32.hpp"
#include "dvta/errors.hpp"

namespace dvta {

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::span<const std::byte> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(std::to_integer<unsigned>(bytes[at + i])) << (8 * i);
  }
  return v;
}

std::vector<std::byte> encode_feature_matrix(const Matrix& m) {
  constexpr double kMax = std::numeric_limits<float>::max();
  if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
      m.cols() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("feature matrix too large for the file format");
  }
  std::vector<std::byte> out;
  out.reserve(kFeatureHeaderBytes + 4 * m.size() + 4);
  for (char c : kFeatureMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double x : m.data()) {
    if (!std::isfinite(x) || std::abs(x) > kMax) {
      throw NumericError("feature value " + std::to_string(x) + " is not representable as binary32");
    }
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  const std::span<const std::byte> payload(out.data() + kFeatureHeaderBytes, 4 * m.size());
  put_u32(out, crc32(payload));
  return out;
}

Matrix decode_feature_matrix(std::span<const std::byte> bytes, std::size_t* consumed,
                             std::uint64_t base_offset) {
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FormatError("feature header needs " + std::to_string(kFeatureHeaderBytes) +
                          " bytes, found " + std::to_string(bytes.size()),
                      base_offset + bytes.size());
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (static_cast<char>(bytes[i]) != kFeatureMagic[i]) {
      throw FormatError("bad magic, expected 'DVTA'", base_offset + i);
    }
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFeatureVersion) {
    throw FormatError("unsupported feature file version " + std::to_string(version),
                      base_offset + 4);
  }
  const std::uint64_t rows = get_u32(bytes, 8);
  const std::uint64_t cols = get_u32(bytes, 12);
  const std::uint64_t payload_bytes = 4 * rows * cols;
  const std::uint64_t expected = kFeatureHeaderBytes + payload_bytes + 4;
  if (bytes.size() < expected) {
    throw FormatError("truncated feature block: expected " + std::to_string(expected) +
                          " bytes for " + std::to_string(rows) + "x" + std::to_string(cols) +
                          ", found " + std::to_string(bytes.size()),
                      base_offset + bytes.size());
  }
  const auto payload = bytes.subspan(kFeatureHeaderBytes, payload_bytes);
  const std::uint32_t stored = get_u32(bytes, kFeatureHeaderBytes + payload_bytes);
  const std::uint32_t actual = crc32(payload);
  if (stored != actual) {
    throw FormatError("payload checksum mismatch", base_offset + kFeatureHeaderBytes + payload_bytes);
  }
  std::vector<double> data(rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const float f = std::bit_cast<float>(get_u32(bytes, kFeatureHeaderBytes + 4 * i));
    if (!std::isfinite(f)) {
      throw FormatError("non-finite feature value", base_offset + kFeatureHeaderBytes + 4 * i);
    }
    data[i] = f;
  }
  if (consumed != nullptr) *consumed = expected;
  return Matrix(rows, cols, std::move(data));
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("failed reading " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

Matrix load_feature_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t used = 0;
  Matrix m = decode_feature_matrix(bytes, &used);
  if (used != bytes.size()) {
    throw FormatError(path.string() + ": " + std::to_string(bytes.size() - used) +
                          " trailing bytes after feature block",
                      used);
  }
  return m;
}

void save_feature_file(const std::filesystem::path& path, const Matrix& m) {
  write_file_atomic(path, encode_feature_matrix(m));
}

}  // namespace dvta
