#include "cqcd/field_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "cqcd/error.hpp"

namespace cqcd {
namespace {

constexpr std::array<char, 8> kMagic = {'C', 'Q', 'C', 'D', 'F', 'L', 'D', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

void put_plane(std::vector<unsigned char>& out, const std::vector<double>& plane) {
  for (double d : plane) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(d)));
}

}  // namespace

DisplacementField quantize_to_float(const DisplacementField& field) {
  DisplacementField out = field;
  for (auto& v : out.dx) v = static_cast<float>(v);
  for (auto& v : out.dy) v = static_cast<float>(v);
  return out;
}

void save_field(const DisplacementField& field, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(kMagic.begin(), kMagic.end());
  bytes.reserve(16 + 8 * field.pixel_count());
  put_u32(bytes, static_cast<std::uint32_t>(field.height));
  put_u32(bytes, static_cast<std::uint32_t>(field.width));
  put_plane(bytes, field.dx);
  put_plane(bytes, field.dy);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

DisplacementField load_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw FormatError(path.string() + ": not a CQCDFLD1 field file");
  const std::uint32_t h = get_u32(bytes.data() + 8);
  const std::uint32_t w = get_u32(bytes.data() + 12);
  const std::uint64_t n = static_cast<std::uint64_t>(h) * w;
  if (bytes.size() != 16 + 8 * n) throw FormatError(path.string() + ": truncated or oversized field file");
  DisplacementField field(static_cast<int>(h), static_cast<int>(w));
  const unsigned char* p = bytes.data() + 16;
  for (std::uint64_t i = 0; i < n; ++i, p += 4) field.dx[i] = std::bit_cast<float>(get_u32(p));
  for (std::uint64_t i = 0; i < n; ++i, p += 4) field.dy[i] = std::bit_cast<float>(get_u32(p));
  return field;
}

}  // namespace cqcd
