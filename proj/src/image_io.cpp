#include "cqcd/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include "cqcd/error.hpp"

namespace cqcd {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

unsigned quantize(double v, unsigned maxval) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned>(std::lround(c * maxval));
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// ---- PNM -----------------------------------------------------------------

Image load_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
  };
  const std::string magic = next_token();
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw FormatError(path.string() + ": unsupported PNM variant '" + magic + "'");
  int width = 0, height = 0;
  unsigned maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = static_cast<unsigned>(std::stoul(next_token()));
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": corrupt PNM header");
  }
  if (width <= 0 || height <= 0 || maxval == 0 || maxval > 65535)
    throw FormatError(path.string() + ": invalid PNM header values");
  ++pos;  // single whitespace byte before the raster
  const int bytes_per_sample = maxval > 255 ? 2 : 1;
  const std::size_t needed = static_cast<std::size_t>(width) * height * channels * bytes_per_sample;
  if (bytes.size() < pos + needed) throw FormatError(path.string() + ": truncated PNM raster");

  Image img(height, width, channels);
  const unsigned char* p = bytes.data() + pos;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        unsigned v = *p++;
        if (bytes_per_sample == 2) v = (v << 8) | *p++;
        img.at(y, x, c) = static_cast<double>(v) / maxval;
      }
  return img;
}

void save_pnm(const Image& img, const std::filesystem::path& path, int bit_depth) {
  const char* magic = img.channels() == 1 ? "P5" : "P6";
  const unsigned maxval = bit_depth == 16 ? 65535u : 255u;
  std::string header = std::string(magic) + "\n" + std::to_string(img.width()) + " " +
                       std::to_string(img.height()) + "\n" + std::to_string(maxval) + "\n";
  std::vector<unsigned char> raster;
  raster.reserve(img.size() * (bit_depth / 8));
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const unsigned v = quantize(img.at(y, x, c), maxval);
        if (bit_depth == 16) raster.push_back(static_cast<unsigned char>(v >> 8));
        raster.push_back(static_cast<unsigned char>(v & 0xff));
      }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

// ---- PNG -----------------------------------------------------------------

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) {
  throw FormatError(std::string("png: ") + msg);
}

void png_warning_handler(png_structp, png_const_charp) {}

Image load_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError(path.string() + ": not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                           png_warning_handler);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // native little-endian uint16 rows
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  if (channels != 1 && channels != 3) throw FormatError(path.string() + ": unsupported channel layout");

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> buffer(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());

  Image img(height, width, channels);
  const double maxval = out_depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < height; ++y) {
    const unsigned char* row = rows[y];
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        const std::size_t k = static_cast<std::size_t>(x) * channels + c;
        const unsigned v = out_depth == 16 ? (row[2 * k] | (row[2 * k + 1] << 8)) : row[k];
        img.at(y, x, c) = v / maxval;
      }
  }
  return img;
}

void save_png(const Image& img, const std::filesystem::path& path, int bit_depth) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                            png_warning_handler);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  const int color = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width(), img.height(), bit_depth, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const unsigned maxval = bit_depth == 16 ? 65535u : 255u;
  const int bytes = bit_depth / 8;
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * img.channels() * bytes);
  for (int y = 0; y < img.height(); ++y) {
    std::size_t k = 0;
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const unsigned v = quantize(img.at(y, x, c), maxval);
        if (bytes == 2) row[k++] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
        row[k++] = static_cast<unsigned char>(v & 0xff);
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  const std::string ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return load_pnm(path);
  throw FormatError("unsupported image format: " + path.string());
}

void save_image(const Image& img, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw FormatError("bit depth must be 8 or 16");
  if (img.channels() != 1 && img.channels() != 3)
    throw FormatError("only 1- and 3-channel images can be saved");
  if (img.empty()) throw DimensionError("cannot save an empty image");
  const std::string ext = lower_extension(path);
  if (ext == ".png") return save_png(img, path, bit_depth);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    if ((ext == ".pgm" && img.channels() != 1) || (ext == ".ppm" && img.channels() != 3))
      throw FormatError(path.string() + ": channel count does not match extension");
    return save_pnm(img, path, bit_depth);
  }
  throw FormatError("unsupported image format: " + path.string());
}

}  // namespace cqcd
