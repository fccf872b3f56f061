#pragma once

// PNG import/export through libpng's simplified API. Gray PNGs without alpha
// load as 1-channel rasters; everything else loads as RGBA.

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "inkweave/error.hpp"
#include "inkweave/raster.hpp"

namespace inkweave {

namespace detail {

inline Raster finish_png_read(png_image& image, ErrorCode on_error) {
  const bool gray = (image.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_ALPHA)) == 0 &&
                    (image.format & PNG_FORMAT_FLAG_COLORMAP) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGBA;
  const int channels = gray ? 1 : 4;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw Error(on_error, "empty PNG");
  }
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(on_error, "PNG decode failed: " + msg);
  }
  return Raster(static_cast<int>(image.width), static_cast<int>(image.height), channels, std::move(pixels));
}

inline png_image describe_for_write(const Raster& raster) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width());
  image.height = static_cast<png_uint_32>(raster.height());
  image.format = raster.channels() == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGBA;
  return image;
}

}  // namespace detail

inline Raster decode_png(const std::vector<std::uint8_t>& bytes, ErrorCode on_error = ErrorCode::BadResponse) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (bytes.empty() || !png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(on_error, std::string("not a PNG: ") + (bytes.empty() ? "empty" : image.message));
  }
  return detail::finish_png_read(image, on_error);
}

inline Raster decode_png(const std::string& bytes, ErrorCode on_error = ErrorCode::BadResponse) {
  return decode_png(std::vector<std::uint8_t>(bytes.begin(), bytes.end()), on_error);
}

inline std::vector<std::uint8_t> encode_png(const Raster& raster) {
  if (raster.empty()) throw Error(ErrorCode::EmptyInput, "cannot encode empty raster");
  png_image image = detail::describe_for_write(raster);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, raster.data().data(), 0, nullptr)) {
    throw Error(ErrorCode::WriteFailure, std::string("PNG sizing failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, raster.data().data(), 0, nullptr)) {
    throw Error(ErrorCode::WriteFailure, std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

inline Raster read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableInput, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes, ErrorCode::UnreadableInput);
}

inline void write_png(const std::filesystem::path& path, const Raster& raster) {
  const auto bytes = encode_png(raster);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::WriteFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::WriteFailure, "short write to " + path.string());
}

}  // namespace inkweave
