#pragma once

#include <png.h>

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dualcal/error.hpp"
#include "dualcal/imagekit/image.hpp"

// PNG is the only codec: 8-bit grayscale or RGB, non-interlaced. Samples are
// taken verbatim; gamma/ICC chunks are ignored on read and never written.

namespace dualcal {

namespace detail {

struct PngReadState {
  const std::uint8_t* data = nullptr;
  std::size_t size = 0;
  std::size_t offset = 0;
  char message[256] = {};
};

inline void png_error_to_state(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngReadState*>(png_get_error_ptr(png));
  std::strncpy(state->message, msg, sizeof(state->message) - 1);
  png_longjmp(png, 1);
}

inline void png_silent_warning(png_structp, png_const_charp) {}

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (state->offset + length > state->size) png_error(png, "truncated PNG stream");
  std::memcpy(out, state->data + state->offset, length);
  state->offset += length;
}

struct PngHeader {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  int interlace = 0;
};

// Pass 1: header only. Only trivially destructible locals live in frames that
// libpng may longjmp across.
inline bool png_read_header(PngReadState& state, PngHeader& header) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, png_error_to_state,
                                           png_silent_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &state, png_read_from_memory);
  png_read_info(png, info);
  header.width = png_get_image_width(png, info);
  header.height = png_get_image_height(png, info);
  header.bit_depth = png_get_bit_depth(png, info);
  header.color_type = png_get_color_type(png, info);
  header.interlace = png_get_interlace_type(png, info);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

inline bool png_read_pixels(PngReadState& state, std::uint8_t* interleaved, std::size_t row_bytes,
                            png_uint_32 height) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, png_error_to_state,
                                           png_silent_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, &state, png_read_from_memory);
  png_read_info(png, info);
  png_read_update_info(png, info);
  for (png_uint_32 y = 0; y < height; ++y) png_read_row(png, interleaved + y * row_bytes, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

struct PngWriteState {
  std::vector<std::uint8_t>* out = nullptr;
  char message[256] = {};
};

inline void png_write_error(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngWriteState*>(png_get_error_ptr(png));
  std::strncpy(state->message, msg, sizeof(state->message) - 1);
  png_longjmp(png, 1);
}

inline void png_write_to_memory(png_structp png, png_bytep data, png_size_t length) {
  auto* state = static_cast<PngWriteState*>(png_get_io_ptr(png));
  state->out->insert(state->out->end(), data, data + length);
}

inline void png_flush_noop(png_structp) {}

inline bool png_write_pixels(PngWriteState& state, const std::uint8_t* interleaved,
                             png_uint_32 width, png_uint_32 height, int color_type,
                             std::size_t row_bytes) {
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, png_write_error, png_silent_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, &state, png_write_to_memory, png_flush_noop);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (png_uint_32 y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(interleaved + y * row_bytes));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace detail

inline Raster decode_png(const std::vector<std::uint8_t>& bytes, const std::string& context = "<memory>") {
  auto fail = [&](const std::string& what) {
    return Error(ErrorCode::codec, context + ": " + what);
  };
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw fail("not a PNG file");

  detail::PngReadState state;
  state.data = bytes.data();
  state.size = bytes.size();
  detail::PngHeader header;
  if (!detail::png_read_header(state, header)) throw fail(state.message);

  if (header.bit_depth != 8) throw fail("unsupported depth " + std::to_string(header.bit_depth));
  if (header.interlace != PNG_INTERLACE_NONE) throw fail("unsupported interlace");
  int channels = 0;
  if (header.color_type == PNG_COLOR_TYPE_GRAY) {
    channels = 1;
  } else if (header.color_type == PNG_COLOR_TYPE_RGB) {
    channels = 3;
  } else {
    throw fail("unsupported color type " + std::to_string(header.color_type));
  }

  const std::size_t row_bytes = static_cast<std::size_t>(header.width) * channels;
  std::vector<std::uint8_t> interleaved(row_bytes * header.height);
  state.offset = 0;
  if (!detail::png_read_pixels(state, interleaved.data(), row_bytes, header.height)) {
    throw fail(state.message);
  }

  Raster img(static_cast<int>(header.width), static_cast<int>(header.height), channels);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        img.at(c, y, x) = interleaved[y * row_bytes + static_cast<std::size_t>(x) * channels + c];
      }
    }
  }
  return img;
}

inline std::vector<std::uint8_t> encode_png(const Raster& img) {
  detail::require(!img.empty(), "cannot encode an empty raster");
  const int channels = img.channels();
  const std::size_t row_bytes = static_cast<std::size_t>(img.width()) * channels;
  std::vector<std::uint8_t> interleaved(row_bytes * img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        interleaved[y * row_bytes + static_cast<std::size_t>(x) * channels + c] = img.at(c, y, x);
      }
    }
  }
  std::vector<std::uint8_t> out;
  detail::PngWriteState state;
  state.out = &out;
  const int color_type = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  if (!detail::png_write_pixels(state, interleaved.data(), img.width(), img.height(), color_type,
                                row_bytes)) {
    throw Error(ErrorCode::codec, std::string("PNG encode failed: ") + state.message);
  }
  return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "short write to " + path.string());
}

inline Raster load_png(const std::filesystem::path& path) {
  return decode_png(read_file_bytes(path), path.string());
}

inline void write_png(const Raster& img, const std::filesystem::path& path) {
  write_file_bytes(path, encode_png(img));
}

}  // namespace dualcal
