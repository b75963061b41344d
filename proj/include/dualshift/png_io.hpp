/* Copyright 2026 The Dualshift Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DUALSHIFT_PNG_IO_HPP
#define DUALSHIFT_PNG_IO_HPP

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "dualshift/common.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

inline std::uint8_t quantize_u8(float v) {
  float q = std::round(v * 255.0f);
  if (q < 0.0f) q = 0.0f;
  if (q > 255.0f) q = 255.0f;
  return static_cast<std::uint8_t>(q);
}

/// Writes a 3-channel image as an 8-bit RGB PNG (round(v*255), clamped).
inline void write_png(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 3) throw ValidationError("write_png: need a 3-channel image");
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("write_png: cannot open " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("write_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("write_png: libpng error writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<std::uint8_t> row(std::size_t(img.width) * 3);
  const int plane = img.height * img.width;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c)
        row[std::size_t(x) * 3 + c] = quantize_u8(img.data[std::size_t(c) * plane + y * img.width + x]);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

/// Reads an 8-bit RGB PNG into a [0,1] float image.
inline Image read_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) throw IoError("read_png: cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("read_png: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("read_png: libpng error reading " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Image img(3, height, width);
  std::vector<std::uint8_t> row(std::size_t(width) * 3);
  const int plane = height * width;
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        img.data[std::size_t(c) * plane + y * width + x] = row[std::size_t(x) * 3 + c] / 255.0f;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

}  // namespace dualshift

#endif  // DUALSHIFT_PNG_IO_HPP
