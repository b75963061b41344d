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

// Baseline JPEG round trip through libjpeg, used by the compression defense.

#ifndef DUALSHIFT_JPEG_CODEC_HPP
#define DUALSHIFT_JPEG_CODEC_HPP

#include <cstdio>  // jpeglib needs FILE
#include <jpeglib.h>

#include <csetjmp>
#include <cstdlib>
#include <string>
#include <vector>

#include "dualshift/common.hpp"
#include "dualshift/png_io.hpp"
#include "dualshift/tensor.hpp"

namespace dualshift {

namespace detail {
struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf setjmp_buffer;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->setjmp_buffer, 1);
}
}  // namespace detail

inline std::string jpeg_codec_id() {
  return "libjpeg-api-" + std::to_string(JPEG_LIB_VERSION);
}

/// Encodes a 3-channel [0,1] image as baseline JPEG at the given quality.
inline std::vector<unsigned char> jpeg_encode(const Image& img, int quality) {
  if (img.channels != 3) throw ValidationError("jpeg_encode: need a 3-channel image");
  if (quality < 1 || quality > 100)
    throw ValidationError("jpeg_encode: quality must be in [1,100], got " +
                          std::to_string(quality));

  jpeg_compress_struct cinfo;
  detail::JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = detail::jpeg_error_exit;

  unsigned char* buffer = nullptr;
  unsigned long buffer_size = 0;
  if (setjmp(jerr.setjmp_buffer)) {
    jpeg_destroy_compress(&cinfo);
    if (buffer) std::free(buffer);
    throw IoError("jpeg_encode: libjpeg failure");
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &buffer_size);

  cinfo.image_width = img.width;
  cinfo.image_height = img.height;
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);

  std::vector<unsigned char> row(std::size_t(img.width) * 3);
  const int plane = img.height * img.width;
  while (cinfo.next_scanline < cinfo.image_height) {
    const int y = static_cast<int>(cinfo.next_scanline);
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        row[std::size_t(x) * 3 + c] = quantize_u8(img.data[std::size_t(c) * plane + y * img.width + x]);
    unsigned char* rp = row.data();
    jpeg_write_scanlines(&cinfo, &rp, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);

  std::vector<unsigned char> out(buffer, buffer + buffer_size);
  std::free(buffer);
  return out;
}

inline Image jpeg_decode(const std::vector<unsigned char>& bytes) {
  jpeg_decompress_struct cinfo;
  detail::JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = detail::jpeg_error_exit;
  if (setjmp(jerr.setjmp_buffer)) {
    jpeg_destroy_decompress(&cinfo);
    throw IoError("jpeg_decode: libjpeg failure");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  Image img(3, static_cast<int>(cinfo.output_height), static_cast<int>(cinfo.output_width));
  std::vector<unsigned char> row(std::size_t(img.width) * 3);
  const int plane = img.height * img.width;
  while (cinfo.output_scanline < cinfo.output_height) {
    const int y = static_cast<int>(cinfo.output_scanline);
    unsigned char* rp = row.data();
    jpeg_read_scanlines(&cinfo, &rp, 1);
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        img.data[std::size_t(c) * plane + y * img.width + x] = row[std::size_t(x) * 3 + c] / 255.0f;
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

/// Encode + decode at the given quality; shape is preserved.
inline Image jpeg_round_trip(const Image& img, int quality) {
  return jpeg_decode(jpeg_encode(img, quality));
}

}  // namespace dualshift

#endif  // DUALSHIFT_JPEG_CODEC_HPP
