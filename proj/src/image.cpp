#include "dvp/image.hpp"

#include <png.h>
// jpeglib.h needs size_t/FILE declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

namespace dvp {
namespace {

bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  return b.size() >= 8 && std::memcmp(b.data(), kSig, 8) == 0;
}

bool is_jpeg(std::span<const std::uint8_t> b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

std::uint32_t be32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 | p[3];
}

template <int C>
Raster<C> decode_png_as(std::span<const std::uint8_t> bytes, png_uint_32 format) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw Error(Errc::DecodeError, std::string("png: ") + img.message);
  }
  img.format = format;
  Raster<C> out(static_cast<int>(img.width), static_cast<int>(img.height));
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&img, &black, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw Error(Errc::DecodeError, "png: " + msg);
  }
  return out;
}

template <int C>
std::vector<std::uint8_t> encode_png_as(const Raster<C>& r, png_uint_32 format) {
  if (r.empty()) throw Error(Errc::InvalidArgument, "cannot encode an empty raster");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(r.width);
  img.height = static_cast<png_uint_32>(r.height);
  img.format = format;
  png_alloc_size_t size = PNG_IMAGE_PNG_SIZE_MAX(img);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, r.pixels.data(), 0, nullptr)) {
    throw Error(Errc::IoError, std::string("png: ") + img.message);
  }
  out.resize(size);
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

RasterImage decode_jpeg(std::span<const std::uint8_t> bytes) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  RasterImage out;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(Errc::DecodeError, std::string("jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out = RasterImage(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.at(0, static_cast<int>(cinfo.output_scanline));
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return out;
}

}  // namespace

int parse_exif_block(std::span<const std::uint8_t> tiff) {
  if (tiff.size() < 8) return 1;
  bool little;
  if (tiff[0] == 'I' && tiff[1] == 'I') {
    little = true;
  } else if (tiff[0] == 'M' && tiff[1] == 'M') {
    little = false;
  } else {
    return 1;
  }
  auto u16 = [&](std::size_t at) -> std::uint32_t {
    return little ? tiff[at] | tiff[at + 1] << 8 : tiff[at] << 8 | tiff[at + 1];
  };
  auto u32 = [&](std::size_t at) -> std::uint32_t {
    return little ? u16(at) | u16(at + 2) << 16 : u16(at) << 16 | u16(at + 2);
  };
  if (u16(2) != 42) return 1;
  std::size_t ifd = u32(4);
  if (ifd + 2 > tiff.size()) return 1;
  std::size_t count = u16(ifd);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t entry = ifd + 2 + i * 12;
    if (entry + 12 > tiff.size()) return 1;
    if (u16(entry) == 0x0112 && u16(entry + 2) == 3) {
      int v = static_cast<int>(u16(entry + 8));
      return v >= 1 && v <= 8 ? v : 1;
    }
  }
  return 1;
}

int read_exif_orientation(std::span<const std::uint8_t> b) {
  if (is_jpeg(b)) {
    std::size_t pos = 2;
    while (pos + 4 <= b.size() && b[pos] == 0xFF) {
      std::uint8_t marker = b[pos + 1];
      if (marker == 0xDA || marker == 0xD9) break;  // scan data follows
      std::size_t len = std::size_t(b[pos + 2]) << 8 | b[pos + 3];
      if (len < 2 || pos + 2 + len > b.size()) break;
      if (marker == 0xE1 && len >= 8 && std::memcmp(b.data() + pos + 4, "Exif\0\0", 6) == 0) {
        return parse_exif_block(b.subspan(pos + 10, len - 8));
      }
      pos += 2 + len;
    }
    return 1;
  }
  if (is_png(b)) {
    std::size_t pos = 8;
    while (pos + 12 <= b.size()) {
      std::size_t len = be32(b.data() + pos);
      if (pos + 12 + len > b.size()) break;
      if (std::memcmp(b.data() + pos + 4, "eXIf", 4) == 0) {
        return parse_exif_block(b.subspan(pos + 8, len));
      }
      if (std::memcmp(b.data() + pos + 4, "IDAT", 4) == 0) break;
      pos += 12 + len;
    }
  }
  return 1;
}

RasterImage apply_orientation(const RasterImage& src, int orientation) {
  if (orientation <= 1 || orientation > 8) return src;
  const int w = src.width, h = src.height;
  const bool swap = orientation >= 5;
  RasterImage dst(swap ? h : w, swap ? w : h);
  for (int y = 0; y < dst.height; ++y) {
    for (int x = 0; x < dst.width; ++x) {
      int sx = x, sy = y;
      switch (orientation) {
        case 2: sx = w - 1 - x; sy = y; break;
        case 3: sx = w - 1 - x; sy = h - 1 - y; break;
        case 4: sx = x; sy = h - 1 - y; break;
        case 5: sx = y; sy = x; break;
        case 6: sx = y; sy = h - 1 - x; break;
        case 7: sx = w - 1 - y; sy = h - 1 - x; break;
        case 8: sx = w - 1 - y; sy = x; break;
      }
      std::memcpy(dst.at(x, y), src.at(sx, sy), 3);
    }
  }
  return dst;
}

RasterImage decode_image(std::span<const std::uint8_t> bytes) {
  RasterImage img;
  if (is_png(bytes)) {
    img = decode_png_as<3>(bytes, PNG_FORMAT_RGB);
  } else if (is_jpeg(bytes)) {
    img = decode_jpeg(bytes);
  } else {
    throw Error(Errc::DecodeError, "not a PNG or JPEG stream");
  }
  return apply_orientation(img, read_exif_orientation(bytes));
}

RasterImage load_image(const std::string& path) {
  auto bytes = read_file(path);
  return decode_image(bytes);
}

std::vector<std::uint8_t> encode_png(const RasterImage& image) {
  return encode_png_as(image, PNG_FORMAT_RGB);
}

std::vector<std::uint8_t> encode_png(const MaskImage& mask) {
  return encode_png_as(mask, PNG_FORMAT_GRAY);
}

MaskImage decode_png_mask(std::span<const std::uint8_t> bytes) {
  if (!is_png(bytes)) throw Error(Errc::DecodeError, "mask is not a PNG stream");
  return decode_png_as<1>(bytes, PNG_FORMAT_GRAY);
}

void save_png(const std::string& path, const RasterImage& image) {
  write_file_atomic(path, encode_png(image));
}

void save_png(const std::string& path, const MaskImage& mask) {
  write_file_atomic(path, encode_png(mask));
}

Sha256 pixel_digest(const RasterImage& image) {
  std::vector<std::uint8_t> buf;
  buf.reserve(8 + image.pixels.size());
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  put32(static_cast<std::uint32_t>(image.width));
  put32(static_cast<std::uint32_t>(image.height));
  buf.insert(buf.end(), image.pixels.begin(), image.pixels.end());
  return sha256(buf);
}

RasterImage fit_cell(const RasterImage& src, int cell) {
  if (cell <= 0) throw Error(Errc::ZeroSizeCell, "cell size must be positive");
  if (src.empty()) throw Error(Errc::InvalidArgument, "cannot resize an empty image");
  const int w = src.width, h = src.height;
  int rw, rh;
  if (w <= h) {
    rw = cell;
    rh = std::max(cell, static_cast<int>(std::lround(static_cast<double>(h) * cell / w)));
  } else {
    rh = cell;
    rw = std::max(cell, static_cast<int>(std::lround(static_cast<double>(w) * cell / h)));
  }
  const int ox = (rw - cell) / 2;
  const int oy = (rh - cell) / 2;

  // Only the cropped window of the resized image is ever sampled.
  RasterImage out(cell, cell);
  for (int y = 0; y < cell; ++y) {
    double sy = std::clamp((y + oy + 0.5) * h / rh - 0.5, 0.0, static_cast<double>(h - 1));
    int y0 = static_cast<int>(sy);
    int y1 = std::min(y0 + 1, h - 1);
    double fy = sy - y0;
    for (int x = 0; x < cell; ++x) {
      double sx = std::clamp((x + ox + 0.5) * w / rw - 0.5, 0.0, static_cast<double>(w - 1));
      int x0 = static_cast<int>(sx);
      int x1 = std::min(x0 + 1, w - 1);
      double fx = sx - x0;
      const std::uint8_t* p00 = src.at(x0, y0);
      const std::uint8_t* p10 = src.at(x1, y0);
      const std::uint8_t* p01 = src.at(x0, y1);
      const std::uint8_t* p11 = src.at(x1, y1);
      std::uint8_t* d = out.at(x, y);
      for (int c = 0; c < 3; ++c) {
        double top = (1.0 - fx) * p00[c] + fx * p10[c];
        double bottom = (1.0 - fx) * p01[c] + fx * p11[c];
        double v = (1.0 - fy) * top + fy * bottom;
        d[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

RasterImage crop(const RasterImage& src, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > src.width || y + h > src.height) {
    throw Error(Errc::DimensionMismatch, "crop rectangle outside image");
  }
  RasterImage out(w, h);
  for (int row = 0; row < h; ++row) {
    std::memcpy(out.at(0, row), src.at(x, y + row), static_cast<std::size_t>(w) * 3);
  }
  return out;
}

}  // namespace dvp
