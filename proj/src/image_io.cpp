#include "crpl/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace crpl {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  check_runtime(f != nullptr, "cannot open ", path.string());
  return f;
}

Tensor<float> interleaved_to_tensor(const std::vector<unsigned char>& buf, std::int64_t h,
                                    std::int64_t w) {
  Tensor<float> img({3, h, w});
  float* r = img.data();
  float* g = r + h * w;
  float* b = g + h * w;
  for (std::int64_t i = 0; i < h * w; ++i) {
    r[i] = static_cast<float>(buf[3 * i + 0]) / 255.0f;
    g[i] = static_cast<float>(buf[3 * i + 1]) / 255.0f;
    b[i] = static_cast<float>(buf[3 * i + 2]) / 255.0f;
  }
  return img;
}

// -- PNG --------------------------------------------------------------------

Tensor<float> load_png(const std::filesystem::path& path, std::FILE* f) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check_runtime(png != nullptr, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  std::vector<unsigned char> buf;
  std::vector<png_bytep> rows;
  std::int64_t h = 0, w = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(cat("corrupt PNG stream: ", path.string()));
  }
  png_init_io(png, f);
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  // normalise everything to 8-bit RGB
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  check_runtime(png_get_rowbytes(png, info) == static_cast<png_size_t>(w * 3),
                "unexpected PNG row size in ", path.string());
  buf.resize(static_cast<std::size_t>(h * w * 3));
  rows.resize(static_cast<std::size_t>(h));
  for (std::int64_t y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + y * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return interleaved_to_tensor(buf, h, w);
}

// -- JPEG ---------------------------------------------------------------------

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

Tensor<float> load_jpeg(const std::filesystem::path& path, std::FILE* f) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr jerr;
  cinfo.err = jpeg_std_error(&jerr.pub);
  jerr.pub.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error(cat("corrupt JPEG stream: ", path.string()));
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const std::int64_t w = cinfo.output_width;
  const std::int64_t h = cinfo.output_height;
  check_runtime(cinfo.output_components == 3, "unexpected JPEG component count in ", path.string());
  std::vector<unsigned char> buf(static_cast<std::size_t>(h * w * 3));
  while (cinfo.output_scanline < cinfo.output_height) {
    unsigned char* row = buf.data() + static_cast<std::int64_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return interleaved_to_tensor(buf, h, w);
}

}  // namespace

Tensor<float> load_image(const std::filesystem::path& path) {
  check_runtime(std::filesystem::exists(path), "image file does not exist: ", path.string());
  FilePtr f = open_file(path, "rb");
  unsigned char magic[8] = {0};
  const std::size_t got = std::fread(magic, 1, sizeof(magic), f.get());
  std::rewind(f.get());
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (got >= 8 && std::memcmp(magic, png_sig, 8) == 0) return load_png(path, f.get());
  if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return load_jpeg(path, f.get());
  throw std::runtime_error(cat("unsupported image format (not PNG or JPEG): ", path.string()));
}

void save_png(const std::filesystem::path& path, const Tensor<float>& img) {
  check_arg(img.rank() == 3 && img.dim(0) == 3, "save_png: image must be (3,H,W), got ",
            shape_str(img));
  const std::int64_t h = img.dim(1), w = img.dim(2);
  std::vector<unsigned char> buf(static_cast<std::size_t>(h * w * 3));
  const float* r = img.data();
  const float* g = r + h * w;
  const float* b = g + h * w;
  auto quant = [](float v) {
    const double c = std::min(1.0, std::max(0.0, static_cast<double>(v)));
    return static_cast<unsigned char>(std::lround(c * 255.0));
  };
  for (std::int64_t i = 0; i < h * w; ++i) {
    buf[3 * static_cast<std::size_t>(i) + 0] = quant(r[i]);
    buf[3 * static_cast<std::size_t>(i) + 1] = quant(g[i]);
    buf[3 * static_cast<std::size_t>(i) + 2] = quant(b[i]);
  }

  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check_runtime(png != nullptr, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error(cat("PNG write failed: ", path.string()));
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (std::int64_t y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + y * w * 3;
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace crpl
