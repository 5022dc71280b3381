#include "cellcount/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>

#ifdef CELLCOUNT_HAVE_PNG
#include <png.h>
#endif

#include "cellcount/csv.hpp"
#include "cellcount/errors.hpp"

namespace cellcount {

GrayImage GrayImage::filled(std::size_t width, std::size_t height, double value) {
  return GrayImage{width, height, std::vector<double>(width * height, value)};
}

DensityMap DensityMap::zeros(std::size_t width, std::size_t height) {
  return DensityMap{width, height, std::vector<double>(width * height, 0.0)};
}

double DensityMap::total() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

GaussianKernel gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0) {
    throw ParameterError("gaussian_kernel: size must be odd and >= 1, got " + std::to_string(size));
  }
  if (!(sigma > 0.0)) {
    throw ParameterError("gaussian_kernel: sigma must be > 0, got " + std::to_string(sigma));
  }
  GaussianKernel k;
  k.size = size;
  k.sigma = sigma;
  k.weights.resize(static_cast<std::size_t>(size * size));
  const int r = size / 2;
  double total = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k.weights[static_cast<std::size_t>((dy + r) * size + (dx + r))] = w;
      total += w;
    }
  }
  for (auto& w : k.weights) w /= total;
  return k;
}

namespace {

std::size_t grid_cell(double coord, std::size_t src, std::size_t out) {
  const double g = coord * static_cast<double>(out) / static_cast<double>(src);
  const auto cell = static_cast<std::size_t>(std::floor(g));
  return std::min(cell, out - 1);
}

}  // namespace

DensityMap density_from_dots(std::span<const DotAnnotation> dots, ImageSize out_size,
                             ImageSize src_size, const GaussianKernel& kernel) {
  if (src_size.width == 0 || src_size.height == 0) {
    throw ParameterError("density_from_dots: source size must be positive");
  }
  if (out_size.width == 0 || out_size.height == 0) {
    throw ParameterError("density_from_dots: output size must be positive");
  }
  DensityMap map = DensityMap::zeros(out_size.width, out_size.height);
  const int r = kernel.radius();
  const auto W = static_cast<long>(out_size.width);
  const auto H = static_cast<long>(out_size.height);
  for (std::size_t i = 0; i < dots.size(); ++i) {
    const auto& d = dots[i];
    if (!(d.x >= 0.0 && d.y >= 0.0 && d.x < static_cast<double>(src_size.width) &&
          d.y < static_cast<double>(src_size.height))) {
      throw RecordError("density_from_dots: dot " + std::to_string(i) + " at (" +
                            std::to_string(d.x) + ", " + std::to_string(d.y) +
                            ") lies outside the " + std::to_string(src_size.width) + "x" +
                            std::to_string(src_size.height) + " image",
                        i);
    }
    const auto cx = static_cast<long>(grid_cell(d.x, src_size.width, out_size.width));
    const auto cy = static_cast<long>(grid_cell(d.y, src_size.height, out_size.height));
    double inside = 0.0;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (cx + dx >= 0 && cx + dx < W && cy + dy >= 0 && cy + dy < H) inside += kernel.at(dx, dy);
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        const long x = cx + dx, y = cy + dy;
        if (x >= 0 && x < W && y >= 0 && y < H) {
          map.values[static_cast<std::size_t>(y * W + x)] += kernel.at(dx, dy) / inside;
        }
      }
    }
  }
  return map;
}

std::vector<DensityMap> density_batch(kernels::Backend backend, std::span<const DensityJob> jobs,
                                      ImageSize out_size, const GaussianKernel& kernel) {
  std::vector<DensityMap> out(jobs.size());
  const auto n = static_cast<std::ptrdiff_t>(jobs.size());
  if (backend == kernels::Backend::serial) {
    for (std::ptrdiff_t i = 0; i < n; ++i)
      out[i] = density_from_dots(jobs[i].dots, out_size, jobs[i].src_size, kernel);
    return out;
  }
  // Exceptions must not escape the parallel region; keep the first one.
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = density_from_dots(jobs[i].dots, out_size, jobs[i].src_size, kernel);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

GrayImage resize_bilinear(const GrayImage& img, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ParameterError("resize_bilinear: target size must be >= 1");
  if (img.width == 0 || img.height == 0) throw ParameterError("resize_bilinear: empty image");
  GrayImage out = GrayImage::filled(width, height, 0.0);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  auto source = [](std::size_t dst, double s, std::size_t n, std::size_t& i0, std::size_t& i1,
                   double& t) {
    double src = (static_cast<double>(dst) + 0.5) * s - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(src));
    i1 = std::min(i0 + 1, n - 1);
    t = src - static_cast<double>(i0);
  };
  for (std::size_t y = 0; y < height; ++y) {
    std::size_t y0, y1;
    double ty;
    source(y, sy, img.height, y0, y1, ty);
    for (std::size_t x = 0; x < width; ++x) {
      std::size_t x0, x1;
      double tx;
      source(x, sx, img.width, x0, x1, tx);
      const double top = img.at(x0, y0) * (1.0 - tx) + img.at(x1, y0) * tx;
      const double bottom = img.at(x0, y1) * (1.0 - tx) + img.at(x1, y1) * tx;
      out.at(x, y) = top * (1.0 - ty) + bottom * ty;
    }
  }
  return out;
}

// ---- PGM ---------------------------------------------------------------------

namespace {

class PgmHeader {
 public:
  explicit PgmHeader(std::string_view bytes) : b_(bytes) {}

  // Next whitespace-delimited token, skipping '#' comments.
  std::size_t number(const char* what) {
    skip();
    const auto start = pos_;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) ++pos_;
    if (start == pos_) throw IoError(std::string("pgm: truncated or malformed ") + what);
    return static_cast<std::size_t>(std::stoull(std::string(b_.substr(start, pos_ - start))));
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  void skip() {
    while (pos_ < b_.size()) {
      if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view b_;
  std::size_t pos_ = 2;
};

GrayImage read_pgm(std::string_view bytes) {
  const bool binary = bytes[1] == '5';
  PgmHeader h(bytes);
  const std::size_t w = h.number("width");
  const std::size_t ht = h.number("height");
  const std::size_t maxval = h.number("maxval");
  if (w == 0 || ht == 0) throw IoError("pgm: zero image dimension");
  if (maxval == 0 || maxval > 65535) throw IoError("pgm: maxval out of range");
  GrayImage img = GrayImage::filled(w, ht, 0.0);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (binary) {
    h.advance(1);  // single whitespace after maxval
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (bytes.size() < h.pos() + w * ht * bps) throw IoError("pgm: truncated pixel data");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + h.pos());
    for (std::size_t i = 0; i < w * ht; ++i) {
      const std::size_t v = bps == 2 ? (static_cast<std::size_t>(p[2 * i]) << 8) | p[2 * i + 1] : p[i];
      if (v > maxval) throw IoError("pgm: sample exceeds maxval");
      img.pixels[i] = static_cast<double>(v) * scale;
    }
  } else {
    for (std::size_t i = 0; i < w * ht; ++i) {
      const std::size_t v = h.number("pixel data");
      if (v > maxval) throw IoError("pgm: sample exceeds maxval");
      img.pixels[i] = static_cast<double>(v) * scale;
    }
  }
  return img;
}

#ifdef CELLCOUNT_HAVE_PNG
struct PngSource {
  std::string_view bytes;
  std::size_t pos = 0;
};

void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngSource*>(png_get_io_ptr(png));
  if (src->pos + n > src->bytes.size()) png_error(png, "truncated PNG");
  std::memcpy(out, src->bytes.data() + src->pos, n);
  src->pos += n;
}

// libpng reports through callbacks; keep the message for the exception instead of stderr.
void png_on_error(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

GrayImage read_png(std::string_view bytes) {
  std::string message = "decode failed";
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_on_error, png_on_warning);
  if (!png) throw IoError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  PngSource src{bytes, 0};
  GrayImage img;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: " + message);
  }
  png_set_read_fn(png, &src, png_read_mem);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: only grayscale images are supported");
  }
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t w = png_get_image_width(png, info);
  const std::size_t h = png_get_image_height(png, info);
  const std::size_t depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * h);
  rows.resize(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  img = GrayImage::filled(w, h, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      img.at(x, y) = depth == 16
                         ? static_cast<double>((rows[y][2 * x] << 8) | rows[y][2 * x + 1]) / 65535.0
                         : static_cast<double>(rows[y][x]) / 255.0;
    }
  }
  return img;
}
#endif

}  // namespace

bool png_supported() {
#ifdef CELLCOUNT_HAVE_PNG
  return true;
#else
  return false;
#endif
}

GrayImage read_image(std::string_view bytes) {
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '2' || bytes[1] == '5')) {
    return read_pgm(bytes);
  }
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG\r\n\x1a\n", 8) == 0) {
#ifdef CELLCOUNT_HAVE_PNG
    return read_png(bytes);
#else
    throw IoError("png: support not compiled in");
#endif
  }
  throw IoError("unsupported image format");
}

GrayImage read_image_file(const std::filesystem::path& path) {
  try {
    return read_image(csv::read_file(path.string()));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string encode_pgm(const GrayImage& img, unsigned maxval) {
  if (maxval == 0 || maxval > 65535) throw ParameterError("encode_pgm: maxval out of range");
  std::ostringstream os;
  os << "P5\n" << img.width << ' ' << img.height << '\n' << maxval << '\n';
  std::string out = os.str();
  for (double v : img.pixels) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
    if (maxval > 255) out += static_cast<char>((q >> 8) & 0xFF);
    out += static_cast<char>(q & 0xFF);
  }
  return out;
}

std::string encode_heatmap_pgm(const DensityMap& map) {
  GrayImage img = GrayImage::filled(map.width, map.height, 0.0);
  double mx = 0.0;
  for (double v : map.values) mx = std::max(mx, v);
  if (mx > 0.0) {
    for (std::size_t i = 0; i < map.values.size(); ++i)
      img.pixels[i] = std::max(0.0, map.values[i]) / mx;
  }
  return encode_pgm(img, 255);
}

void write_heatmap(const DensityMap& map, const std::filesystem::path& path) {
  csv::write_file(path.string(), encode_heatmap_pgm(map));
}

std::string write_density_csv(const DensityMap& map) {
  std::string out = std::to_string(map.width) + "," + std::to_string(map.height) + "\n";
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    if (i) out += ',';
    out += csv::format_exact(map.values[i]);
  }
  out += '\n';
  return out;
}

DensityMap parse_density_csv(std::string_view text) {
  const auto nl = text.find('\n');
  if (nl == std::string_view::npos) throw ParseError("density csv: missing header line", 1);
  const auto header = csv::split_line(text.substr(0, nl));
  if (header.size() != 2) throw ParseError("density csv: header must be W_f,H_f", 1);
  DensityMap map = DensityMap::zeros(static_cast<std::size_t>(csv::parse_int(header[0], 1)),
                                     static_cast<std::size_t>(csv::parse_int(header[1], 1)));
  auto body = text.substr(nl + 1);
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.remove_suffix(1);
  const auto fields = body.empty() ? csv::Row{} : csv::split_line(body);
  if (fields.size() != map.values.size()) {
    throw ParseError("density csv: expected " + std::to_string(map.values.size()) +
                         " values, got " + std::to_string(fields.size()),
                     2);
  }
  for (std::size_t i = 0; i < fields.size(); ++i) map.values[i] = csv::parse_double(fields[i], 2);
  return map;
}

}  // namespace cellcount
