#include <doctest.h>

#include <random>

#include "cellcount/errors.hpp"
#include "cellcount/imaging.hpp"

using namespace cellcount;

TEST_CASE("kernel of size 1 is [[1]]") {
  const auto k = gaussian_kernel(1, 1.0);
  REQUIRE(k.weights.size() == 1);
  CHECK(k.weights[0] == 1.0);
}

TEST_CASE("5x5 kernel sums to one, is symmetric and flattens for huge sigma") {
  const auto k = gaussian_kernel(5, 1.0);
  double total = 0.0;
  for (double w : k.weights) total += w;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) {
      CHECK(k.at(dx, dy) == k.at(-dx, dy));
      CHECK(k.at(dx, dy) == k.at(dy, dx));
    }
  CHECK(k.at(0, 0) > k.at(1, 0));
  const auto flat = gaussian_kernel(5, 1e9);
  for (double w : flat.weights) CHECK(w == doctest::Approx(1.0 / 25.0).epsilon(1e-12));
}

TEST_CASE("even or non-positive kernel sizes are parameter errors") {
  CHECK_THROWS_AS(gaussian_kernel(4, 1.0), ParameterError);
  CHECK_THROWS_AS(gaussian_kernel(0, 1.0), ParameterError);
  CHECK_THROWS_AS(gaussian_kernel(-3, 1.0), ParameterError);
  CHECK_THROWS_AS(gaussian_kernel(5, 0.0), ParameterError);
}

TEST_CASE("density of no dots is all zero") {
  const auto m = density_from_dots({}, {14, 14}, {224, 224}, gaussian_kernel());
  CHECK(m.total() == 0.0);
  for (double v : m.values) CHECK(v == 0.0);
}

TEST_CASE("ten interior dots give total 10") {
  std::vector<DotAnnotation> dots;
  for (int i = 0; i < 10; ++i) dots.push_back({60.0 + 10 * i, 100.0 + 3 * i});
  const auto m = density_from_dots(dots, {14, 14}, {224, 224}, gaussian_kernel());
  CHECK(std::abs(m.total() - 10.0) < 1e-9);
}

TEST_CASE("a corner dot keeps mass one after renormalization") {
  const std::vector<DotAnnotation> dots{{0.0, 0.0}};
  const auto k = gaussian_kernel();
  const auto m = density_from_dots(dots, {14, 14}, {224, 224}, k);
  CHECK(std::abs(m.total() - 1.0) < 1e-9);
  // The in-bounds quarter of the kernel, rescaled.
  double inside = 0.0;
  for (int dy = 0; dy <= 2; ++dy)
    for (int dx = 0; dx <= 2; ++dx) inside += k.at(dx, dy);
  CHECK(m.at(0, 0) == doctest::Approx(k.at(0, 0) / inside).epsilon(1e-14));
}

TEST_CASE("dot cell is floor(x * W_f / W)") {
  const auto k = gaussian_kernel(1, 1.0);
  const std::vector<DotAnnotation> dots{{31.9, 47.5}};
  const auto m = density_from_dots(dots, {14, 14}, {224, 224}, k);
  CHECK(m.at(1, 2) == 1.0);
}

TEST_CASE("out-of-bounds dots name their index") {
  const std::vector<DotAnnotation> dots{{1, 1}, {5, 5}, {224, 3}};
  try {
    density_from_dots(dots, {14, 14}, {224, 224}, gaussian_kernel());
    FAIL("expected RecordError");
  } catch (const RecordError& e) {
    CHECK(e.index() == 2);
  }
  const std::vector<DotAnnotation> neg{{-0.5, 1}};
  CHECK_THROWS_AS(density_from_dots(neg, {14, 14}, {224, 224}, gaussian_kernel()), RecordError);
}

TEST_CASE("parallel density batch equals the serial one") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 100);
  std::vector<std::vector<DotAnnotation>> sets(37);
  std::vector<DensityJob> jobs;
  for (auto& s : sets) {
    const auto n = static_cast<std::size_t>(u(rng));
    for (std::size_t i = 0; i < n; ++i) s.push_back({u(rng), u(rng)});
    jobs.push_back({s, {100, 100}});
  }
  const auto k = gaussian_kernel();
  const auto a = density_batch(kernels::Backend::serial, jobs, {12, 12}, k);
  const auto b = density_batch(kernels::Backend::parallel, jobs, {12, 12}, k);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].values == b[i].values);
    CHECK(std::abs(a[i].total() - static_cast<double>(sets[i].size())) < 1e-9 * std::max<double>(1, sets[i].size()));
  }
}

TEST_CASE("resize to the same size is the identity") {
  GrayImage img{5, 3, {}};
  for (int i = 0; i < 15; ++i) img.pixels.push_back(i / 15.0);
  const auto r = resize_bilinear(img, 5, 3);
  for (std::size_t i = 0; i < 15; ++i) CHECK(std::abs(r.pixels[i] - img.pixels[i]) < 1e-12);
}

TEST_CASE("resize keeps a constant image constant") {
  const auto r = resize_bilinear(GrayImage::filled(7, 9, 0.3), 13, 4);
  for (double v : r.pixels) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("2x2 checkerboard upsampled to 4x4 follows the bilinear formula") {
  GrayImage board{2, 2, {0, 1, 1, 0}};
  const auto r = resize_bilinear(board, 4, 4);
  // Source coordinate of output index i: (i + 0.5)·2/4 − 0.5, clamped to [0, 1].
  const double src[4] = {0.0, 0.25, 0.75, 1.0};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      const double u = src[x], v = src[y];
      const double expect = (1 - u) * v + u * (1 - v);  // f00=0, f10=1, f01=1, f11=0
      CHECK(r.at(x, y) == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("binary 8-bit PGM scales by maxval") {
  std::string bytes = "P5\n# comment\n2 2\n255\n";
  bytes += std::string{'\x00', '\xff', '\x80', '\x40'};
  const auto img = read_image(bytes);
  REQUIRE(img.width == 2);
  CHECK(img.pixels == std::vector<double>{0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0});
}

TEST_CASE("ascii PGM and 16-bit PGM round trip") {
  const auto a = read_image("P2\n2 1\n10\n0 5\n");
  CHECK(a.pixels == std::vector<double>{0.0, 0.5});
  GrayImage img{3, 2, {0.0, 0.25, 0.5, 0.75, 1.0, 1.0 / 65535.0}};
  const auto back = read_image(encode_pgm(img, 65535));
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(back.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-5));
}

TEST_CASE("truncated or unknown images are I/O errors") {
  CHECK_THROWS_AS(read_image("P5\n4 4\n255\nabc"), IoError);
  CHECK_THROWS_AS(read_image("GIF89a"), IoError);
  CHECK_THROWS_AS(read_image(""), IoError);
}

TEST_CASE("grayscale PNG decodes when supported") {
  if (!png_supported()) return;
  const unsigned char png[] = {
      0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52,
      0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02, 0x08, 0x00, 0x00, 0x00, 0x00, 0x57, 0xdd, 0x52,
      0xf8, 0x00, 0x00, 0x00, 0x0e, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x60, 0xf8, 0xcf, 0xd0,
      0xe0, 0x00, 0x00, 0x05, 0x42, 0x01, 0xc0, 0x70, 0x36, 0x36, 0xd6, 0x00, 0x00, 0x00, 0x00, 0x49,
      0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};
  const auto img = read_image(std::string_view(reinterpret_cast<const char*>(png), sizeof png));
  CHECK(img.pixels == std::vector<double>{0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0});
  CHECK_THROWS_AS(read_image(std::string_view(reinterpret_cast<const char*>(png), 40)), IoError);
}

TEST_CASE("heatmap of an all-zero map is all zero") {
  const auto pgm = encode_heatmap_pgm(DensityMap::zeros(3, 2));
  const auto img = read_image(pgm);
  for (double v : img.pixels) CHECK(v == 0.0);
}

TEST_CASE("heatmap maps the maximum to white and clamps negatives") {
  DensityMap m{2, 1, {-1.0, 2.0}};
  const auto img = read_image(encode_heatmap_pgm(m));
  CHECK(img.pixels == std::vector<double>{0.0, 1.0});
}

TEST_CASE("density csv round trip is exact") {
  DensityMap m{3, 2, {0.1, 1.0 / 3.0, 0, 2e-17, 5, -0.25}};
  const auto back = parse_density_csv(write_density_csv(m));
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.values == m.values);
}
