#pragma once

// Grayscale images, Gaussian kernels and count-conserving density maps.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cellcount/annotations.hpp"
#include "cellcount/kernels.hpp"

namespace cellcount {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major, each in [0,1]

  static GrayImage filled(std::size_t width, std::size_t height, double value);
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  ImageSize size() const { return {width, height}; }
};

struct DensityMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;  // row-major

  static DensityMap zeros(std::size_t width, std::size_t height);
  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
  double total() const;
};

struct GaussianKernel {
  int size = 5;
  double sigma = 1.0;
  std::vector<double> weights;  // size×size, row-major, sums to 1

  int radius() const { return size / 2; }
  double at(int dx, int dy) const {
    return weights[static_cast<std::size_t>((dy + radius()) * size + (dx + radius()))];
  }
};

// exp(-(dx²+dy²)/(2σ²)) sampled on the integer grid centred at 0, normalized.
GaussianKernel gaussian_kernel(int size = 5, double sigma = 1.0);

// Stamps one normalized kernel per dot on an out_size grid. Dot (x, y) in
// src_size pixels lands on cell (⌊x·W_f/W⌋, ⌊y·H_f/H⌋), the cell whose
// centre is nearest. Kernels cut by the border are renormalized over their
// in-bounds part, so every dot contributes mass exactly 1.
DensityMap density_from_dots(std::span<const DotAnnotation> dots, ImageSize out_size,
                             ImageSize src_size, const GaussianKernel& kernel);

struct DensityJob {
  std::span<const DotAnnotation> dots;
  ImageSize src_size;
};

// One map per job; the parallel backend fans out over jobs.
std::vector<DensityMap> density_batch(kernels::Backend backend, std::span<const DensityJob> jobs,
                                      ImageSize out_size, const GaussianKernel& kernel);

// Half-pixel-centre bilinear resampling with edge clamping.
GrayImage resize_bilinear(const GrayImage& img, std::size_t width, std::size_t height);

// PGM (P2/P5, 8 or 16 bit) always; grayscale PNG when built with libpng.
GrayImage read_image(std::string_view bytes);
GrayImage read_image_file(const std::filesystem::path& path);
bool png_supported();

std::string encode_pgm(const GrayImage& img, unsigned maxval = 255);
// Max-normalized 8-bit PGM; negative values render as 0.
std::string encode_heatmap_pgm(const DensityMap& map);
void write_heatmap(const DensityMap& map, const std::filesystem::path& path);

// `W_f,H_f` header line followed by one line of row-major values.
std::string write_density_csv(const DensityMap& map);
DensityMap parse_density_csv(std::string_view text);

}  // namespace cellcount
