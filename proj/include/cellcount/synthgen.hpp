#pragma once

// Seeded synthetic fluorescence scenes: isotropic Gaussian blobs at known
// centres over a dark background with Gaussian pixel noise.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cellcount/annotations.hpp"
#include "cellcount/imaging.hpp"
#include "cellcount/metrics.hpp"

namespace cellcount {

class KeyValueConfig;

struct CountDistribution {
  enum class Kind { fixed, lognormal };
  Kind kind = Kind::lognormal;
  std::size_t fixed = 0;
  // log-normal on the count, clipped to [min, max] and rounded to an integer
  double mu = 3.0;
  double sigma = 1.0;
  std::size_t min = 0;
  std::size_t max = 150;
};

struct SceneSpec {
  std::size_t width = 64;
  std::size_t height = 64;
  CountDistribution count;
  double radius_min = 0.8;  // blob σ in pixels
  double radius_max = 1.4;
  double intensity_min = 0.5;
  double intensity_max = 0.9;
  bool allow_overlap = true;
  double min_spacing = 3.0;  // centre distance in blob σ units when overlap is disallowed
  std::size_t max_placement_tries = 10000;
  double noise_sigma = 0.02;
  double magnification_40x_fraction = 0.15;
  std::uint64_t seed = 0;

  // Throws ParameterError on degenerate or inverted ranges.
  void validate() const;
  static SceneSpec from_config(const KeyValueConfig& kv);
  static SceneSpec from_config(const KeyValueConfig& kv, const SceneSpec& defaults);
};

struct SyntheticScene {
  GrayImage image;
  AnnotationSet dots;
  SceneSpec spec;  // as used, with the per-scene seed
};

// Throws ParameterError when overlap is disallowed and a centre cannot be
// placed within max_placement_tries.
SyntheticScene generate_scene(const SceneSpec& spec);

// Count drawn from `dist` with the given generator seed.
std::size_t draw_count(const CountDistribution& dist, std::uint64_t seed);

// Seed of scene i derived from the corpus seed (splitmix64).
std::uint64_t scene_seed(std::uint64_t corpus_seed, std::size_t index);

struct BinQuotas {
  std::size_t low = 0, medium = 0, high = 0;
  DensityBounds bounds;
  std::size_t total() const { return low + medium + high; }
};

// n_images scenes, or exactly quotas.total() scenes with the requested number
// of ground-truth counts in each density bin (low first, then medium, high).
std::vector<SyntheticScene> generate_corpus(const SceneSpec& spec, std::size_t n_images,
                                            const std::optional<BinQuotas>& quotas = std::nullopt);

// images/<id>.pgm (16-bit), annotations/<id>.csv, metadata.csv.
DatasetManifest write_corpus(const std::vector<SyntheticScene>& scenes,
                             const std::filesystem::path& root);

}  // namespace cellcount
