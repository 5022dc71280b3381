#include "cellcount/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "cellcount/config.hpp"
#include "cellcount/csv.hpp"
#include "cellcount/errors.hpp"

namespace cellcount {

namespace fs = std::filesystem;

void SceneSpec::validate() const {
  auto fail = [](const std::string& m) { throw ParameterError("scene spec: " + m); };
  if (width == 0 || height == 0) fail("image size must be positive");
  if (!(radius_min > 0.0 && radius_min <= radius_max)) fail("radius range must satisfy 0 < min <= max");
  if (!(intensity_min >= 0.0 && intensity_min <= intensity_max && intensity_max <= 1.0)) {
    fail("intensity range must satisfy 0 <= min <= max <= 1");
  }
  if (!(noise_sigma >= 0.0)) fail("noise sigma must be >= 0");
  if (!(magnification_40x_fraction >= 0.0 && magnification_40x_fraction <= 1.0)) {
    fail("magnification fraction must lie in [0, 1]");
  }
  if (!allow_overlap && !(min_spacing > 0.0)) fail("min spacing must be > 0");
  if (count.kind == CountDistribution::Kind::lognormal) {
    if (!(count.sigma > 0.0)) fail("log-normal sigma must be > 0");
    if (count.min > count.max) fail("count range must satisfy min <= max");
  }
}

SceneSpec SceneSpec::from_config(const KeyValueConfig& kv) { return from_config(kv, SceneSpec{}); }

SceneSpec SceneSpec::from_config(const KeyValueConfig& kv, const SceneSpec& defaults) {
  SceneSpec s = defaults;
  auto count_key = [&](const char* key, long long fallback) {
    const auto v = kv.get_int(key, fallback);
    if (v < 0) throw ParameterError(std::string("scene spec: ") + key + " must be >= 0, got " + std::to_string(v));
    return static_cast<std::size_t>(v);
  };
  s.width = kv.get_size("scene.width", s.width);
  s.height = kv.get_size("scene.height", s.height);
  const auto mode = kv.get_string("scene.count.mode",
                                  s.count.kind == CountDistribution::Kind::fixed ? "fixed" : "lognormal");
  if (mode == "fixed") {
    s.count.kind = CountDistribution::Kind::fixed;
  } else if (mode == "lognormal") {
    s.count.kind = CountDistribution::Kind::lognormal;
  } else {
    throw ParameterError("scene spec: scene.count.mode must be fixed or lognormal, got " + mode);
  }
  s.count.fixed = count_key("scene.count.n", static_cast<long long>(s.count.fixed));
  s.count.mu = kv.get_double("scene.count.mu", s.count.mu);
  s.count.sigma = kv.get_double("scene.count.sigma", s.count.sigma);
  s.count.min = count_key("scene.count.min", static_cast<long long>(s.count.min));
  s.count.max = count_key("scene.count.max", static_cast<long long>(s.count.max));
  s.radius_min = kv.get_double("scene.radius_min", s.radius_min);
  s.radius_max = kv.get_double("scene.radius_max", s.radius_max);
  s.intensity_min = kv.get_double("scene.intensity_min", s.intensity_min);
  s.intensity_max = kv.get_double("scene.intensity_max", s.intensity_max);
  s.allow_overlap = kv.get_bool("scene.allow_overlap", s.allow_overlap);
  s.min_spacing = kv.get_double("scene.min_spacing", s.min_spacing);
  s.noise_sigma = kv.get_double("scene.noise_sigma", s.noise_sigma);
  s.magnification_40x_fraction = kv.get_double("scene.magnification_40x_fraction", s.magnification_40x_fraction);
  s.seed = static_cast<std::uint64_t>(kv.get_int("scene.seed", static_cast<long long>(s.seed)));
  s.validate();
  return s;
}

std::uint64_t scene_seed(std::uint64_t corpus_seed, std::size_t index) {
  std::uint64_t z = corpus_seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace {

std::size_t draw_count_with(const CountDistribution& dist, std::mt19937_64& rng) {
  if (dist.kind == CountDistribution::Kind::fixed) return dist.fixed;
  std::lognormal_distribution<double> ln(dist.mu, dist.sigma);
  const double v = std::round(ln(rng));
  return static_cast<std::size_t>(
      std::clamp(v, static_cast<double>(dist.min), static_cast<double>(dist.max)));
}

SyntheticScene render(const SceneSpec& spec, std::size_t n, std::mt19937_64& rng) {
  SyntheticScene scene;
  scene.spec = spec;
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(spec.width));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(spec.height));
  std::uniform_real_distribution<double> ur(spec.radius_min, spec.radius_max);
  std::uniform_real_distribution<double> ui(spec.intensity_min, spec.intensity_max);

  struct Blob {
    double x, y, r, a;
  };
  std::vector<Blob> blobs;
  blobs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ur(rng);
    const double a = ui(rng);
    std::size_t tries = 0;
    while (true) {
      const double x = ux(rng), y = uy(rng);
      const bool ok =
          spec.allow_overlap || std::all_of(blobs.begin(), blobs.end(), [&](const Blob& b) {
            const double d = std::hypot(b.x - x, b.y - y);
            return d >= spec.min_spacing * std::max(b.r, r);
          });
      if (ok) {
        blobs.push_back({x, y, r, a});
        break;
      }
      if (++tries >= spec.max_placement_tries) {
        throw ParameterError("generate_scene: could not place cell " + std::to_string(i + 1) +
                             " of " + std::to_string(n) + " without overlap after " +
                             std::to_string(tries) + " tries");
      }
    }
  }

  scene.image = GrayImage::filled(spec.width, spec.height, 0.0);
  for (const auto& b : blobs) {
    const double reach = 4.0 * b.r;
    const auto x0 = static_cast<long>(std::max(0.0, std::floor(b.x - reach)));
    const auto x1 = static_cast<long>(std::min<double>(spec.width - 1, std::ceil(b.x + reach)));
    const auto y0 = static_cast<long>(std::max(0.0, std::floor(b.y - reach)));
    const auto y1 = static_cast<long>(std::min<double>(spec.height - 1, std::ceil(b.y + reach)));
    for (long y = y0; y <= y1; ++y) {
      for (long x = x0; x <= x1; ++x) {
        // Pixel (x, y) samples the continuous scene at (x + 0.5, y + 0.5).
        const double dx = static_cast<double>(x) + 0.5 - b.x;
        const double dy = static_cast<double>(y) + 0.5 - b.y;
        scene.image.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) +=
            b.a * std::exp(-(dx * dx + dy * dy) / (2.0 * b.r * b.r));
      }
    }
  }
  if (spec.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto& p : scene.image.pixels) p += noise(rng);
  }
  for (auto& p : scene.image.pixels) p = std::clamp(p, 0.0, 1.0);

  scene.dots.image_size = {spec.width, spec.height};
  scene.dots.marker = Marker(Marker::DAPI);
  std::bernoulli_distribution mag(spec.magnification_40x_fraction);
  scene.dots.magnification = mag(rng) ? Magnification::x40 : Magnification::x20;
  for (const auto& b : blobs) scene.dots.dots.push_back({b.x, b.y});
  return scene;
}

}  // namespace

std::size_t draw_count(const CountDistribution& dist, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return draw_count_with(dist, rng);
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const std::size_t n = draw_count_with(spec.count, rng);
  return render(spec, n, rng);
}

std::vector<SyntheticScene> generate_corpus(const SceneSpec& spec, std::size_t n_images,
                                            const std::optional<BinQuotas>& quotas) {
  spec.validate();
  std::vector<std::size_t> counts;
  std::vector<std::uint64_t> seeds;
  if (!quotas) {
    for (std::size_t i = 0; i < n_images; ++i) {
      seeds.push_back(scene_seed(spec.seed, i));
      std::mt19937_64 rng(seeds.back());
      counts.push_back(draw_count_with(spec.count, rng));
    }
  } else {
    const auto& q = *quotas;
    if (!(q.bounds.low_max < q.bounds.medium_max)) {
      throw ParameterError("generate_corpus: density bounds must be ascending");
    }
    const std::size_t lo = spec.count.kind == CountDistribution::Kind::fixed ? spec.count.fixed : spec.count.min;
    const std::size_t hi = spec.count.kind == CountDistribution::Kind::fixed ? spec.count.fixed : spec.count.max;
    // Integer count ranges of the three bins.
    const auto low_top = static_cast<std::size_t>(std::floor(q.bounds.low_max));
    const auto med_top = static_cast<std::size_t>(std::floor(q.bounds.medium_max));
    const std::pair<std::size_t, std::size_t> ranges[3] = {
        {0, low_top}, {low_top + 1, med_top}, {med_top + 1, std::numeric_limits<std::size_t>::max()}};
    const std::size_t wanted[3] = {q.low, q.medium, q.high};
    const char* names[3] = {"low", "medium", "high"};
    std::size_t index = 0;
    for (int b = 0; b < 3; ++b) {
      if (wanted[b] == 0) continue;
      const std::size_t a = std::max(lo, ranges[b].first);
      const std::size_t z = std::min(hi, ranges[b].second);
      if (a > z) {
        throw ParameterError(std::string("generate_corpus: quota for the ") + names[b] +
                             " bin is infeasible with counts limited to [" + std::to_string(lo) +
                             ", " + std::to_string(hi) + "]");
      }
      for (std::size_t k = 0; k < wanted[b]; ++k, ++index) {
        seeds.push_back(scene_seed(spec.seed, index));
        std::mt19937_64 rng(seeds.back());
        // Draw from the distribution restricted to the bin; fall back to uniform.
        std::size_t c = 0;
        bool found = false;
        for (int t = 0; t < 256 && !found; ++t) {
          c = draw_count_with(spec.count, rng);
          found = c >= a && c <= z;
        }
        if (!found) c = std::uniform_int_distribution<std::size_t>(a, z)(rng);
        counts.push_back(c);
      }
    }
  }

  std::vector<SyntheticScene> scenes(counts.size());
  std::exception_ptr error;
  const auto n = static_cast<std::ptrdiff_t>(counts.size());
#pragma omp parallel for schedule(dynamic, 2)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      SceneSpec s = spec;
      s.seed = seeds[i];
      if (!quotas) {
        scenes[i] = generate_scene(s);
      } else {
        std::mt19937_64 rng(s.seed ^ 0x5851f42d4c957f2dull);
        scenes[i] = render(s, counts[i], rng);
      }
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return scenes;
}

DatasetManifest write_corpus(const std::vector<SyntheticScene>& scenes, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "annotations");
  DatasetManifest manifest;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    DatasetRecord rec;
    rec.id = sequential_id(i + 1, scenes.size());
    rec.original_name = "synthetic_" + std::to_string(scenes[i].spec.seed) + ".pgm";
    rec.image_path = root / "images" / (rec.id + ".pgm");
    rec.annotations = scenes[i].dots;
    rec.annotations.image_id = rec.id;
    csv::write_file(rec.image_path.string(), encode_pgm(scenes[i].image, 65535));
    csv::write_file((root / "annotations" / (rec.id + ".csv")).string(), write_csv(rec.annotations));
    manifest.records.push_back(std::move(rec));
  }
  csv::write_file((root / "metadata.csv").string(), write_metadata_csv(manifest));
  return manifest;
}

}  // namespace cellcount
