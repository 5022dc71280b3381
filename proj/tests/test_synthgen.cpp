#include <doctest.h>

#include "cellcount/config.hpp"
#include "cellcount/errors.hpp"
#include "cellcount/metrics.hpp"
#include "cellcount/synthgen.hpp"
#include "tempdir.hpp"

using namespace cellcount;

namespace {

SceneSpec fixed_spec(std::size_t n) {
  SceneSpec s;
  s.count.kind = CountDistribution::Kind::fixed;
  s.count.fixed = n;
  s.seed = 77;
  return s;
}

}  // namespace

TEST_CASE("zero cells give a pure-noise image and no dots") {
  const auto scene = generate_scene(fixed_spec(0));
  CHECK(scene.dots.count() == 0);
  double total = 0.0;
  for (double p : scene.image.pixels) total += p;
  CHECK(total > 0.0);  // noise, clamped at zero from below
  CHECK(total / static_cast<double>(scene.image.pixels.size()) < 0.05);
}

TEST_CASE("ten separated noiseless cells give ten local maxima at the dots") {
  auto spec = fixed_spec(10);
  spec.noise_sigma = 0.0;
  spec.allow_overlap = false;
  spec.min_spacing = 5.0;
  const auto scene = generate_scene(spec);
  REQUIRE(scene.dots.count() == 10);
  const auto& img = scene.image;
  std::vector<std::pair<long, long>> maxima;
  const auto w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      bool peak = img.at(x, y) > 1e-6;
      for (long dy = -1; dy <= 1 && peak; ++dy)
        for (long dx = -1; dx <= 1 && peak; ++dx) {
          const long nx = x + dx, ny = y + dy;
          if ((dx || dy) && nx >= 0 && ny >= 0 && nx < w && ny < h && img.at(nx, ny) >= img.at(x, y)) peak = false;
        }
      if (peak) maxima.emplace_back(x, y);
    }
  CHECK(maxima.size() == 10);
  for (const auto& d : scene.dots.dots) {
    const auto px = static_cast<long>(d.x), py = static_cast<long>(d.y);
    const bool found = std::find(maxima.begin(), maxima.end(), std::pair{px, py}) != maxima.end();
    CHECK(found);
  }
}

TEST_CASE("same seed gives bit-identical scenes") {
  SceneSpec s;
  s.seed = 5;
  const auto a = generate_scene(s), b = generate_scene(s);
  CHECK(a.image.pixels == b.image.pixels);
  CHECK(a.dots.dots == b.dots.dots);
  s.seed = 6;
  CHECK(generate_scene(s).image.pixels != a.image.pixels);
}

TEST_CASE("corpus scenes equal single scenes with the derived seed") {
  SceneSpec s;
  s.seed = 9;
  const auto corpus = generate_corpus(s, 4);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    SceneSpec si = s;
    si.seed = scene_seed(s.seed, i);
    CHECK(generate_scene(si).image.pixels == corpus[i].image.pixels);
  }
  CHECK(scene_seed(9, 0) != scene_seed(9, 1));
}

TEST_CASE("dots stay inside the image and match the count") {
  SceneSpec s;
  s.seed = 3;
  for (const auto& sc : generate_corpus(s, 20)) {
    CHECK_NOTHROW(sc.dots.check_bounds());
    CHECK(sc.dots.count() >= s.count.min);
    CHECK(sc.dots.count() <= s.count.max);
  }
}

TEST_CASE("bin quotas are met exactly") {
  SceneSpec s;
  s.width = s.height = 128;
  s.count.max = 700;
  s.count.mu = 5.0;
  s.seed = 4;
  BinQuotas q;
  q.low = 20;
  q.medium = 5;
  q.high = 5;
  const auto scenes = generate_corpus(s, 0, q);
  REQUIRE(scenes.size() == 30);
  std::vector<CountPair> pairs;
  for (const auto& sc : scenes) {
    const auto c = static_cast<double>(sc.dots.count());
    pairs.push_back({c, c, ""});
  }
  const auto bins = bin_by_density(pairs);
  CHECK(bins.low.size() == 20);
  CHECK(bins.medium.size() == 5);
  CHECK(bins.high.size() == 5);
}

TEST_CASE("infeasible quotas and impossible placement are parameter errors") {
  SceneSpec s;  // counts capped at 150
  BinQuotas q;
  q.high = 1;
  CHECK_THROWS_AS(generate_corpus(s, 0, q), ParameterError);
  auto crowded = fixed_spec(400);
  crowded.allow_overlap = false;
  crowded.max_placement_tries = 50;
  CHECK_THROWS_AS(generate_scene(crowded), ParameterError);
}

TEST_CASE("spec parsing rejects negative counts and bad ranges") {
  auto kv = KeyValueConfig::parse("scene.count.mode = fixed\nscene.count.n = -3\n");
  CHECK_THROWS_AS(SceneSpec::from_config(kv), ParameterError);
  kv = KeyValueConfig::parse("scene.radius_min = 2\nscene.radius_max = 1\n");
  CHECK_THROWS_AS(SceneSpec::from_config(kv).validate(), ParameterError);
  kv = KeyValueConfig::parse("scene.count.mode = poisson\n");
  CHECK_THROWS_AS(SceneSpec::from_config(kv), ParameterError);
  kv = KeyValueConfig::parse("scene.width = 40\nscene.count.mode = fixed\nscene.count.n = 7\n");
  const auto spec = SceneSpec::from_config(kv);
  CHECK(spec.width == 40);
  CHECK(generate_scene(spec).dots.count() == 7);
}

TEST_CASE("written corpus loads back as a dataset") {
  TempDir dir("corpus");
  SceneSpec s;
  s.seed = 12;
  const auto scenes = generate_corpus(s, 5);
  write_corpus(scenes, dir.path());
  const auto m = load_dataset(dir.path());
  REQUIRE(m.records.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(m.records[i].annotations.dots == scenes[i].dots.dots);
    const auto img = read_image_file(m.records[i].image_path);
    for (std::size_t p = 0; p < img.pixels.size(); ++p)
      CHECK(std::abs(img.pixels[p] - scenes[i].image.pixels[p]) <= 0.5 / 65535.0 + 1e-12);
  }
}
