#include <doctest.h>

#include <random>

#include "cellcount/errors.hpp"
#include "cellcount/metrics.hpp"
#include "oracles.hpp"

using namespace cellcount;

TEST_CASE("perfect predictions") {
  const std::vector<CountPair> p{{3, 3, "a"}, {50, 50, "b"}};
  const auto r = compute_metrics(p);
  CHECK(r.mae == 0.0);
  CHECK(r.mape == 0.0);
  CHECK(r.acp == 100.0);
}

TEST_CASE("hand-computed fixture") {
  const std::vector<CountPair> p{{100, 110, "a"}, {200, 190, "b"}};
  const auto r = compute_metrics(p);
  CHECK(r.mae == doctest::Approx(10.0));
  CHECK(r.mse == doctest::Approx(100.0));
  CHECK(r.rmse == doctest::Approx(10.0));
  CHECK(r.mape == doctest::Approx(7.5));
  CHECK(r.acp == doctest::Approx(50.0));
  CHECK(r.n == 2);
}

TEST_CASE("zero ground truth is left out of MAPE and counted") {
  const std::vector<CountPair> p{{0, 2, "a"}, {10, 11, "b"}};
  const auto r = compute_metrics(p);
  CHECK(r.mape == doctest::Approx(10.0));
  CHECK(r.mape_excluded == 1);
  CHECK(r.mae == doctest::Approx(1.5));
}

TEST_CASE("empty input is a parameter error") {
  CHECK_THROWS_AS(compute_metrics(std::vector<CountPair>{}), ParameterError);
}

TEST_CASE("library metrics agree with the reference on random pairs") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> y(0, 800), noise(-60, 60);
  std::vector<CountPair> pairs;
  for (int i = 0; i < 1000; ++i) {
    const double t = i % 50 == 0 ? 0.0 : std::round(y(rng));
    pairs.push_back({t, t + noise(rng), std::to_string(i)});
  }
  const auto a = compute_metrics(pairs);
  const auto b = oracle::reference_metrics(pairs);
  CHECK(oracle::rel_error(a.mae, b.mae, 1.0) < 1e-9);
  CHECK(oracle::rel_error(a.mse, b.mse, 1.0) < 1e-9);
  CHECK(oracle::rel_error(a.rmse, b.rmse, 1.0) < 1e-9);
  CHECK(oracle::rel_error(a.mape, b.mape, 1.0) < 1e-9);
  CHECK(a.acp == b.acp);
  CHECK(a.mape_excluded == b.mape_excluded);
}

TEST_CASE("density bins at the boundaries") {
  CHECK(density_bin(250) == DensityBin::low);
  CHECK(density_bin(251) == DensityBin::medium);
  CHECK(density_bin(500) == DensityBin::medium);
  CHECK(density_bin(501) == DensityBin::high);
  CHECK(density_bin(0) == DensityBin::low);
}

TEST_CASE("binning is exhaustive and disjoint") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> y(1, 1000);
  std::vector<CountPair> pairs;
  std::size_t low = 0, med = 0, high = 0;
  for (int i = 0; i < 2000; ++i) {
    const double t = y(rng);
    pairs.push_back({t, t, std::to_string(i)});
    if (t <= 250) ++low;
    else if (t <= 500) ++med;
    else ++high;
  }
  const auto b = bin_by_density(pairs);
  CHECK(b.low.size() == low);
  CHECK(b.medium.size() == med);
  CHECK(b.high.size() == high);
  CHECK(b.low.size() + b.medium.size() + b.high.size() == pairs.size());
}

TEST_CASE("macro report has one row per populated bin") {
  const std::vector<CountPair> p{{10, 12, "a"}, {20, 20, "b"}};
  const auto rows = macro_report(p);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].bin == DensityBin::low);
  CHECK(rows[0].report.mae == doctest::Approx(1.0));
  const std::vector<CountPair> q{{10, 12, "a"}, {600, 600, "b"}};
  CHECK(macro_report(q).size() == 2);
}

TEST_CASE("report formatting") {
  const std::vector<CountPair> p{{100, 110, "a"}, {200, 190, "b"}};
  NamedReport r{"m", compute_metrics(p), macro_report(p)};
  const std::vector<NamedReport> rs{r};
  const auto csv = format_metrics_csv(rs);
  CHECK(csv.find("10.000000") != std::string::npos);
  CHECK(csv.find("7.500000") != std::string::npos);
  const auto md = format_metrics_markdown(rs);
  CHECK(md.find("| m |") != std::string::npos);
  CHECK(format_macro_markdown(rs).find("–") != std::string::npos);
  const auto pred = format_predictions_csv(p);
  CHECK(pred.find("a,100,110") != std::string::npos);
}
