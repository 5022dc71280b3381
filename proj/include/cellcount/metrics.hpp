#pragma once

// Count-error metrics: MAE, MSE, RMSE, MAPE, ACP, plus per-density-bin
// ("macro") reports.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cellcount {

struct CountPair {
  double y = 0.0;      // ground truth
  double y_hat = 0.0;  // prediction, unrounded
  std::string image_id;
};

struct MetricsReport {
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent, over pairs with y > 0
  double acp = 0.0;   // percent of pairs with |ŷ − y| ≤ 5% of y
  std::size_t n = 0;
  std::size_t mape_excluded = 0;  // pairs with y == 0
};

inline constexpr double kAcpTolerance = 0.05;

// Throws ParameterError on empty input.
MetricsReport compute_metrics(std::span<const CountPair> pairs);

enum class DensityBin { low, medium, high };
std::string to_string(DensityBin b);

struct DensityBounds {
  double low_max = 250.0;     // y ≤ low_max → low
  double medium_max = 500.0;  // low_max < y ≤ medium_max → medium; above → high
};

DensityBin density_bin(double y, const DensityBounds& bounds = {});

struct BinnedPairs {
  std::vector<CountPair> low, medium, high;
  const std::vector<CountPair>& operator[](DensityBin b) const;
};

BinnedPairs bin_by_density(std::span<const CountPair> pairs, const DensityBounds& bounds = {});

struct MacroRow {
  DensityBin bin;
  MetricsReport report;
};

// One row per populated bin, in low/medium/high order; empty bins are absent.
std::vector<MacroRow> macro_report(std::span<const CountPair> pairs,
                                   const DensityBounds& bounds = {});

// ---- report formatting ---------------------------------------------------------

struct NamedReport {
  std::string model;
  MetricsReport overall;
  std::vector<MacroRow> macro;
};

// Model | MAE | MSE | RMSE | MAPE | ACP
std::string format_metrics_markdown(std::span<const NamedReport> reports);
std::string format_metrics_csv(std::span<const NamedReport> reports);
// Model | low MAE, ACP | medium MAE, ACP | high MAE, ACP ("–" for absent bins)
std::string format_macro_markdown(std::span<const NamedReport> reports);
std::string format_macro_csv(std::span<const NamedReport> reports);
std::string format_predictions_csv(std::span<const CountPair> pairs);

}  // namespace cellcount
