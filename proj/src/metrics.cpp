#include "cellcount/metrics.hpp"

#include <cmath>
#include <sstream>

#include "cellcount/csv.hpp"
#include "cellcount/errors.hpp"

namespace cellcount {

MetricsReport compute_metrics(std::span<const CountPair> pairs) {
  if (pairs.empty()) throw ParameterError("compute_metrics: no pairs");
  MetricsReport r;
  r.n = pairs.size();
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  std::size_t acceptable = 0, pct_n = 0;
  for (const auto& p : pairs) {
    const double err = std::abs(p.y - p.y_hat);
    abs_sum += err;
    sq_sum += err * err;
    if (p.y > 0.0) {
      pct_sum += err / p.y;
      ++pct_n;
    }
    if (err <= kAcpTolerance * p.y) ++acceptable;
  }
  const auto n = static_cast<double>(r.n);
  r.mae = abs_sum / n;
  r.mse = sq_sum / n;
  r.rmse = std::sqrt(r.mse);
  r.mape = pct_n ? 100.0 * pct_sum / static_cast<double>(pct_n) : 0.0;
  r.mape_excluded = r.n - pct_n;
  r.acp = 100.0 * static_cast<double>(acceptable) / n;
  return r;
}

std::string to_string(DensityBin b) {
  switch (b) {
    case DensityBin::low: return "low";
    case DensityBin::medium: return "medium";
    case DensityBin::high: return "high";
  }
  return "low";
}

DensityBin density_bin(double y, const DensityBounds& bounds) {
  if (y <= bounds.low_max) return DensityBin::low;
  if (y <= bounds.medium_max) return DensityBin::medium;
  return DensityBin::high;
}

const std::vector<CountPair>& BinnedPairs::operator[](DensityBin b) const {
  return b == DensityBin::low ? low : b == DensityBin::medium ? medium : high;
}

BinnedPairs bin_by_density(std::span<const CountPair> pairs, const DensityBounds& bounds) {
  if (!(bounds.low_max < bounds.medium_max)) {
    throw ParameterError("bin_by_density: bounds must be ascending");
  }
  BinnedPairs out;
  for (const auto& p : pairs) {
    switch (density_bin(p.y, bounds)) {
      case DensityBin::low: out.low.push_back(p); break;
      case DensityBin::medium: out.medium.push_back(p); break;
      case DensityBin::high: out.high.push_back(p); break;
    }
  }
  return out;
}

std::vector<MacroRow> macro_report(std::span<const CountPair> pairs, const DensityBounds& bounds) {
  const auto binned = bin_by_density(pairs, bounds);
  std::vector<MacroRow> rows;
  for (auto b : {DensityBin::low, DensityBin::medium, DensityBin::high}) {
    if (!binned[b].empty()) rows.push_back({b, compute_metrics(binned[b])});
  }
  return rows;
}

namespace {

const MacroRow* find_bin(const std::vector<MacroRow>& rows, DensityBin b) {
  for (const auto& r : rows) {
    if (r.bin == b) return &r;
  }
  return nullptr;
}

}  // namespace

std::string format_metrics_markdown(std::span<const NamedReport> reports) {
  std::ostringstream os;
  os << "| Model | MAE ↓ | MSE ↓ | RMSE ↓ | MAPE ↓ | ACP ↑ |\n";
  os << "|---|---:|---:|---:|---:|---:|\n";
  for (const auto& r : reports) {
    const auto& m = r.overall;
    os << "| " << r.model << " | " << csv::format_fixed(m.mae, 2) << " | "
       << csv::format_fixed(m.mse, 2) << " | " << csv::format_fixed(m.rmse, 2) << " | "
       << csv::format_fixed(m.mape, 2) << "% | " << csv::format_fixed(m.acp, 2) << "% |\n";
  }
  return os.str();
}

std::string format_metrics_csv(std::span<const NamedReport> reports) {
  csv::Table t;
  t.header = {"model", "n", "mae", "mse", "rmse", "mape", "acp", "mape_excluded"};
  for (const auto& r : reports) {
    const auto& m = r.overall;
    t.rows.push_back({r.model, std::to_string(m.n), csv::format_fixed(m.mae, 6),
                      csv::format_fixed(m.mse, 6), csv::format_fixed(m.rmse, 6),
                      csv::format_fixed(m.mape, 6), csv::format_fixed(m.acp, 6),
                      std::to_string(m.mape_excluded)});
  }
  return csv::format(t);
}

std::string format_macro_markdown(std::span<const NamedReport> reports) {
  std::ostringstream os;
  os << "| Model | Low MAE ↓ | Low ACP ↑ | Medium MAE ↓ | Medium ACP ↑ | High MAE ↓ | High ACP ↑ |\n";
  os << "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : reports) {
    os << "| " << r.model;
    for (auto b : {DensityBin::low, DensityBin::medium, DensityBin::high}) {
      if (const auto* row = find_bin(r.macro, b)) {
        os << " | " << csv::format_fixed(row->report.mae, 2) << " | "
           << csv::format_fixed(row->report.acp, 2) << "%";
      } else {
        os << " | – | –";
      }
    }
    os << " |\n";
  }
  return os.str();
}

std::string format_macro_csv(std::span<const NamedReport> reports) {
  csv::Table t;
  t.header = {"model", "bin", "n", "mae", "mse", "rmse", "mape", "acp"};
  for (const auto& r : reports) {
    for (const auto& row : r.macro) {
      const auto& m = row.report;
      t.rows.push_back({r.model, to_string(row.bin), std::to_string(m.n),
                        csv::format_fixed(m.mae, 6), csv::format_fixed(m.mse, 6),
                        csv::format_fixed(m.rmse, 6), csv::format_fixed(m.mape, 6),
                        csv::format_fixed(m.acp, 6)});
    }
  }
  return csv::format(t);
}

std::string format_predictions_csv(std::span<const CountPair> pairs) {
  csv::Table t;
  t.header = {"image_id", "y", "y_hat"};
  for (const auto& p : pairs) {
    t.rows.push_back({p.image_id, csv::format_exact(p.y), csv::format_exact(p.y_hat)});
  }
  return csv::format(t);
}

}  // namespace cellcount
