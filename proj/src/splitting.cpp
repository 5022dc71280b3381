#include "cellcount/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "cellcount/csv.hpp"
#include "cellcount/errors.hpp"

namespace cellcount {

JenksBreaks jenks_breaks(std::span<const double> values, std::size_t k) {
  if (k < 1) throw ParameterError("jenks_breaks: k must be >= 1");
  if (values.size() < k) {
    throw ParameterError("jenks_breaks: need at least k=" + std::to_string(k) + " values, got " +
                         std::to_string(values.size()));
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> uniq;
  std::vector<double> weight;
  for (double v : sorted) {
    if (uniq.empty() || v != uniq.back()) {
      uniq.push_back(v);
      weight.push_back(1.0);
    } else {
      weight.back() += 1.0;
    }
  }
  const std::size_t m = uniq.size();
  if (k > m) {
    throw ParameterError("jenks_breaks: k=" + std::to_string(k) + " exceeds the " +
                         std::to_string(m) + " distinct values");
  }

  // Prefix sums over distinct values, weighted by multiplicity.
  std::vector<double> w(m + 1, 0.0), s1(m + 1, 0.0), s2(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    w[i + 1] = w[i] + weight[i];
    s1[i + 1] = s1[i] + weight[i] * uniq[i];
    s2[i + 1] = s2[i] + weight[i] * uniq[i] * uniq[i];
  }
  // SS of distinct values [i, j).
  auto ss = [&](std::size_t i, std::size_t j) {
    const double n = w[j] - w[i];
    const double a = s1[j] - s1[i];
    return std::max(0.0, (s2[j] - s2[i]) - a * a / n);
  };

  constexpr double inf = std::numeric_limits<double>::infinity();
  // cost[c][j]: best SS splitting the first j distinct values into c+1 classes.
  std::vector<std::vector<double>> cost(k, std::vector<double>(m + 1, inf));
  std::vector<std::vector<std::size_t>> start(k, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t j = 1; j <= m; ++j) cost[0][j] = ss(0, j);
  for (std::size_t c = 1; c < k; ++c) {
    for (std::size_t j = c + 1; j <= m; ++j) {
      for (std::size_t i = c; i < j; ++i) {
        const double v = cost[c - 1][i] + ss(i, j);
        if (v < cost[c][j]) {
          cost[c][j] = v;
          start[c][j] = i;
        }
      }
    }
  }

  JenksBreaks out;
  out.k = k;
  out.sdcm = cost[k - 1][m];
  std::vector<double> bounds;
  std::size_t j = m;
  for (std::size_t c = k - 1; c > 0; --c) {
    const std::size_t i = start[c][j];
    bounds.push_back(uniq[i - 1]);
    j = i;
  }
  std::reverse(bounds.begin(), bounds.end());
  out.breaks = std::move(bounds);
  const double sdam = ss(0, m);
  out.gvf = sdam > 0.0 ? 1.0 - out.sdcm / sdam : 1.0;
  return out;
}

std::size_t assign_bin(double count, const JenksBreaks& breaks) {
  for (std::size_t i = 0; i < breaks.breaks.size(); ++i) {
    if (count <= breaks.breaks[i]) return i;
  }
  return breaks.breaks.size();
}

std::string to_string(Assignment a) {
  switch (a) {
    case Assignment::train: return "train";
    case Assignment::val: return "val";
    case Assignment::test: return "test";
  }
  return "train";
}

Assignment parse_assignment(std::string_view text) {
  if (text == "train") return Assignment::train;
  if (text == "val") return Assignment::val;
  if (text == "test") return Assignment::test;
  throw ParameterError("unknown assignment '" + std::string(text) + "'");
}

std::vector<std::string> SplitManifest::ids(Assignment a) const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (e.assignment == a) out.push_back(e.image_id);
  }
  return out;
}

std::size_t stratum_train_size(std::size_t n, double ratio) {
  if (n <= 1) return n;
  auto t = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
  return std::clamp<std::size_t>(t, 1, n - 1);
}

namespace {

void check_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ParameterError("split ratio must lie in (0, 1), got " + std::to_string(ratio));
  }
}

// Assigns `target` to the first stratum_train_size members of each shuffled
// stratum and `other` to the rest. `members` holds entry indices per stratum.
void assign_strata(std::vector<SplitEntry>& entries,
                   std::map<std::pair<std::size_t, int>, std::vector<std::size_t>>& strata,
                   double ratio, std::uint64_t seed, Assignment keep, Assignment other) {
  std::mt19937_64 rng(seed);
  for (auto& [key, members] : strata) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return entries[a].image_id < entries[b].image_id;
    });
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n_keep = stratum_train_size(members.size(), ratio);
    for (std::size_t i = 0; i < members.size(); ++i)
      entries[members[i]].assignment = i < n_keep ? keep : other;
  }
}

}  // namespace

SplitManifest stratified_split(std::span<const SplitItem> items, const JenksBreaks& breaks,
                               double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  if (items.empty()) throw ParameterError("stratified_split: manifest is empty");
  SplitManifest out;
  out.seed = seed;
  std::map<std::pair<std::size_t, int>, std::vector<std::size_t>> strata;
  for (const auto& it : items) {
    SplitEntry e{it.image_id, it.count, assign_bin(it.count, breaks), it.magnification,
                 Assignment::test};
    strata[{e.bin, static_cast<int>(e.magnification)}].push_back(out.entries.size());
    out.entries.push_back(std::move(e));
  }
  assign_strata(out.entries, strata, ratio, seed, Assignment::train, Assignment::test);
  return out;
}

void carve_validation(SplitManifest& manifest, double keep_ratio, std::uint64_t seed) {
  check_ratio(keep_ratio);
  std::map<std::pair<std::size_t, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (e.assignment == Assignment::train)
      strata[{e.bin, static_cast<int>(e.magnification)}].push_back(i);
  }
  // Distinct stream from the train/test shuffle.
  assign_strata(manifest.entries, strata, keep_ratio, seed ^ 0x9e3779b97f4a7c15ull,
                Assignment::train, Assignment::val);
}

std::string write_split_csv(const SplitManifest& manifest) {
  csv::Table t;
  t.header = {"image_id", "count", "bin", "magnification", "assignment"};
  for (const auto& e : manifest.entries) {
    t.rows.push_back({e.image_id, csv::format_exact(e.count), std::to_string(e.bin),
                      to_string(e.magnification), to_string(e.assignment)});
  }
  return csv::format(t);
}

SplitManifest parse_split_csv(std::string_view bytes) {
  const auto t = csv::parse(bytes);
  const auto ci = t.column("image_id");
  const auto cc = t.column("count");
  const auto cb = t.column("bin");
  const auto cm = t.column("magnification");
  const auto ca = t.column("assignment");
  SplitManifest out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    SplitEntry e;
    e.image_id = row[ci];
    e.count = csv::parse_double(row[cc], r + 2);
    e.bin = static_cast<std::size_t>(csv::parse_int(row[cb], r + 2));
    try {
      e.magnification = parse_magnification(row[cm]);
      e.assignment = parse_assignment(row[ca]);
    } catch (const ParameterError& err) {
      throw ParseError(std::string("split csv: row ") + std::to_string(r + 2) + ": " + err.what(),
                       r + 2);
    }
    out.entries.push_back(std::move(e));
  }
  return out;
}

}  // namespace cellcount
