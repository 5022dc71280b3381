#pragma once

// Jenks natural-breaks binning and stratified train/test splitting.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cellcount/annotations.hpp"

namespace cellcount {

struct JenksBreaks {
  std::size_t k = 1;
  // Upper bound of classes 0..k-2; class k-1 is unbounded above.
  std::vector<double> breaks;
  double gvf = 1.0;   // 1 - within-class SS / total SS
  double sdcm = 0.0;  // within-class sum of squared deviations
};

// Exact Fisher optimal partition of the sorted values into k contiguous
// classes (dynamic programming over distinct values, O(k·m²)).
JenksBreaks jenks_breaks(std::span<const double> values, std::size_t k);

// Class whose interval contains `count`. A value equal to a break belongs to
// the lower class.
std::size_t assign_bin(double count, const JenksBreaks& breaks);

enum class Assignment { train, val, test };
std::string to_string(Assignment a);
Assignment parse_assignment(std::string_view text);

struct SplitItem {
  std::string image_id;
  double count = 0.0;
  Magnification magnification = Magnification::x20;
};

struct SplitEntry {
  std::string image_id;
  double count = 0.0;
  std::size_t bin = 0;
  Magnification magnification = Magnification::x20;
  Assignment assignment = Assignment::train;
};

struct SplitManifest {
  std::vector<SplitEntry> entries;  // input order
  std::uint64_t seed = 0;

  std::vector<std::string> ids(Assignment a) const;
};

// Train images for a stratum of n: round(ratio·n) half up, then clamped so a
// stratum of n ≥ 2 keeps at least one image on each side. Singletons go to train.
std::size_t stratum_train_size(std::size_t n, double ratio);

// Strata are (count bin, magnification). Within each stratum a seeded shuffle
// picks stratum_train_size(n, ratio) images for train; the rest are test.
SplitManifest stratified_split(std::span<const SplitItem> items, const JenksBreaks& breaks,
                               double ratio, std::uint64_t seed);

// Re-splits the train side with the same stratified rule; images that fall out
// of the kept fraction become validation images.
void carve_validation(SplitManifest& manifest, double keep_ratio, std::uint64_t seed);

// CSV: image_id,count,bin,magnification,assignment
std::string write_split_csv(const SplitManifest& manifest);
SplitManifest parse_split_csv(std::string_view bytes);

}  // namespace cellcount
