#pragma once

// Dot annotations, CellCounter XML ingestion, dataset cleaning and the
// on-disk dataset layout:
//
//   <root>/images/<id>.<ext>
//   <root>/annotations/<id>.csv      (or .xml from CellCounter, before ingest)
//   <root>/metadata.csv              id,original_name,marker,magnification,width,height,count

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cellcount {

struct DotAnnotation {
  double x = 0.0;  // pixel column
  double y = 0.0;  // pixel row
  friend bool operator==(const DotAnnotation&, const DotAnnotation&) = default;
};

// Staining markers. Co-labelled images carry several bits.
class Marker {
 public:
  enum Base : unsigned {
    DAPI = 1u << 0,
    GFAP = 1u << 1,
    Ki67 = 1u << 2,
    MAP2ab = 1u << 3,
    PI = 1u << 4,
    RIP = 1u << 5,
    TuJ1 = 1u << 6,
  };

  constexpr Marker() = default;
  constexpr explicit Marker(unsigned bits) : bits_(bits) {}

  // Accepts "DAPI", "Ki67+TuJ1", "GFAP + Ki67" (case-insensitive names).
  static Marker parse(std::string_view text);
  // Canonical form: components in alphabetical order joined by '+'.
  std::string str() const;
  unsigned bits() const { return bits_; }
  friend bool operator==(Marker, Marker) = default;

 private:
  unsigned bits_ = DAPI;
};

enum class Magnification { x20, x40 };

Magnification parse_magnification(std::string_view text);
std::string to_string(Magnification m);

struct ImageSize {
  std::size_t width = 0;
  std::size_t height = 0;
  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

struct AnnotationSet {
  std::string image_id;
  std::vector<DotAnnotation> dots;
  Marker marker;
  Magnification magnification = Magnification::x20;
  ImageSize image_size;

  std::size_t count() const { return dots.size(); }
  // Throws RecordError naming the first dot outside [0,w)×[0,h).
  void check_bounds() const;
};

// CellCounter_Marker_File → Image_Properties/Image_Filename,
// Marker_Data → Marker_Type* → Marker* → MarkerX/MarkerY (MarkerZ ignored).
// All marker types are merged into one dot list.
AnnotationSet parse_cellcounter_xml(std::string_view bytes);

// Header `X,Y`, one row per dot, shortest round-trip number formatting.
std::string write_csv(const AnnotationSet& set);
AnnotationSet parse_csv(std::string_view bytes);

// ---- dataset cleaning -------------------------------------------------------

struct FilePair {
  std::string stem;
  std::optional<std::filesystem::path> image;
  std::vector<std::filesystem::path> annotations;  // normally exactly one
};

// Pairs images/<stem>.* with annotations/<stem>.{xml,csv}. Output sorted by stem.
std::vector<FilePair> pair_directory(const std::filesystem::path& root);

enum class RejectReason { orphan_annotation, orphan_image, duplicate, multiple_annotations, invalid };

std::string to_string(RejectReason r);

struct Rejection {
  std::string name;
  RejectReason reason;
  std::string detail;
};

struct RejectReport {
  std::vector<Rejection> entries;
  bool empty() const { return entries.empty(); }
};

struct MetadataRow {
  std::string id;
  std::string original_name;
  Marker marker;
  Magnification magnification = Magnification::x20;
  ImageSize size;
  std::size_t count = 0;
};

struct DatasetRecord {
  std::string id;  // sequential numeric identifier
  std::string original_name;
  std::filesystem::path image_path;
  AnnotationSet annotations;
};

struct DatasetManifest {
  std::vector<DatasetRecord> records;
  std::vector<std::string> notes;
};

// Optional per-stem metadata (original name, marker, magnification) consulted
// while cleaning; stems without an entry default to DAPI at 20x.
using MetadataLookup = std::map<std::string, MetadataRow, std::less<>>;

// Drops orphans, unreadable files and exact content duplicates (image bytes plus
// sorted dot list), then renumbers the survivors 0001, 0002, ... in stem order.
std::pair<DatasetManifest, RejectReport> clean_dataset(const std::vector<FilePair>& pairs,
                                                       const MetadataLookup& metadata = {});

std::string sequential_id(std::size_t index, std::size_t total);

std::string write_metadata_csv(const DatasetManifest& manifest);
std::vector<MetadataRow> parse_metadata_csv(std::string_view bytes);
MetadataLookup metadata_by_id(const std::vector<MetadataRow>& rows);
std::string write_reject_csv(const RejectReport& report);

// Reads metadata.csv plus annotations/<id>.csv for every row; images are located
// but not decoded.
DatasetManifest load_dataset(const std::filesystem::path& root);

// ---- statistics --------------------------------------------------------------

struct StatsRow {
  std::string group;  // "all", "marker=DAPI", "magnification=20x"
  std::size_t images = 0;
  std::size_t cells = 0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  double median = 0.0;
  std::size_t min = 0;
  std::size_t max = 0;
};

struct StatsTable {
  std::vector<StatsRow> rows;
  const StatsRow* find(std::string_view group) const;
};

StatsRow summarize_counts(std::string group, const std::vector<std::size_t>& counts);
StatsTable dataset_stats(const DatasetManifest& manifest);
std::string format_stats_markdown(const StatsTable& table);
std::string format_stats_csv(const StatsTable& table);

}  // namespace cellcount
