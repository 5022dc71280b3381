#include "cellcount/annotations.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cellcount/csv.hpp"
#include "cellcount/errors.hpp"
#include "cellcount/imaging.hpp"
#include "cellcount/xml.hpp"

namespace cellcount {

namespace fs = std::filesystem;

// ---- vocabularies ---------------------------------------------------------------

namespace {

constexpr std::array<std::pair<Marker::Base, std::string_view>, 7> kMarkerNames{{
    {Marker::DAPI, "DAPI"},
    {Marker::GFAP, "GFAP"},
    {Marker::Ki67, "Ki67"},
    {Marker::MAP2ab, "MAP2ab"},
    {Marker::PI, "PI"},
    {Marker::RIP, "RIP"},
    {Marker::TuJ1, "TuJ1"},
}};

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Marker Marker::parse(std::string_view text) {
  unsigned bits = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('+', start);
    if (end == std::string_view::npos) end = text.size();
    const auto part = lower(trim(text.substr(start, end - start)));
    const auto it = std::find_if(kMarkerNames.begin(), kMarkerNames.end(),
                                 [&](const auto& kv) { return lower(kv.second) == part; });
    if (it == kMarkerNames.end()) {
      throw ParameterError("unknown marker '" + std::string(text) + "'");
    }
    bits |= it->first;
    start = end + 1;
  }
  return Marker(bits);
}

std::string Marker::str() const {
  std::string out;
  for (const auto& [bit, name] : kMarkerNames) {
    if (bits_ & bit) {
      if (!out.empty()) out += '+';
      out += name;
    }
  }
  return out;
}

Magnification parse_magnification(std::string_view text) {
  const auto t = lower(trim(text));
  if (t == "20x" || t == "20") return Magnification::x20;
  if (t == "40x" || t == "40") return Magnification::x40;
  throw ParameterError("unknown magnification '" + std::string(text) + "'");
}

std::string to_string(Magnification m) { return m == Magnification::x20 ? "20x" : "40x"; }

void AnnotationSet::check_bounds() const {
  for (std::size_t i = 0; i < dots.size(); ++i) {
    const auto& d = dots[i];
    if (!(d.x >= 0.0 && d.y >= 0.0 && d.x < static_cast<double>(image_size.width) &&
          d.y < static_cast<double>(image_size.height))) {
      throw RecordError("dot " + std::to_string(i) + " at (" + csv::format_exact(d.x) + ", " +
                            csv::format_exact(d.y) + ") is outside the " +
                            std::to_string(image_size.width) + "x" +
                            std::to_string(image_size.height) + " image",
                        i);
    }
  }
}

// ---- CellCounter XML ----------------------------------------------------------------

AnnotationSet parse_cellcounter_xml(std::string_view bytes) {
  const auto root = xml::parse(bytes);
  if (root.name != "CellCounter_Marker_File") {
    throw RecordError("cellcounter: root element is <" + root.name +
                          ">, expected <CellCounter_Marker_File>",
                      0);
  }
  AnnotationSet set;
  if (const auto* props = root.child("Image_Properties")) {
    if (const auto* fname = props->child("Image_Filename")) set.image_id = std::string(trim(fname->text));
  }
  const auto* data = root.child("Marker_Data");
  if (data == nullptr) return set;
  std::size_t index = 0;
  for (const auto* type : data->children_named("Marker_Type")) {
    for (const auto* marker : type->children_named("Marker")) {
      const auto* mx = marker->child("MarkerX");
      const auto* my = marker->child("MarkerY");
      if (mx == nullptr || my == nullptr) {
        throw RecordError("cellcounter: marker " + std::to_string(index) + " (byte " +
                              std::to_string(marker->offset) + ") lacks " +
                              (mx == nullptr ? "MarkerX" : "MarkerY"),
                          index);
      }
      try {
        set.dots.push_back({csv::parse_double(trim(mx->text), index),
                            csv::parse_double(trim(my->text), index)});
      } catch (const ParseError&) {
        throw RecordError("cellcounter: marker " + std::to_string(index) +
                              " has a non-numeric coordinate",
                          index);
      }
      ++index;
    }
  }
  return set;
}

// ---- CSV ------------------------------------------------------------------------------

std::string write_csv(const AnnotationSet& set) {
  std::string out = "X,Y\n";
  for (const auto& d : set.dots) out += csv::format_exact(d.x) + "," + csv::format_exact(d.y) + "\n";
  return out;
}

AnnotationSet parse_csv(std::string_view bytes) {
  const auto table = csv::parse(bytes);
  const auto xi = table.column("X");
  const auto yi = table.column("Y");
  AnnotationSet set;
  set.dots.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    // Row numbers count the header as row 1.
    set.dots.push_back({csv::parse_double(table.rows[r][xi], r + 2),
                        csv::parse_double(table.rows[r][yi], r + 2)});
  }
  return set;
}

// ---- cleaning ---------------------------------------------------------------------------

std::vector<FilePair> pair_directory(const fs::path& root) {
  std::map<std::string, FilePair> by_stem;
  auto scan = [&](const fs::path& dir, bool images) {
    if (!fs::is_directory(dir)) return;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const auto stem = entry.path().stem().string();
      const auto ext = lower(entry.path().extension().string());
      auto& pair = by_stem[stem];
      pair.stem = stem;
      if (images) {
        if (ext == ".pgm" || ext == ".png") {
          if (pair.image) {
            // Two images with one stem: keep the lexicographically first.
            if (entry.path() < *pair.image) pair.image = entry.path();
          } else {
            pair.image = entry.path();
          }
        }
      } else if (ext == ".xml" || ext == ".csv") {
        pair.annotations.push_back(entry.path());
      }
    }
  };
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  scan(root / "images", true);
  scan(root / "annotations", false);
  std::vector<FilePair> out;
  for (auto& [stem, pair] : by_stem) {
    if (!pair.image && pair.annotations.empty()) continue;
    std::sort(pair.annotations.begin(), pair.annotations.end());
    out.push_back(std::move(pair));
  }
  return out;
}

std::string to_string(RejectReason r) {
  switch (r) {
    case RejectReason::orphan_annotation: return "orphan_annotation";
    case RejectReason::orphan_image: return "orphan_image";
    case RejectReason::duplicate: return "duplicate";
    case RejectReason::multiple_annotations: return "multiple_annotations";
    case RejectReason::invalid: return "invalid";
  }
  return "invalid";
}

std::string sequential_id(std::size_t index, std::size_t total) {
  const std::size_t width = std::max<std::size_t>(4, std::to_string(total).size());
  auto s = std::to_string(index);
  return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Image bytes followed by the sorted dot list; the duplicate-identity key.
std::string content_key(const std::string& image_bytes, std::vector<DotAnnotation> dots) {
  std::sort(dots.begin(), dots.end(),
            [](const auto& a, const auto& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  std::string key = image_bytes;
  key += '\0';
  for (const auto& d : dots) key += csv::format_exact(d.x) + "," + csv::format_exact(d.y) + ";";
  return key;
}

AnnotationSet read_annotation_file(const fs::path& path) {
  const auto bytes = csv::read_file(path.string());
  return lower(path.extension().string()) == ".xml" ? parse_cellcounter_xml(bytes)
                                                      : parse_csv(bytes);
}

}  // namespace

std::pair<DatasetManifest, RejectReport> clean_dataset(const std::vector<FilePair>& pairs,
                                                       const MetadataLookup& metadata) {
  std::vector<FilePair> sorted = pairs;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.stem < b.stem; });

  RejectReport report;
  std::vector<DatasetRecord> kept;
  std::unordered_map<std::uint64_t, std::vector<std::pair<std::string, std::size_t>>> seen;

  for (const auto& pair : sorted) {
    if (!pair.image) {
      for (const auto& a : pair.annotations)
        report.entries.push_back({a.filename().string(), RejectReason::orphan_annotation,
                                  "no image with stem '" + pair.stem + "'"});
      continue;
    }
    const auto image_name = pair.image->filename().string();
    if (pair.annotations.empty()) {
      report.entries.push_back({image_name, RejectReason::orphan_image,
                                "no annotation with stem '" + pair.stem + "'"});
      continue;
    }
    if (pair.annotations.size() > 1) {
      report.entries.push_back({image_name, RejectReason::multiple_annotations,
                                std::to_string(pair.annotations.size()) +
                                    " annotation files share stem '" + pair.stem + "'"});
      continue;
    }
    DatasetRecord rec;
    std::string image_bytes;
    try {
      image_bytes = csv::read_file(pair.image->string());
      const auto img = read_image(image_bytes);
      rec.annotations = read_annotation_file(pair.annotations.front());
      rec.annotations.image_size = img.size();
      rec.annotations.check_bounds();
    } catch (const std::exception& e) {
      report.entries.push_back({image_name, RejectReason::invalid, e.what()});
      continue;
    }
    const auto key = content_key(image_bytes, rec.annotations.dots);
    const auto h = fnv1a(key);
    auto& bucket = seen[h];
    const auto dup = std::find_if(bucket.begin(), bucket.end(),
                                  [&](const auto& e) { return e.first == key; });
    if (dup != bucket.end()) {
      report.entries.push_back({image_name, RejectReason::duplicate,
                                "same content as '" + kept[dup->second].original_name + "'"});
      continue;
    }
    bucket.emplace_back(key, kept.size());

    rec.image_path = *pair.image;
    rec.original_name = image_name;
    if (const auto it = metadata.find(pair.stem); it != metadata.end()) {
      rec.original_name = it->second.original_name;
      rec.annotations.marker = it->second.marker;
      rec.annotations.magnification = it->second.magnification;
    }
    kept.push_back(std::move(rec));
  }

  DatasetManifest manifest;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    kept[i].id = sequential_id(i + 1, kept.size());
    kept[i].annotations.image_id = kept[i].id;
  }
  manifest.records = std::move(kept);
  return {std::move(manifest), std::move(report)};
}

std::string write_metadata_csv(const DatasetManifest& manifest) {
  csv::Table t;
  t.header = {"id", "original_name", "marker", "magnification", "width", "height", "count"};
  for (const auto& r : manifest.records) {
    const auto& a = r.annotations;
    t.rows.push_back({r.id, r.original_name, a.marker.str(), to_string(a.magnification),
                      std::to_string(a.image_size.width), std::to_string(a.image_size.height),
                      std::to_string(a.count())});
  }
  return csv::format(t);
}

std::vector<MetadataRow> parse_metadata_csv(std::string_view bytes) {
  const auto t = csv::parse(bytes);
  const auto ci = t.column("id");
  const auto cn = t.column("original_name");
  const auto cm = t.column("marker");
  const auto cg = t.column("magnification");
  const auto cw = t.column("width");
  const auto ch = t.column("height");
  const auto cc = t.column("count");
  std::vector<MetadataRow> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    MetadataRow m;
    m.id = row[ci];
    m.original_name = row[cn];
    try {
      m.marker = Marker::parse(row[cm]);
      m.magnification = parse_magnification(row[cg]);
    } catch (const ParameterError& e) {
      throw ParseError(std::string("metadata: row ") + std::to_string(r + 2) + ": " + e.what(), r + 2);
    }
    m.size = {static_cast<std::size_t>(csv::parse_int(row[cw], r + 2)),
              static_cast<std::size_t>(csv::parse_int(row[ch], r + 2))};
    m.count = static_cast<std::size_t>(csv::parse_int(row[cc], r + 2));
    out.push_back(std::move(m));
  }
  return out;
}

MetadataLookup metadata_by_id(const std::vector<MetadataRow>& rows) {
  MetadataLookup out;
  for (const auto& r : rows) out.emplace(r.id, r);
  return out;
}

std::string write_reject_csv(const RejectReport& report) {
  csv::Table t;
  t.header = {"name", "reason", "detail"};
  for (const auto& e : report.entries) {
    std::string detail = e.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    std::replace(detail.begin(), detail.end(), '\n', ' ');
    t.rows.push_back({e.name, to_string(e.reason), detail});
  }
  return csv::format(t);
}

DatasetManifest load_dataset(const fs::path& root) {
  const auto meta_path = root / "metadata.csv";
  if (!fs::exists(meta_path)) throw IoError("missing " + meta_path.string());
  const auto rows = parse_metadata_csv(csv::read_file(meta_path.string()));
  DatasetManifest manifest;
  std::set<std::string> ids;
  for (const auto& row : rows) {
    if (!ids.insert(row.id).second) throw ParseError("metadata: duplicate id " + row.id, 0);
    DatasetRecord rec;
    rec.id = row.id;
    rec.original_name = row.original_name;
    const auto ann_path = root / "annotations" / (row.id + ".csv");
    if (!fs::exists(ann_path)) throw IoError("missing " + ann_path.string());
    rec.annotations = parse_csv(csv::read_file(ann_path.string()));
    rec.annotations.image_id = row.id;
    rec.annotations.marker = row.marker;
    rec.annotations.magnification = row.magnification;
    rec.annotations.image_size = row.size;
    if (rec.annotations.count() != row.count) {
      throw RecordError("metadata: id " + row.id + " lists " + std::to_string(row.count) +
                            " cells but its annotation file has " +
                            std::to_string(rec.annotations.count()),
                        0);
    }
    for (const auto* ext : {".pgm", ".png", ".PGM", ".PNG"}) {
      const auto p = root / "images" / (row.id + ext);
      if (fs::exists(p)) {
        rec.image_path = p;
        break;
      }
    }
    if (rec.image_path.empty()) throw IoError("missing image for id " + row.id + " under " + (root / "images").string());
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

// ---- statistics ----------------------------------------------------------------------------

const StatsRow* StatsTable::find(std::string_view group) const {
  for (const auto& r : rows) {
    if (r.group == group) return &r;
  }
  return nullptr;
}

StatsRow summarize_counts(std::string group, const std::vector<std::size_t>& counts) {
  StatsRow row;
  row.group = std::move(group);
  row.images = counts.size();
  if (counts.empty()) return row;
  std::vector<std::size_t> sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (auto c : sorted) total += static_cast<double>(c);
  row.cells = static_cast<std::size_t>(total);
  row.mean = total / static_cast<double>(sorted.size());
  double ss = 0.0;
  for (auto c : sorted) ss += (static_cast<double>(c) - row.mean) * (static_cast<double>(c) - row.mean);
  row.std = std::sqrt(ss / static_cast<double>(sorted.size()));
  const std::size_t n = sorted.size();
  row.median = n % 2 ? static_cast<double>(sorted[n / 2])
                     : 0.5 * static_cast<double>(sorted[n / 2 - 1] + sorted[n / 2]);
  row.min = sorted.front();
  row.max = sorted.back();
  return row;
}

StatsTable dataset_stats(const DatasetManifest& manifest) {
  if (manifest.records.empty()) throw ParameterError("dataset_stats: manifest is empty");
  std::map<std::string, std::vector<std::size_t>> by_marker, by_mag;
  std::vector<std::size_t> all;
  for (const auto& r : manifest.records) {
    const auto c = r.annotations.count();
    all.push_back(c);
    by_marker["marker=" + r.annotations.marker.str()].push_back(c);
    by_mag["magnification=" + to_string(r.annotations.magnification)].push_back(c);
  }
  StatsTable t;
  t.rows.push_back(summarize_counts("all", all));
  for (const auto& [k, v] : by_marker) t.rows.push_back(summarize_counts(k, v));
  for (const auto& [k, v] : by_mag) t.rows.push_back(summarize_counts(k, v));
  return t;
}

std::string format_stats_markdown(const StatsTable& table) {
  std::ostringstream os;
  os << "| Group | #Images | #Cells | Mean CPI ± std | Median CPI | Min / Max CPI |\n";
  os << "|---|---:|---:|---:|---:|---:|\n";
  for (const auto& r : table.rows) {
    os << "| " << r.group << " | " << r.images << " | " << r.cells << " | "
       << csv::format_fixed(r.mean, 1) << " ± " << csv::format_fixed(r.std, 1) << " | "
       << csv::format_fixed(r.median, 1) << " | " << r.min << " / " << r.max << " |\n";
  }
  return os.str();
}

std::string format_stats_csv(const StatsTable& table) {
  csv::Table t;
  t.header = {"group", "images", "cells", "mean", "std", "median", "min", "max"};
  for (const auto& r : table.rows) {
    t.rows.push_back({r.group, std::to_string(r.images), std::to_string(r.cells),
                      csv::format_fixed(r.mean, 6), csv::format_fixed(r.std, 6),
                      csv::format_fixed(r.median, 6), std::to_string(r.min), std::to_string(r.max)});
  }
  return csv::format(t);
}

}  // namespace cellcount
