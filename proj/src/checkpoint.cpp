#include <bit>
#include <cstring>
#include <sstream>

#include "cellcount/config.hpp"
#include "cellcount/csv.hpp"
#include "cellcount/errors.hpp"
#include "cellcount/model.hpp"

namespace cellcount {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'C', 'E', 'L', 'L', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(std::string_view s) { out_.append(s); }
  void text(std::string_view s) {
    put<std::uint64_t>(s.size());
    bytes(s);
  }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string text() { return std::string(bytes(get<std::uint64_t>())); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw IoError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

std::string encode(const ParamModule& m, const ModelConfig& config, std::uint32_t kind) {
  KeyValueConfig kv;
  config.write_to(kv);
  Writer w;
  w.bytes(std::string_view(kMagic, sizeof kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(kind);
  w.text(kv.str());
  w.put<std::uint64_t>(m.parameters().size());
  std::ostringstream manifest;
  for (const auto& p : m.parameters()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.put<std::uint64_t>(d);
    for (double v : p.value.data()) w.put<double>(v);
    manifest << p.name << ' ' << shape_str(p.value.shape()) << '\n';
  }
  w.text(manifest.str());
  return w.str();
}

struct Decoded {
  std::uint32_t kind = 0;
  ModelConfig config;
  std::vector<std::pair<std::string, std::pair<Shape, std::vector<double>>>> tensors;
  std::string manifest;
};

Decoded decode(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw IoError("checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  Decoded d;
  d.kind = r.get<std::uint32_t>();
  d.config = ModelConfig::from_config(KeyValueConfig::parse(r.text()), ModelConfig{});
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(r.bytes(r.get<std::uint32_t>()));
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& s : shape) s = r.get<std::uint64_t>();
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = r.get<double>();
    d.tensors.push_back({std::move(name), {std::move(shape), std::move(values)}});
  }
  d.manifest = r.text();
  return d;
}

void restore(ParamModule& m, const Decoded& d) {
  auto& params = m.parameters();
  if (params.size() != d.tensors.size()) {
    throw IoError("checkpoint: holds " + std::to_string(d.tensors.size()) +
                  " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, payload] = d.tensors[i];
    if (name != params[i].name || payload.first != params[i].value.shape()) {
      throw IoError("checkpoint: tensor " + name + " " + shape_str(payload.first) +
                    " does not match " + params[i].name + " " +
                    shape_str(params[i].value.shape()));
    }
    auto dst = params[i].value.mutable_data();
    std::copy(payload.second.begin(), payload.second.end(), dst.begin());
  }
}

}  // namespace

void save_checkpoint(const DensityModel& model, const std::filesystem::path& path) {
  csv::write_file(path.string(), encode(model, model.config(), 0));
}

void save_checkpoint(const RegressionModel& model, const std::filesystem::path& path) {
  csv::write_file(path.string(), encode(model, model.config(), 1));
}

DensityModel load_density_checkpoint(const std::filesystem::path& path) {
  const auto d = decode(csv::read_file(path.string()));
  if (d.kind != 0) throw IoError("checkpoint: " + path.string() + " is not a density model");
  DensityModel m(d.config, 0);
  restore(m, d);
  return m;
}

RegressionModel load_regression_checkpoint(const std::filesystem::path& path) {
  const auto d = decode(csv::read_file(path.string()));
  if (d.kind != 1) throw IoError("checkpoint: " + path.string() + " is not a regression model");
  RegressionModel m(d.config, 0);
  restore(m, d);
  return m;
}

std::string read_checkpoint_manifest(const std::filesystem::path& path) {
  return decode(csv::read_file(path.string())).manifest;
}

}  // namespace cellcount

namespace cellcount {
CheckpointKind read_checkpoint_kind(const std::filesystem::path& path) {
  const auto d = decode(csv::read_file(path.string()));
  if (d.kind > 1) throw IoError("checkpoint: unknown model kind " + std::to_string(d.kind));
  return static_cast<CheckpointKind>(d.kind);
}
}  // namespace cellcount
