#include "cellcount/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "cellcount/annotations.hpp"
#include "cellcount/config.hpp"
#include "cellcount/csv.hpp"
#include "cellcount/errors.hpp"
#include "cellcount/imaging.hpp"
#include "cellcount/kernels.hpp"
#include "cellcount/metrics.hpp"
#include "cellcount/model.hpp"
#include "cellcount/splitting.hpp"
#include "cellcount/synthgen.hpp"
#include "cellcount/training.hpp"

namespace cellcount::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out;
  long long seed = -1;  // < 0: keep the config's value
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value configuration file");
  cmd->add_option("--out", c.out, "output path");
  cmd->add_option("--seed", c.seed, "random seed (overrides config)");
}

KeyValueConfig load_config(const Common& c) {
  if (c.config.empty()) return {};
  if (!fs::exists(c.config)) throw IoError("config file not found: " + c.config);
  return KeyValueConfig::load(c.config);
}

void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw IoError("missing " + p.string() + " (" + hint + ")");
}

void require_out(const Common& c) {
  if (c.out.empty()) throw ParameterError("--out is required");
}

GaussianKernel kernel_from(const KeyValueConfig& kv) {
  return gaussian_kernel(static_cast<int>(kv.get_int("density.kernel_size", 5)),
                         kv.get_double("density.sigma", 1.0));
}

std::vector<std::string> parse_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto& f : csv::split_line(text)) {
    if (!f.empty()) out.push_back(f);
  }
  return out;
}

struct Splits {
  std::vector<DatasetRecord> train, val, test;
};

Splits select_records(const fs::path& data, const fs::path& split_path) {
  require_file(data / "metadata.csv", "run `cellcount synth` or `cellcount ingest` first");
  require_file(split_path, "run `cellcount split` first");
  const auto manifest = load_dataset(data);
  const auto split = parse_split_csv(csv::read_file(split_path.string()));
  std::map<std::string, const DatasetRecord*> by_id;
  for (const auto& r : manifest.records) by_id[r.id] = &r;
  Splits out;
  for (const auto& e : split.entries) {
    const auto it = by_id.find(e.image_id);
    if (it == by_id.end()) {
      throw RecordError("split lists image " + e.image_id + " which is not in " + data.string(), 0);
    }
    auto& dst = e.assignment == Assignment::train ? out.train
                : e.assignment == Assignment::val ? out.val
                                                  : out.test;
    dst.push_back(*it->second);
  }
  return out;
}

// ---- synth ---------------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string spec;
  long long n = -1;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  require_out(a.common);
  KeyValueConfig kv;
  if (!a.spec.empty()) {
    if (!fs::exists(a.spec)) throw IoError("spec file not found: " + a.spec);
    kv = KeyValueConfig::load(a.spec);
  }
  kv.merge(load_config(a.common));
  if (a.common.seed >= 0) kv.set("scene.seed", std::to_string(a.common.seed));
  SceneSpec spec = SceneSpec::from_config(kv);
  std::optional<BinQuotas> quotas;
  if (kv.has("corpus.quota.low") || kv.has("corpus.quota.medium") || kv.has("corpus.quota.high")) {
    BinQuotas q;
    q.low = kv.get_size("corpus.quota.low", 0);
    q.medium = kv.get_size("corpus.quota.medium", 0);
    q.high = kv.get_size("corpus.quota.high", 0);
    q.bounds.low_max = kv.get_double("bins.low_max", q.bounds.low_max);
    q.bounds.medium_max = kv.get_double("bins.medium_max", q.bounds.medium_max);
    quotas = q;
  }
  const long long n_cfg = kv.get_int("corpus.n_images", 100);
  const long long n = a.n >= 0 ? a.n : n_cfg;
  if (n < 0) throw ParameterError("corpus.n_images must be >= 0");
  const auto scenes = generate_corpus(spec, static_cast<std::size_t>(n), quotas);
  const auto manifest = write_corpus(scenes, a.common.out);
  out << "wrote " << manifest.records.size() << " synthetic images to " << a.common.out << "\n";
  if (!manifest.records.empty()) out << format_stats_markdown(dataset_stats(manifest));
  return kOk;
}

// ---- ingest --------------------------------------------------------------------

struct IngestArgs {
  Common common;
  std::string src;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  require_out(a.common);
  const fs::path src = a.src;
  if (!fs::is_directory(src)) throw IoError("cannot read source directory " + src.string());
  MetadataLookup meta;
  if (fs::exists(src / "metadata.csv")) {
    meta = metadata_by_id(parse_metadata_csv(csv::read_file((src / "metadata.csv").string())));
  }
  auto [manifest, report] = clean_dataset(pair_directory(src), meta);

  // Read everything before writing so that in-place re-ingest is safe.
  std::vector<std::string> image_bytes;
  for (const auto& r : manifest.records) image_bytes.push_back(csv::read_file(r.image_path.string()));

  const fs::path dst = a.common.out;
  fs::create_directories(dst / "images");
  fs::create_directories(dst / "annotations");
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    auto& r = manifest.records[i];
    const auto target = dst / "images" / (r.id + r.image_path.extension().string());
    csv::write_file(target.string(), image_bytes[i]);
    r.image_path = target;
    csv::write_file((dst / "annotations" / (r.id + ".csv")).string(), write_csv(r.annotations));
  }
  csv::write_file((dst / "metadata.csv").string(), write_metadata_csv(manifest));
  csv::write_file((dst / "rejects.csv").string(), write_reject_csv(report));
  out << "ingested " << manifest.records.size() << " image/annotation pairs, rejected "
      << report.entries.size() << "\n";
  for (const auto& e : report.entries)
    out << "  reject " << e.name << ": " << to_string(e.reason) << " (" << e.detail << ")\n";
  if (!manifest.records.empty()) out << format_stats_markdown(dataset_stats(manifest));
  return kOk;
}

// ---- stats ---------------------------------------------------------------------

struct StatsArgs {
  Common common;
  std::string data;
};

int cmd_stats(const StatsArgs& a, std::ostream& out) {
  require_file(fs::path(a.data) / "metadata.csv", "not a dataset directory");
  const auto table = dataset_stats(load_dataset(a.data));
  out << format_stats_markdown(table);
  if (!a.common.out.empty()) csv::write_file(a.common.out, format_stats_csv(table));
  return kOk;
}

// ---- split ---------------------------------------------------------------------

struct SplitArgs {
  Common common;
  std::string data;
  double ratio = 0.8;
  std::size_t bins = 5;
  double val_ratio = 0.875;
};

int cmd_split(const SplitArgs& a, std::ostream& out) {
  require_out(a.common);
  require_file(fs::path(a.data) / "metadata.csv", "run `cellcount synth` or `cellcount ingest` first");
  const auto kv = load_config(a.common);
  const auto seed = static_cast<std::uint64_t>(
      a.common.seed >= 0 ? a.common.seed : kv.get_int("split.seed", 0));
  const auto manifest = load_dataset(a.data);
  std::vector<SplitItem> items;
  std::vector<double> counts;
  for (const auto& r : manifest.records) {
    items.push_back({r.id, static_cast<double>(r.annotations.count()), r.annotations.magnification});
    counts.push_back(static_cast<double>(r.annotations.count()));
  }
  const auto breaks = jenks_breaks(counts, a.bins);
  auto split = stratified_split(items, breaks, a.ratio, seed);
  if (a.val_ratio > 0.0) carve_validation(split, a.val_ratio, seed);
  csv::write_file(a.common.out, write_split_csv(split));

  out << "Jenks breaks (k=" << breaks.k << ", GVF " << csv::format_fixed(breaks.gvf, 4) << "):";
  for (double b : breaks.breaks) out << ' ' << b;
  out << "\n\n| Bin | Magnification | Train | Val | Test |\n|---:|---|---:|---:|---:|\n";
  std::map<std::pair<std::size_t, std::string>, std::array<std::size_t, 3>> strata;
  for (const auto& e : split.entries)
    ++strata[{e.bin, to_string(e.magnification)}][static_cast<std::size_t>(e.assignment)];
  for (const auto& [key, c] : strata)
    out << "| " << key.first << " | " << key.second << " | " << c[0] << " | " << c[1] << " | "
        << c[2] << " |\n";

  // Per-bin count histogram of each side, for comparing the distributions.
  out << "\n| Bin | Upper bound | Train+Val images | Test images |\n|---:|---:|---:|---:|\n";
  for (std::size_t b = 0; b < breaks.k; ++b) {
    std::size_t tr = 0, te = 0;
    for (const auto& e : split.entries) {
      if (e.bin != b) continue;
      (e.assignment == Assignment::test ? te : tr) += 1;
    }
    out << "| " << b << " | " << (b < breaks.breaks.size() ? csv::format_exact(breaks.breaks[b]) : "inf")
        << " | " << tr << " | " << te << " |\n";
  }
  return kOk;
}

// ---- train ---------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data;
  std::string split;
  double lr = 0.0;
  std::size_t batch = 0;
  std::size_t epochs = 0;
  std::string objective;
  std::string kind;
  bool frozen = false;
  std::string grid_lr;
  std::string grid_batch;
};

struct ResolvedTraining {
  KeyValueConfig kv;
  ModelConfig model;
  TrainConfig train;
  std::uint64_t model_seed = 0;
};

ResolvedTraining resolve_training(const Common& common, double lr, std::size_t batch,
                                  std::size_t epochs, const std::string& objective, bool frozen) {
  ResolvedTraining r;
  r.kv = load_config(common);
  if (common.seed >= 0) {
    r.kv.set("train.seed", std::to_string(common.seed));
    r.kv.set("model.seed", std::to_string(common.seed));
  }
  if (lr > 0.0) r.kv.set("train.learning_rate", csv::format_exact(lr));
  if (batch > 0) r.kv.set("train.batch_size", std::to_string(batch));
  if (epochs > 0) r.kv.set("train.max_epochs", std::to_string(epochs));
  if (!objective.empty()) r.kv.set("train.objective", objective);
  if (frozen) r.kv.set("model.encoder_trainable", "false");
  r.model = ModelConfig::from_config(r.kv);
  r.train = TrainConfig::from_config(r.kv);
  r.model_seed = static_cast<std::uint64_t>(r.kv.get_int("model.seed", 0));
  return r;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  require_out(a.common);
  auto cfg = resolve_training(a.common, a.lr, a.batch, a.epochs, a.objective, a.frozen);
  const auto kind = a.kind.empty() ? cfg.kv.get_string("model.kind", "density") : a.kind;
  if (kind != "density" && kind != "regression") {
    throw ParameterError("model.kind must be density or regression, got " + kind);
  }
  if (kind == "regression") cfg.train.objective = Objective::count_mse;
  const auto recs = select_records(a.data, a.split);
  if (recs.train.empty()) throw RecordError("split has no train images", 0);
  if (recs.val.empty()) {
    throw RecordError("split has no validation images; rerun `cellcount split` with --val-ratio", 0);
  }
  const auto kernel = kernel_from(cfg.kv);
  const auto train_set = prepare_samples(recs.train, cfg.model, kernel);
  const auto val_set = prepare_samples(recs.val, cfg.model, kernel);

  const fs::path dir = a.common.out;
  fs::create_directories(dir);

  if (!a.grid_lr.empty() || !a.grid_batch.empty()) {
    std::vector<double> lrs;
    std::vector<std::size_t> batches;
    for (const auto& s : parse_list(a.grid_lr)) lrs.push_back(csv::parse_double(s, 0));
    for (const auto& s : parse_list(a.grid_batch))
      batches.push_back(static_cast<std::size_t>(csv::parse_int(s, 0)));
    if (lrs.empty()) lrs.push_back(cfg.train.learning_rate);
    if (batches.empty()) batches.push_back(cfg.train.batch_size);
    const auto results = grid_search(cfg.model, cfg.model_seed, lrs, batches, train_set, val_set, cfg.train);
    csv::Table t;
    t.header = {"learning_rate", "batch_size", "val_mae"};
    for (const auto& r : results)
      t.rows.push_back({csv::format_exact(r.learning_rate), std::to_string(r.batch_size),
                        csv::format_fixed(r.val_mae, 6)});
    csv::write_file((dir / "grid_search.csv").string(), csv::format(t));
    cfg.train.learning_rate = results.front().learning_rate;
    cfg.train.batch_size = results.front().batch_size;
    out << "grid search picked learning_rate " << cfg.train.learning_rate << ", batch_size "
        << cfg.train.batch_size << "\n";
  }

  auto on_epoch = [&out](const EpochRecord& e) {
    out << "epoch " << e.epoch << " step " << e.step << " loss " << e.train_loss << " val_mae "
        << e.val_mae << (e.improved ? " *" : "") << "\n";
  };
  TrainState state;
  if (kind == "density") {
    auto result = train(DensityModel(cfg.model, cfg.model_seed), train_set, val_set, cfg.train, on_epoch);
    save_checkpoint(result.model, dir / "best.ckpt");
    state = std::move(result.state);
  } else {
    auto result = train(RegressionModel(cfg.model, cfg.model_seed), train_set, val_set, cfg.train, on_epoch);
    save_checkpoint(result.model, dir / "best.ckpt");
    state = std::move(result.state);
  }
  csv::write_file((dir / "history.csv").string(), format_history_csv(state));
  KeyValueConfig used = cfg.kv;
  cfg.model.write_to(used);
  cfg.train.write_to(used);
  used.set("model.kind", kind);
  csv::write_file((dir / "config_used.cfg").string(), used.str());
  out << "best validation MAE " << state.best_val_mae << " at epoch " << state.best_epoch
      << "; checkpoint " << (dir / "best.ckpt").string() << "\n";
  return kOk;
}

// ---- eval ----------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string data;
  std::string split;
  std::string checkpoint;
  std::string assignment = "test";
  std::string name;
  bool oracle = false;
  std::size_t heatmaps = 4;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  require_out(a.common);
  const auto kv = load_config(a.common);
  const auto recs = select_records(a.data, a.split);
  const auto which = parse_assignment(a.assignment);
  const auto& chosen = which == Assignment::train ? recs.train : which == Assignment::val ? recs.val : recs.test;
  if (chosen.empty()) throw RecordError("split has no " + a.assignment + " images", 0);
  const auto kernel = kernel_from(kv);
  const fs::path dir = a.common.out;
  fs::create_directories(dir);

  DensityBounds bounds;
  bounds.low_max = kv.get_double("bins.low_max", bounds.low_max);
  bounds.medium_max = kv.get_double("bins.medium_max", bounds.medium_max);

  NamedReport report;
  std::vector<Sample> samples;
  std::optional<DensityModel> density;
  std::optional<RegressionModel> regression;
  if (a.oracle) {
    samples = prepare_samples(chosen, ModelConfig::from_config(kv), kernel);
    report = evaluate(a.name.empty() ? "oracle" : a.name, oracle_predictor(), samples, bounds);
  } else {
    if (a.checkpoint.empty()) throw ParameterError("--checkpoint is required unless --oracle is given");
    require_file(a.checkpoint, "run `cellcount train` first");
    if (read_checkpoint_kind(a.checkpoint) == CheckpointKind::density) {
      density = load_density_checkpoint(a.checkpoint);
      samples = prepare_samples(chosen, density->config(), kernel);
      report = evaluate(a.name.empty() ? "density model" : a.name, *density, samples, bounds);
    } else {
      regression = load_regression_checkpoint(a.checkpoint);
      samples = prepare_samples(chosen, regression->config(), kernel);
      const auto* m = &*regression;
      report = evaluate(a.name.empty() ? "regression baseline" : a.name,
                        [m](const Sample& s) { return m->predict_count(s.image); }, samples, bounds);
    }
  }
  const std::vector<NamedReport> reports{report};
  csv::write_file((dir / "metrics.csv").string(), format_metrics_csv(reports));
  csv::write_file((dir / "metrics.md").string(), format_metrics_markdown(reports));
  csv::write_file((dir / "macro.csv").string(), format_macro_csv(reports));
  csv::write_file((dir / "macro.md").string(), format_macro_markdown(reports));
  std::vector<CountPair> pairs;
  if (a.oracle) {
    pairs = predict_pairs(oracle_predictor(), samples);
  } else if (density) {
    pairs = predict_pairs(*density, samples);
  } else {
    const auto* m = &*regression;
    pairs = predict_pairs([m](const Sample& s) { return m->predict_count(s.image); }, samples);
  }
  csv::write_file((dir / "predictions.csv").string(), format_predictions_csv(pairs));

  // Ground truth next to prediction for the first few images.
  if (a.heatmaps > 0) {
    fs::create_directories(dir / "heatmaps");
    for (std::size_t i = 0; i < std::min(a.heatmaps, samples.size()); ++i) {
      write_heatmap(samples[i].target, dir / "heatmaps" / (samples[i].id + "_gt.pgm"));
      if (density) {
        write_heatmap(density->predict(samples[i].image), dir / "heatmaps" / (samples[i].id + "_pred.pgm"));
      }
    }
  }
  out << format_metrics_markdown(reports) << "\n" << format_macro_markdown(reports);
  if (report.overall.mape_excluded)
    out << "(" << report.overall.mape_excluded << " zero-count images excluded from MAPE)\n";
  return kOk;
}

// ---- ablate --------------------------------------------------------------------

struct AblateArgs {
  Common common;
  std::string data;
  std::string split;
  std::string encoder = "frozen,trainable";
  std::string depths = "1,2,3";
  double lr = 0.0;
  std::size_t batch = 0;
  std::size_t epochs = 0;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  require_out(a.common);
  auto cfg = resolve_training(a.common, a.lr, a.batch, a.epochs, "", false);
  AblationGrid grid;
  grid.encoder_trainable.clear();
  grid.head_depths.clear();
  for (const auto& e : parse_list(a.encoder)) {
    if (e == "frozen") grid.encoder_trainable.push_back(false);
    else if (e == "trainable") grid.encoder_trainable.push_back(true);
    else throw ParameterError("--encoder entries must be frozen or trainable, got " + e);
  }
  for (const auto& d : parse_list(a.depths)) {
    const auto v = csv::parse_int(d, 0);
    if (v < 1) throw ParameterError("--depths entries must be >= 1");
    grid.head_depths.push_back(static_cast<std::size_t>(v));
  }
  const auto recs = select_records(a.data, a.split);
  if (recs.train.empty() || recs.val.empty() || recs.test.empty()) {
    throw RecordError("ablation needs non-empty train, val and test splits", 0);
  }
  const auto kernel = kernel_from(cfg.kv);
  const auto train_set = prepare_samples(recs.train, cfg.model, kernel);
  const auto val_set = prepare_samples(recs.val, cfg.model, kernel);
  const auto test_set = prepare_samples(recs.test, cfg.model, kernel);
  const auto rows = run_ablation(grid, cfg.model, cfg.model_seed, train_set, val_set, test_set, cfg.train);
  const fs::path dir = a.common.out;
  fs::create_directories(dir);
  csv::write_file((dir / "ablation.csv").string(), format_ablation_csv(rows));
  csv::write_file((dir / "ablation.md").string(), format_ablation_markdown(rows));
  out << format_ablation_markdown(rows);
  for (const auto& r : rows) {
    if (!r.error.empty()) return kRuntimeError;
  }
  return kOk;
}

// ---- report --------------------------------------------------------------------

struct ReportArgs {
  Common common;
  std::vector<std::string> runs;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  if (a.runs.empty()) throw ParameterError("report needs at least one --run directory");
  std::vector<NamedReport> reports;
  for (const auto& run : a.runs) {
    const fs::path dir = run;
    require_file(dir / "metrics.csv", "run `cellcount eval` first");
    const auto t = csv::parse(csv::read_file((dir / "metrics.csv").string()));
    std::map<std::string, std::vector<MacroRow>> macro;
    if (fs::exists(dir / "macro.csv")) {
      const auto m = csv::parse(csv::read_file((dir / "macro.csv").string()));
      for (std::size_t r = 0; r < m.rows.size(); ++r) {
        const auto& row = m.rows[r];
        MacroRow mr;
        const auto bin = row[m.column("bin")];
        mr.bin = bin == "low" ? DensityBin::low : bin == "medium" ? DensityBin::medium : DensityBin::high;
        mr.report.n = static_cast<std::size_t>(csv::parse_int(row[m.column("n")], r + 2));
        mr.report.mae = csv::parse_double(row[m.column("mae")], r + 2);
        mr.report.mse = csv::parse_double(row[m.column("mse")], r + 2);
        mr.report.rmse = csv::parse_double(row[m.column("rmse")], r + 2);
        mr.report.mape = csv::parse_double(row[m.column("mape")], r + 2);
        mr.report.acp = csv::parse_double(row[m.column("acp")], r + 2);
        macro[row[m.column("model")]].push_back(mr);
      }
    }
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const auto& row = t.rows[r];
      NamedReport nr;
      nr.model = row[t.column("model")];
      nr.overall.n = static_cast<std::size_t>(csv::parse_int(row[t.column("n")], r + 2));
      nr.overall.mae = csv::parse_double(row[t.column("mae")], r + 2);
      nr.overall.mse = csv::parse_double(row[t.column("mse")], r + 2);
      nr.overall.rmse = csv::parse_double(row[t.column("rmse")], r + 2);
      nr.overall.mape = csv::parse_double(row[t.column("mape")], r + 2);
      nr.overall.acp = csv::parse_double(row[t.column("acp")], r + 2);
      nr.macro = macro[nr.model];
      reports.push_back(std::move(nr));
    }
  }
  const auto text = "## Overall\n\n" + format_metrics_markdown(reports) + "\n## By density\n\n" +
                    format_macro_markdown(reports);
  if (!a.common.out.empty()) csv::write_file(a.common.out, text);
  out << text;
  return kOk;
}

int classify(const std::exception& e) {
  if (dynamic_cast<const ParameterError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return kConfigError;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const RecordError*>(&e) ||
      dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) {
    return kDataError;
  }
  return kRuntimeError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"cellcount: density-map cell counting toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(c_synth, synth.common);
  c_synth->add_option("--spec", synth.spec, "scene spec file (scene.*, corpus.* keys)");
  c_synth->add_option("--n", synth.n, "number of images (overrides corpus.n_images)");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "clean CellCounter annotations into the dataset layout");
  add_common(c_ingest, ingest.common);
  c_ingest->add_option("--src", ingest.src, "directory with images/ and annotations/")->required();

  StatsArgs stats;
  auto* c_stats = app.add_subcommand("stats", "per-marker and per-magnification count statistics");
  add_common(c_stats, stats.common);
  c_stats->add_option("--data", stats.data, "dataset directory")->required();

  SplitArgs split;
  auto* c_split = app.add_subcommand("split", "Jenks-stratified train/val/test split");
  add_common(c_split, split.common);
  c_split->add_option("--data", split.data, "dataset directory")->required();
  c_split->add_option("--ratio", split.ratio, "train fraction");
  c_split->add_option("--bins", split.bins, "number of Jenks count bins");
  c_split->add_option("--val-ratio", split.val_ratio, "fraction of train kept for training (0: no val)");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a density or regression model");
  add_common(c_train, tr.common);
  c_train->add_option("--data", tr.data, "dataset directory")->required();
  c_train->add_option("--split", tr.split, "split CSV")->required();
  c_train->add_option("--lr", tr.lr, "learning rate");
  c_train->add_option("--batch", tr.batch, "batch size");
  c_train->add_option("--epochs", tr.epochs, "maximum epochs");
  c_train->add_option("--objective", tr.objective, "density_mse or count_mse");
  c_train->add_option("--kind", tr.kind, "density or regression");
  c_train->add_flag("--frozen", tr.frozen, "freeze the encoder");
  c_train->add_option("--grid-lr", tr.grid_lr, "comma-separated learning rates to search");
  c_train->add_option("--grid-batch", tr.grid_batch, "comma-separated batch sizes to search");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(c_eval, ev.common);
  c_eval->add_option("--data", ev.data, "dataset directory")->required();
  c_eval->add_option("--split", ev.split, "split CSV")->required();
  c_eval->add_option("--checkpoint", ev.checkpoint, "checkpoint file");
  c_eval->add_option("--assignment", ev.assignment, "train, val or test");
  c_eval->add_option("--name", ev.name, "model name in reports");
  c_eval->add_flag("--oracle", ev.oracle, "score the ground-truth density maps");
  c_eval->add_option("--heatmaps", ev.heatmaps, "number of GT/prediction heatmap pairs to write");

  AblateArgs ab;
  auto* c_ablate = app.add_subcommand("ablate", "encoder freezing x head depth ablation");
  add_common(c_ablate, ab.common);
  c_ablate->add_option("--data", ab.data, "dataset directory")->required();
  c_ablate->add_option("--split", ab.split, "split CSV")->required();
  c_ablate->add_option("--encoder", ab.encoder, "comma list of frozen,trainable");
  c_ablate->add_option("--depths", ab.depths, "comma list of head depths");
  c_ablate->add_option("--lr", ab.lr, "learning rate");
  c_ablate->add_option("--batch", ab.batch, "batch size");
  c_ablate->add_option("--epochs", ab.epochs, "maximum epochs");

  ReportArgs rep;
  auto* c_report = app.add_subcommand("report", "combine eval outputs into tables");
  add_common(c_report, rep.common);
  c_report->add_option("--run", rep.runs, "eval output directory (repeatable)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }

  kernels::configure_threads_from_env();
  try {
    if (*c_synth) return cmd_synth(synth, out);
    if (*c_ingest) return cmd_ingest(ingest, out);
    if (*c_stats) return cmd_stats(stats, out);
    if (*c_split) return cmd_split(split, out);
    if (*c_train) return cmd_train(tr, out);
    if (*c_eval) return cmd_eval(ev, out);
    if (*c_ablate) return cmd_ablate(ab, out);
    if (*c_report) return cmd_report(rep, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return classify(e);
  }
  return kRuntimeError;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cellcount::cli
