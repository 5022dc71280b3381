#include "cellcount/training.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "cellcount/config.hpp"
#include "cellcount/csv.hpp"
#include "cellcount/errors.hpp"

namespace cellcount {

std::string to_string(Objective o) { return o == Objective::density_mse ? "density_mse" : "count_mse"; }

Objective parse_objective(std::string_view text) {
  if (text == "density_mse") return Objective::density_mse;
  if (text == "count_mse") return Objective::count_mse;
  throw ParameterError("unknown objective '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ParameterError("train config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("train config: learning_rate must be > 0");
  if (max_epochs < 1) throw ParameterError("train config: max_epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ParameterError("train config: Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ParameterError("train config: epsilon must be > 0");
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) { return from_config(kv, TrainConfig{}); }

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv, const TrainConfig& defaults) {
  TrainConfig c = defaults;
  c.batch_size = kv.get_size("train.batch_size", c.batch_size);
  c.learning_rate = kv.get_double("train.learning_rate", c.learning_rate);
  c.max_epochs = kv.get_size("train.max_epochs", c.max_epochs);
  c.max_steps = kv.get_size("train.max_steps", c.max_steps);
  c.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", static_cast<long long>(c.seed)));
  c.objective = parse_objective(kv.get_string("train.objective", to_string(c.objective)));
  c.encoder_trainable = kv.get_bool("model.encoder_trainable", c.encoder_trainable);
  c.patience = kv.get_size("train.patience", c.patience);
  c.report_interval = kv.get_size("train.report_interval", c.report_interval);
  c.beta1 = kv.get_double("train.beta1", c.beta1);
  c.beta2 = kv.get_double("train.beta2", c.beta2);
  c.epsilon = kv.get_double("train.epsilon", c.epsilon);
  c.validate();
  return c;
}

void TrainConfig::write_to(KeyValueConfig& kv) const {
  kv.set("train.batch_size", std::to_string(batch_size));
  kv.set("train.learning_rate", csv::format_exact(learning_rate));
  kv.set("train.max_epochs", std::to_string(max_epochs));
  kv.set("train.max_steps", std::to_string(max_steps));
  kv.set("train.seed", std::to_string(seed));
  kv.set("train.objective", to_string(objective));
  kv.set("train.patience", std::to_string(patience));
}

// ---- samples ----------------------------------------------------------------------------

Sample make_sample(std::string id, const GrayImage& source, std::span<const DotAnnotation> dots,
                   const ModelConfig& model, const GaussianKernel& kernel) {
  Sample s;
  s.id = std::move(id);
  s.image = source.width == model.input_size && source.height == model.input_size
                ? source
                : resize_bilinear(source, model.input_size, model.input_size);
  s.target = density_from_dots(dots, {model.grid(), model.grid()}, source.size(), kernel);
  s.count = static_cast<double>(dots.size());
  return s;
}

std::vector<Sample> prepare_samples(std::span<const DatasetRecord> records,
                                    const ModelConfig& model, const GaussianKernel& kernel) {
  std::vector<Sample> out(records.size());
  std::exception_ptr error;
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& r = records[i];
      const auto img = read_image_file(r.image_path);
      out[i] = make_sample(r.id, img, r.annotations.dots, model, kernel);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

// ---- Adam -------------------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

// ---- training loop -------------------------------------------------------------------------

namespace {

Tensor sample_loss(const DensityModel& model, const Sample& s, Objective objective) {
  const Tensor pred = model.forward(s.image);
  if (objective == Objective::density_mse) {
    return mse_loss(pred, Tensor::from(pred.shape(), s.target.values));
  }
  return mse_loss(sum(pred), Tensor::scalar(s.count));
}

Tensor sample_loss(const RegressionModel& model, const Sample& s, Objective objective) {
  if (objective != Objective::count_mse) {
    throw ParameterError("the regression baseline trains on count_mse only");
  }
  return mse_loss(model.forward(s.image), Tensor::scalar(s.count));
}

template <typename Model>
double validation_mae(const Model& model, std::span<const Sample> val) {
  const auto pairs = predict_pairs([&model](const Sample& s) { return model.predict_count(s.image); },
                                   val);
  return compute_metrics(pairs).mae;
}

template <typename Model>
TrainResult<Model> train_impl(const Model& initial, std::span<const Sample> train_set,
                              std::span<const Sample> val_set, const TrainConfig& cfg,
                              const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ParameterError("train: training split is empty");
  if (val_set.empty()) throw ParameterError("train: validation split is empty");

  Model model = initial.clone();
  model.set_trainable(cfg.encoder_trainable);
  Model best = model.clone();
  Adam adam(model.trainable_parameters(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  TrainState state;
  state.best_val_mae = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    bool step_cap = false;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      if (cfg.max_steps && state.step >= cfg.max_steps) {
        step_cap = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      model.zero_grad();
      Tensor total;
      for (std::size_t i = start; i < end; ++i) {
        const Tensor l = sample_loss(model, train_set[order[i]], cfg.objective);
        total = total.defined() ? add(total, l) : l;
      }
      const Tensor loss = scale(total, 1.0 / static_cast<double>(end - start));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("train: non-finite loss at step " + std::to_string(state.step + 1) +
                                  " (epoch " + std::to_string(epoch) + ")",
                              state.step + 1);
      }
      loss.backward();
      adam.step();
      ++state.step;
      state.step_losses.push_back(value);
      epoch_loss += value;
      ++batches;
      if (cfg.report_interval && state.step % cfg.report_interval == 0) {
        std::cerr << "step " << state.step << " loss " << value << '\n';
      }
    }
    if (batches == 0) break;

    state.epoch = epoch;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = state.step;
    rec.train_loss = epoch_loss / static_cast<double>(batches);
    rec.val_mae = validation_mae(model, val_set);
    rec.improved = rec.val_mae < state.best_val_mae;
    if (rec.improved) {
      state.best_val_mae = rec.val_mae;
      state.best_epoch = epoch;
      best.copy_values_from(model);
      since_best = 0;
    } else {
      ++since_best;
    }
    rec.best_val_mae = state.best_val_mae;
    state.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (step_cap || (cfg.max_steps && state.step >= cfg.max_steps)) break;
    if (cfg.patience && since_best >= cfg.patience) {
      state.stopped_early = true;
      break;
    }
  }
  best.set_trainable(cfg.encoder_trainable);
  return {std::move(best), std::move(state)};
}

}  // namespace

TrainResult<DensityModel> train(const DensityModel& initial, std::span<const Sample> train_set,
                                std::span<const Sample> val_set, const TrainConfig& cfg,
                                const EpochCallback& on_epoch) {
  return train_impl(initial, train_set, val_set, cfg, on_epoch);
}

TrainResult<RegressionModel> train(const RegressionModel& initial,
                                   std::span<const Sample> train_set,
                                   std::span<const Sample> val_set, const TrainConfig& cfg,
                                   const EpochCallback& on_epoch) {
  return train_impl(initial, train_set, val_set, cfg, on_epoch);
}

std::string format_history_csv(const TrainState& state) {
  csv::Table t;
  t.header = {"epoch", "step", "train_loss", "val_mae", "best_val_mae", "improved"};
  for (const auto& e : state.epochs) {
    t.rows.push_back({std::to_string(e.epoch), std::to_string(e.step),
                      csv::format_exact(e.train_loss), csv::format_exact(e.val_mae),
                      csv::format_exact(e.best_val_mae), e.improved ? "1" : "0"});
  }
  return csv::format(t);
}

// ---- evaluation ------------------------------------------------------------------------------

std::vector<CountPair> predict_pairs(const CountPredictor& predictor,
                                     std::span<const Sample> samples, kernels::Backend backend) {
  std::vector<CountPair> out(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 2) if (backend == kernels::Backend::parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = {samples[i].count, predictor(samples[i]), samples[i].id};
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<CountPair> predict_pairs(const DensityModel& model, std::span<const Sample> samples) {
  return predict_pairs([&model](const Sample& s) { return model.predict_count(s.image); }, samples);
}

NamedReport evaluate(std::string name, const CountPredictor& predictor,
                     std::span<const Sample> samples, const DensityBounds& bounds) {
  if (samples.empty()) throw ParameterError("evaluate: split is empty");
  const auto pairs = predict_pairs(predictor, samples);
  return {std::move(name), compute_metrics(pairs), macro_report(pairs, bounds)};
}

NamedReport evaluate(std::string name, const DensityModel& model, std::span<const Sample> samples,
                     const DensityBounds& bounds) {
  return evaluate(std::move(name), [&model](const Sample& s) { return model.predict_count(s.image); },
                  samples, bounds);
}

CountPredictor oracle_predictor() {
  return [](const Sample& s) { return s.target.total(); };
}

CountPredictor constant_predictor(double value) {
  return [value](const Sample&) { return value; };
}

double mean_count(std::span<const Sample> samples) {
  if (samples.empty()) throw ParameterError("mean_count: no samples");
  double s = 0.0;
  for (const auto& x : samples) s += x.count;
  return s / static_cast<double>(samples.size());
}

// ---- ablation ------------------------------------------------------------------------------

std::vector<AblationRow> run_ablation(const AblationGrid& grid, const ModelConfig& base,
                                      std::uint64_t model_seed, std::span<const Sample> train_set,
                                      std::span<const Sample> val_set,
                                      std::span<const Sample> test_set, const TrainConfig& cfg) {
  if (grid.encoder_trainable.empty() || grid.head_depths.empty()) {
    throw ParameterError("run_ablation: empty grid");
  }
  std::vector<AblationRow> rows;
  for (const bool trainable : grid.encoder_trainable) {
    for (const auto depth : grid.head_depths) {
      AblationRow row;
      row.encoder_trainable = trainable;
      row.head_depth = depth;
      try {
        ModelConfig mc = base;
        mc.head_channels = ModelConfig::halving_head(depth, mc.feature_dim);
        mc.encoder_trainable = trainable;
        DensityModel model(mc, model_seed);
        row.encoder_params = model.encoder_param_count();
        row.head_params = model.head_param_count();
        row.trainable_params = model.trainable_param_count();
        TrainConfig tc = cfg;
        tc.encoder_trainable = trainable;
        const auto result = train(model, train_set, val_set, tc);
        row.test_mae = compute_metrics(predict_pairs(result.model, test_set)).mae;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

std::string ablation_params(const AblationRow& r) {
  return r.encoder_trainable
             ? format_param_count(r.encoder_params) + " + " + format_param_count(r.head_params)
             : format_param_count(r.head_params);
}

}  // namespace

std::string format_ablation_markdown(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os << "| Component | Setting | #Trainable params | Test MAE ↓ |\n";
  os << "|---|---|---:|---:|\n";
  for (const auto& r : rows) {
    os << "| Encoder " << (r.encoder_trainable ? "trainable" : "frozen") << " | " << r.head_depth
       << (r.head_depth == 1 ? " layer" : " layers") << " | " << ablation_params(r) << " | "
       << (r.error.empty() ? csv::format_fixed(r.test_mae, 2) : "error: " + r.error) << " |\n";
  }
  return os.str();
}

std::string format_ablation_csv(std::span<const AblationRow> rows) {
  csv::Table t;
  t.header = {"encoder", "head_depth", "encoder_params", "head_params", "trainable_params",
              "test_mae", "error"};
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    t.rows.push_back({r.encoder_trainable ? "trainable" : "frozen", std::to_string(r.head_depth),
                      std::to_string(r.encoder_params), std::to_string(r.head_params),
                      std::to_string(r.trainable_params),
                      r.error.empty() ? csv::format_fixed(r.test_mae, 6) : "nan", err});
  }
  return csv::format(t);
}

std::vector<GridSearchResult> grid_search(const ModelConfig& model, std::uint64_t model_seed,
                                          std::span<const double> learning_rates,
                                          std::span<const std::size_t> batch_sizes,
                                          std::span<const Sample> train_set,
                                          std::span<const Sample> val_set, const TrainConfig& cfg) {
  std::vector<GridSearchResult> out;
  const DensityModel initial(model, model_seed);
  for (double lr : learning_rates) {
    for (auto bs : batch_sizes) {
      TrainConfig tc = cfg;
      tc.learning_rate = lr;
      tc.batch_size = bs;
      const auto result = train(initial, train_set, val_set, tc);
      out.push_back({lr, bs, result.state.best_val_mae});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.val_mae < b.val_mae; });
  return out;
}

}  // namespace cellcount
