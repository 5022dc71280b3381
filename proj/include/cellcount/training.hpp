#pragma once

// Mini-batch Adam training with best-validation-MAE checkpointing, evaluation
// and the encoder-freezing × head-depth ablation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cellcount/annotations.hpp"
#include "cellcount/imaging.hpp"
#include "cellcount/metrics.hpp"
#include "cellcount/model.hpp"

namespace cellcount {

enum class Objective { density_mse, count_mse };
std::string to_string(Objective o);
Objective parse_objective(std::string_view text);

struct TrainConfig {
  std::size_t batch_size = 8;
  double learning_rate = 1e-6;
  std::size_t max_epochs = 50;
  std::size_t max_steps = 0;  // 0: no step cap
  std::uint64_t seed = 0;
  Objective objective = Objective::density_mse;
  bool encoder_trainable = true;
  std::size_t patience = 10;  // epochs without validation improvement; 0 disables early stop
  std::size_t report_interval = 0;  // print every N steps when > 0
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  static TrainConfig from_config(const KeyValueConfig& kv);
  static TrainConfig from_config(const KeyValueConfig& kv, const TrainConfig& defaults);
  void write_to(KeyValueConfig& kv) const;
};

// One training/evaluation example at model resolution.
struct Sample {
  std::string id;
  GrayImage image;     // input_size × input_size
  DensityMap target;   // H_f × W_f, total() == count
  double count = 0.0;  // number of dots
};

// Reads each record's image, resizes it to the model input and renders its
// ground-truth density directly at the H_f × W_f grid. Runs in parallel.
std::vector<Sample> prepare_samples(std::span<const DatasetRecord> records,
                                    const ModelConfig& model, const GaussianKernel& kernel);
Sample make_sample(std::string id, const GrayImage& source, std::span<const DotAnnotation> dots,
                   const ModelConfig& model, const GaussianKernel& kernel);

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double epsilon = 1e-8);

  // θ ← θ − lr·m̂/(√v̂ + ε) for every parameter holding a gradient.
  void step();
  std::size_t steps() const { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // optimizer steps completed
  double train_loss = 0.0;  // mean batch loss over the epoch
  double val_mae = 0.0;
  double best_val_mae = 0.0;
  bool improved = false;
};

struct TrainState {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double best_val_mae = 0.0;
  std::size_t best_epoch = 0;
  std::vector<double> step_losses;
  std::vector<EpochRecord> epochs;
  bool stopped_early = false;
};

template <typename Model>
struct TrainResult {
  Model model;  // parameters of the best validation epoch
  TrainState state;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult<DensityModel> train(const DensityModel& initial, std::span<const Sample> train_set,
                                std::span<const Sample> val_set, const TrainConfig& cfg,
                                const EpochCallback& on_epoch = {});
TrainResult<RegressionModel> train(const RegressionModel& initial,
                                   std::span<const Sample> train_set,
                                   std::span<const Sample> val_set, const TrainConfig& cfg,
                                   const EpochCallback& on_epoch = {});

std::string format_history_csv(const TrainState& state);

// ---- evaluation --------------------------------------------------------------------

using CountPredictor = std::function<double(const Sample&)>;

// Predictions in sample order; the parallel backend fans out over samples.
std::vector<CountPair> predict_pairs(const CountPredictor& predictor,
                                     std::span<const Sample> samples,
                                     kernels::Backend backend = kernels::Backend::parallel);
std::vector<CountPair> predict_pairs(const DensityModel& model, std::span<const Sample> samples);

NamedReport evaluate(std::string name, const CountPredictor& predictor,
                     std::span<const Sample> samples, const DensityBounds& bounds = {});
NamedReport evaluate(std::string name, const DensityModel& model, std::span<const Sample> samples,
                     const DensityBounds& bounds = {});

// Returns the ground-truth map's total: the perfect density model.
CountPredictor oracle_predictor();
CountPredictor constant_predictor(double value);
double mean_count(std::span<const Sample> samples);

// ---- ablation ------------------------------------------------------------------------

struct AblationRow {
  bool encoder_trainable = true;
  std::size_t head_depth = 3;
  std::size_t encoder_params = 0;
  std::size_t head_params = 0;
  std::size_t trainable_params = 0;
  double test_mae = 0.0;
  std::string error;  // non-empty when this cell failed
};

struct AblationGrid {
  std::vector<bool> encoder_trainable{false, true};
  std::vector<std::size_t> head_depths{1, 2, 3};
};

// One model per cell, all from `model_seed` and the same data.
std::vector<AblationRow> run_ablation(const AblationGrid& grid, const ModelConfig& base,
                                      std::uint64_t model_seed, std::span<const Sample> train_set,
                                      std::span<const Sample> val_set,
                                      std::span<const Sample> test_set, const TrainConfig& cfg);

std::string format_ablation_markdown(std::span<const AblationRow> rows);
std::string format_ablation_csv(std::span<const AblationRow> rows);

// ---- hyperparameter search -------------------------------------------------------------

struct GridSearchResult {
  double learning_rate = 0.0;
  std::size_t batch_size = 0;
  double val_mae = 0.0;
};

std::vector<GridSearchResult> grid_search(const ModelConfig& model, std::uint64_t model_seed,
                                          std::span<const double> learning_rates,
                                          std::span<const std::size_t> batch_sizes,
                                          std::span<const Sample> train_set,
                                          std::span<const Sample> val_set, const TrainConfig& cfg);

}  // namespace cellcount
