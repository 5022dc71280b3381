#include <doctest.h>

#include <cmath>

#include "cellcount/errors.hpp"
#include "cellcount/synthgen.hpp"
#include "cellcount/training.hpp"

using namespace cellcount;

namespace {

std::vector<Sample> synthetic_samples(std::size_t n, const ModelConfig& model, std::uint64_t seed) {
  SceneSpec spec;
  spec.width = spec.height = model.input_size;
  spec.count.mu = 2.5;
  spec.count.sigma = 0.6;
  spec.count.max = 60;
  spec.seed = seed;
  const auto kernel = gaussian_kernel();
  std::vector<Sample> out;
  for (const auto& s : generate_corpus(spec, n)) {
    out.push_back(make_sample(s.dots.image_id, s.image, s.dots.dots, model, kernel));
  }
  return out;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 4;
  c.max_epochs = 3;
  c.patience = 0;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("Adam's first step moves each weight by lr against the gradient sign") {
  auto w = Tensor::from({2}, {1.0, -1.0}, true);
  Adam adam({w}, 0.1);
  sum(mul(w, Tensor::from({2}, {2.0, -3.0}))).backward();
  adam.step();
  CHECK(w.at(0) == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(w.at(1) == doctest::Approx(-0.9).epsilon(1e-9));
  CHECK(adam.first_moments()[0][0] == doctest::Approx(0.2));
  CHECK(adam.second_moments()[0][1] == doctest::Approx(0.009));
}

TEST_CASE("Adam's second step uses bias-corrected moments") {
  auto w = Tensor::from({1}, {0.0}, true);
  Adam adam({w}, 0.01);
  const double g[2] = {1.0, 3.0};
  for (double gi : g) {
    w.zero_grad();
    scale(sum(w), gi).backward();
    adam.step();
  }
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0;
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  const double w1 = -0.01 * 1.0 / (1.0 + 1e-8);  // first step: m_hat = v_hat = 1
  CHECK(w.at(0) == doctest::Approx(w1 - 0.01 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-12));
}

TEST_CASE("samples carry count-conserving targets at grid resolution") {
  const auto model = ModelConfig::desk();
  for (const auto& s : synthetic_samples(6, model, 1)) {
    CHECK(s.target.width == model.grid());
    CHECK(std::abs(s.target.total() - s.count) < 1e-9 * std::max(1.0, s.count));
  }
}

TEST_CASE("training is reproducible and lowers the loss") {
  const auto model = ModelConfig::tiny();
  const auto data = synthetic_samples(12, model, 2);
  const std::span<const Sample> tr(data.data(), 8), va(data.data() + 8, 4);
  const DensityModel init(model, 3);
  auto cfg = quick_config();
  cfg.max_epochs = 10;
  const auto a = train(init, tr, va, cfg);
  const auto b = train(init, tr, va, cfg);
  CHECK(a.state.step_losses == b.state.step_losses);
  CHECK(a.state.epochs.size() == 10);
  CHECK(a.state.epochs.back().train_loss < a.state.epochs.front().train_loss);
}

TEST_CASE("frozen training leaves the encoder untouched") {
  const auto model = ModelConfig::tiny();
  const auto data = synthetic_samples(6, model, 4);
  const std::span<const Sample> tr(data.data(), 4), va(data.data() + 4, 2);
  const DensityModel init(model, 7);
  auto cfg = quick_config();
  cfg.encoder_trainable = false;
  const auto r = train(init, tr, va, cfg);
  for (std::size_t i = 0; i < init.parameters().size(); ++i) {
    const auto& before = init.parameters()[i];
    const auto& after = r.model.parameters()[i];
    const bool same = std::equal(before.value.data().begin(), before.value.data().end(),
                                 after.value.data().begin());
    if (before.encoder) CHECK(same);
  }
}

TEST_CASE("max_steps caps training and patience stops it") {
  const auto model = ModelConfig::tiny();
  const auto data = synthetic_samples(10, model, 5);
  const std::span<const Sample> tr(data.data(), 8), va(data.data() + 8, 2);
  auto cfg = quick_config();
  cfg.max_steps = 3;
  cfg.max_epochs = 100;
  CHECK(train(DensityModel(model, 1), tr, va, cfg).state.step == 3);
  cfg.max_steps = 0;
  cfg.learning_rate = 1e-300;  // updates vanish below rounding, so validation never improves again
  cfg.patience = 2;
  const auto r = train(DensityModel(model, 1), tr, va, cfg);
  CHECK(r.state.stopped_early);
  CHECK(r.state.epochs.size() == 3);
  CHECK(r.state.best_epoch == 1);
}

TEST_CASE("a non-finite loss aborts naming the step") {
  const auto model = ModelConfig::tiny();
  auto data = synthetic_samples(3, model, 6);
  data[0].image.pixels[0] = std::nan("");
  try {
    auto cfg = quick_config();
    cfg.batch_size = 3;
    train(DensityModel(model, 1), std::span<const Sample>(data.data(), 3),
          std::span<const Sample>(data.data() + 1, 1), cfg);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.step() == 1);
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = TrainConfig{};
  c.beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("regression baseline trains on the count objective") {
  const auto model = ModelConfig::tiny();
  const auto data = synthetic_samples(8, model, 8);
  const std::span<const Sample> tr(data.data(), 6), va(data.data() + 6, 2);
  auto cfg = quick_config();
  cfg.objective = Objective::count_mse;
  cfg.learning_rate = 1e-2;
  cfg.max_epochs = 8;
  const auto r = train(RegressionModel(model, 2), tr, va, cfg);
  CHECK(r.state.epochs.back().train_loss < r.state.epochs.front().train_loss);
}

TEST_CASE("oracle and constant predictors") {
  const auto model = ModelConfig::tiny();
  const auto data = synthetic_samples(5, model, 9);
  const auto oracle = evaluate("oracle", oracle_predictor(), data);
  CHECK(oracle.overall.mae < 1e-9);
  CHECK(oracle.overall.acp == 100.0);

  std::vector<Sample> two(2);
  two[0].count = 10;
  two[1].count = 20;
  CHECK(evaluate("zero", constant_predictor(0.0), two).overall.mae == 15.0);
  CHECK(mean_count(two) == 15.0);
}

TEST_CASE("serial and parallel prediction agree exactly") {
  const auto model = ModelConfig::desk();
  const auto data = synthetic_samples(9, model, 10);
  const DensityModel m(model, 4);
  const CountPredictor p = [&m](const Sample& s) { return m.predict_count(s.image); };
  const auto a = predict_pairs(p, data, kernels::Backend::serial);
  const auto b = predict_pairs(p, data, kernels::Backend::parallel);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].y_hat == b[i].y_hat);
}

TEST_CASE("ablation over a 2x3 grid gives six rows") {
  const auto model = ModelConfig::tiny();
  const auto data = synthetic_samples(9, model, 11);
  const std::span<const Sample> tr(data.data(), 5), va(data.data() + 5, 2), te(data.data() + 7, 2);
  auto cfg = quick_config();
  cfg.max_epochs = 1;
  const auto rows = run_ablation(AblationGrid{}, model, 3, tr, va, te, cfg);
  REQUIRE(rows.size() == 6);
  for (const auto& r : rows) {
    CHECK(r.error.empty());
    CHECK(r.trainable_params == (r.encoder_trainable ? r.encoder_params + r.head_params : r.head_params));
  }
  CHECK(rows[0].head_params < rows[2].head_params);
  const auto md = format_ablation_markdown(rows);
  CHECK(std::count(md.begin(), md.end(), '\n') == 8);
}

TEST_CASE("grid search ranks by validation MAE") {
  const auto model = ModelConfig::tiny();
  const auto data = synthetic_samples(6, model, 12);
  const std::span<const Sample> tr(data.data(), 4), va(data.data() + 4, 2);
  const std::vector<double> lrs{1e-6, 1e-3};
  const std::vector<std::size_t> batches{2, 4};
  auto cfg = quick_config();
  cfg.max_epochs = 2;
  const auto res = grid_search(model, 1, lrs, batches, tr, va, cfg);
  REQUIRE(res.size() == 4);
  for (std::size_t i = 1; i < res.size(); ++i) CHECK(res[i - 1].val_mae <= res[i].val_mae);
}
