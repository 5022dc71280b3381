#pragma once

// Patch-transformer density estimator and the scalar regression baseline.
//
// DensityModel: image → P×P patch tokens → linear patch embedding + learned
// positional embedding → pre-norm transformer blocks (multi-head attention,
// GELU MLP) → neck projection to D channels → tokens laid back onto the
// (H/P)×(W/P) grid → per-cell MLP over channels (1×1 convolutions, ReLU
// between layers, none after the last) → single-channel density map.
// The predicted count is the raw sum of the map.
//
// RegressionModel: same encoder, global average pool, one linear layer,
// output clamped at zero.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cellcount/imaging.hpp"
#include "cellcount/tensor.hpp"

namespace cellcount {

class KeyValueConfig;

struct ModelConfig {
  std::size_t input_size = 224;  // H = W
  std::size_t patch_size = 16;   // P
  std::size_t channels = 1;
  std::size_t embed_dim = 768;
  std::size_t depth = 12;
  std::size_t num_heads = 12;
  std::size_t mlp_ratio = 4;
  std::size_t feature_dim = 256;  // D
  std::vector<std::size_t> head_channels{128, 64};
  bool encoder_trainable = true;
  double ln_eps = 1e-6;

  std::size_t grid() const { return input_size / patch_size; }  // H_f = W_f
  std::size_t tokens() const { return grid() * grid(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }

  // Throws ParameterError on inconsistent values.
  void validate() const;

  // Widths halving from D: depth 1 → {}, 2 → {D/2}, 3 → {D/2, D/4}, ...
  static std::vector<std::size_t> halving_head(std::size_t depth, std::size_t feature_dim);

  // 64×64 input, P=8, 2 blocks of width 32, D=16. Trains in minutes on one core.
  static ModelConfig desk();
  // 32×32 input, P=16, one block of width 16, D=8, head {4}; used for gradient checks.
  static ModelConfig tiny();

  static ModelConfig from_config(const KeyValueConfig& kv, const ModelConfig& defaults = desk());
  void write_to(KeyValueConfig& kv) const;
};

// Flattened patches, row-major patch order; within a patch, row-major pixels
// then channels: index (dy·P + dx)·c + ch.
Tensor patchify(const GrayImage& img, std::size_t patch_size);
GrayImage unpatchify(const Tensor& tokens, std::size_t width, std::size_t height,
                     std::size_t patch_size);

struct NamedParam {
  std::string name;
  Tensor value;
  bool encoder = false;
};

// Owns an ordered list of named leaf tensors.
class ParamModule {
 public:
  const std::vector<NamedParam>& parameters() const { return params_; }
  std::vector<NamedParam>& parameters() { return params_; }
  const NamedParam* find(std::string_view name) const;

  std::size_t param_count() const;
  std::size_t encoder_param_count() const;
  std::size_t trainable_param_count() const;
  std::vector<Tensor> trainable_parameters() const;

  // Encoder parameters stop (or resume) receiving gradients.
  void set_trainable(bool encoder);
  void zero_grad();
  // Copies values (not tracking flags) from a module with identical layout.
  void copy_values_from(const ParamModule& other);

 protected:
  std::size_t add_param(std::string name, Shape shape, std::vector<double> values, bool encoder);
  const Tensor& p(std::size_t i) const { return params_[i].value; }
  void deep_copy_params(const ParamModule& other);

 private:
  std::vector<NamedParam> params_;
};

struct EncoderLayout {
  struct Block {
    std::size_t norm1_gain, norm1_bias, qkv_w, qkv_b, proj_w, proj_b;
    std::size_t norm2_gain, norm2_bias, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  std::size_t patch_w = 0, patch_b = 0, pos = 0;
  std::vector<Block> blocks;
  std::size_t neck_w = 0, neck_b = 0;
};

class DensityModel : public ParamModule {
 public:
  DensityModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // tokens [N × patch_dim] → features [N × D], rows in patch order.
  Tensor encode(const Tensor& tokens) const;
  // features [N × D] → per-cell density [N × 1].
  Tensor density_head(const Tensor& features) const;
  // Image of the configured input size → density map tensor [H_f × W_f].
  Tensor forward(const GrayImage& img) const;

  DensityMap predict(const GrayImage& img) const;
  double predict_count(const GrayImage& img) const;

  std::size_t head_param_count() const { return param_count() - encoder_param_count(); }

  DensityModel clone() const;

 private:
  DensityModel() = default;
  void check_input(const GrayImage& img) const;

  ModelConfig config_;
  EncoderLayout enc_;
  std::vector<std::pair<std::size_t, std::size_t>> head_;  // (weight, bias) per 1×1 layer
};

class RegressionModel : public ParamModule {
 public:
  RegressionModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  // Scalar prediction tensor (shape []), ≥ 0.
  Tensor forward(const GrayImage& img) const;
  double predict_count(const GrayImage& img) const;

  RegressionModel clone() const;

 private:
  RegressionModel() = default;

  ModelConfig config_;
  EncoderLayout enc_;
  std::size_t fc_w_ = 0, fc_b_ = 0;
};

// Parameter totals computed from the configuration alone, without building
// the model. Usable for full-scale configurations.
struct ParamBudget {
  std::size_t encoder = 0;
  std::size_t head = 0;
  std::size_t total() const { return encoder + head; }
};
ParamBudget param_budget(const ModelConfig& config);

// Human-readable parameter count: 257, 33.0 K, 89.7 M.
std::string format_param_count(std::size_t n);

// ---- checkpoints -----------------------------------------------------------------
//
// Binary container:
//   "CELLCKPT" | u32 version | u32 kind (0 density, 1 regression)
//   | u64 len + config text (key = value lines)
//   | u64 tensor count | per tensor: u32 name len, name, u32 rank, u64 dims[rank], f64 values
//   | u64 len + manifest text ("name shape" per line)
// All integers and doubles little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const DensityModel& model, const std::filesystem::path& path);
void save_checkpoint(const RegressionModel& model, const std::filesystem::path& path);
DensityModel load_density_checkpoint(const std::filesystem::path& path);
RegressionModel load_regression_checkpoint(const std::filesystem::path& path);
// The manifest footer text of a checkpoint file.
std::string read_checkpoint_manifest(const std::filesystem::path& path);

}  // namespace cellcount

namespace cellcount {
enum class CheckpointKind : std::uint32_t { density = 0, regression = 1 };
CheckpointKind read_checkpoint_kind(const std::filesystem::path& path);
}  // namespace cellcount
