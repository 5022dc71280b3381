#include "cellcount/model.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "cellcount/config.hpp"
#include "cellcount/csv.hpp"
#include "cellcount/errors.hpp"

namespace cellcount {

// ---- config -------------------------------------------------------------------------

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ParameterError("model config: " + msg); };
  if (patch_size == 0) fail("patch_size must be >= 1");
  if (input_size == 0 || input_size % patch_size != 0) {
    fail("input_size " + std::to_string(input_size) + " is not divisible by patch_size " +
         std::to_string(patch_size));
  }
  if (channels == 0) fail("channels must be >= 1");
  if (embed_dim == 0 || num_heads == 0 || embed_dim % num_heads != 0) {
    fail("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
         std::to_string(num_heads));
  }
  if (mlp_ratio == 0) fail("mlp_ratio must be >= 1");
  if (feature_dim == 0) fail("feature_dim must be >= 1");
  for (auto c : head_channels) {
    if (c == 0) fail("head_channels entries must be >= 1");
  }
}

std::vector<std::size_t> ModelConfig::halving_head(std::size_t depth, std::size_t feature_dim) {
  if (depth == 0) throw ParameterError("head depth must be >= 1");
  std::vector<std::size_t> out;
  std::size_t width = feature_dim;
  for (std::size_t i = 1; i < depth; ++i) {
    width = std::max<std::size_t>(1, width / 2);
    out.push_back(width);
  }
  return out;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.input_size = 64;
  c.patch_size = 8;
  c.embed_dim = 32;
  c.depth = 2;
  c.num_heads = 2;
  c.feature_dim = 16;
  c.head_channels = halving_head(3, c.feature_dim);
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.input_size = 32;
  c.patch_size = 16;
  c.embed_dim = 16;
  c.depth = 1;
  c.num_heads = 2;
  c.feature_dim = 8;
  c.head_channels = {4};
  return c;
}

ModelConfig ModelConfig::from_config(const KeyValueConfig& kv, const ModelConfig& defaults) {
  ModelConfig c = defaults;
  c.input_size = kv.get_size("model.input_size", c.input_size);
  c.patch_size = kv.get_size("model.patch_size", c.patch_size);
  c.channels = kv.get_size("model.channels", c.channels);
  c.embed_dim = kv.get_size("model.embed_dim", c.embed_dim);
  c.depth = kv.get_size("model.depth", c.depth);
  c.num_heads = kv.get_size("model.num_heads", c.num_heads);
  c.mlp_ratio = kv.get_size("model.mlp_ratio", c.mlp_ratio);
  c.feature_dim = kv.get_size("model.feature_dim", c.feature_dim);
  if (kv.has("model.head_depth")) {
    c.head_channels = halving_head(kv.get_size("model.head_depth", 3), c.feature_dim);
  }
  c.head_channels = kv.get_size_list("model.head_channels", c.head_channels);
  c.encoder_trainable = kv.get_bool("model.encoder_trainable", c.encoder_trainable);
  c.ln_eps = kv.get_double("model.ln_eps", c.ln_eps);
  c.validate();
  return c;
}

void ModelConfig::write_to(KeyValueConfig& kv) const {
  kv.set("model.input_size", std::to_string(input_size));
  kv.set("model.patch_size", std::to_string(patch_size));
  kv.set("model.channels", std::to_string(channels));
  kv.set("model.embed_dim", std::to_string(embed_dim));
  kv.set("model.depth", std::to_string(depth));
  kv.set("model.num_heads", std::to_string(num_heads));
  kv.set("model.mlp_ratio", std::to_string(mlp_ratio));
  kv.set("model.feature_dim", std::to_string(feature_dim));
  std::string heads;
  for (std::size_t i = 0; i < head_channels.size(); ++i)
    heads += (i ? "," : "") + std::to_string(head_channels[i]);
  kv.set("model.head_channels", heads);
  kv.set("model.encoder_trainable", encoder_trainable ? "true" : "false");
  kv.set("model.ln_eps", csv::format_exact(ln_eps));
}

// ---- patches -------------------------------------------------------------------------

Tensor patchify(const GrayImage& img, std::size_t patch_size) {
  if (patch_size == 0 || img.width % patch_size != 0 || img.height % patch_size != 0) {
    throw ParameterError("patchify: " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + " image is not divisible into " +
                         std::to_string(patch_size) + "-pixel patches");
  }
  const std::size_t P = patch_size;
  const std::size_t gw = img.width / P, gh = img.height / P;
  std::vector<double> out(gw * gh * P * P);
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px) {
      double* tok = out.data() + (py * gw + px) * P * P;
      for (std::size_t dy = 0; dy < P; ++dy)
        for (std::size_t dx = 0; dx < P; ++dx) tok[dy * P + dx] = img.at(px * P + dx, py * P + dy);
    }
  return Tensor::from({gw * gh, P * P}, std::move(out));
}

GrayImage unpatchify(const Tensor& tokens, std::size_t width, std::size_t height,
                     std::size_t patch_size) {
  const std::size_t P = patch_size;
  if (P == 0 || width % P || height % P || tokens.rank() != 2 ||
      tokens.dim(0) != (width / P) * (height / P) || tokens.dim(1) != P * P) {
    throw ShapeError("unpatchify: tokens " + shape_str(tokens.shape()) + " do not tile a " +
                     std::to_string(width) + "x" + std::to_string(height) + " image");
  }
  GrayImage img = GrayImage::filled(width, height, 0.0);
  const std::size_t gw = width / P;
  const auto d = tokens.data();
  for (std::size_t t = 0; t < tokens.dim(0); ++t)
    for (std::size_t dy = 0; dy < P; ++dy)
      for (std::size_t dx = 0; dx < P; ++dx)
        img.at((t % gw) * P + dx, (t / gw) * P + dy) = d[t * P * P + dy * P + dx];
  return img;
}

// ---- ParamModule --------------------------------------------------------------------

const NamedParam* ParamModule::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t ParamModule::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::size_t ParamModule::encoder_param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.encoder ? p.value.numel() : 0;
  return n;
}

std::size_t ParamModule::trainable_param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.requires_grad() ? p.value.numel() : 0;
  return n;
}

std::vector<Tensor> ParamModule::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) {
    if (p.value.requires_grad()) out.push_back(p.value);
  }
  return out;
}

void ParamModule::set_trainable(bool encoder) {
  for (auto& p : params_) {
    if (p.encoder) p.value.set_requires_grad(encoder);
  }
}

void ParamModule::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

void ParamModule::copy_values_from(const ParamModule& other) {
  if (other.params_.size() != params_.size()) throw ShapeError("copy_values_from: layout differs");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto src = other.params_[i].value.data();
    auto dst = params_[i].value.mutable_data();
    if (src.size() != dst.size() || other.params_[i].name != params_[i].name) {
      throw ShapeError("copy_values_from: parameter " + params_[i].name + " differs");
    }
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

std::size_t ParamModule::add_param(std::string name, Shape shape, std::vector<double> values,
                                   bool encoder) {
  params_.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values), true), encoder});
  return params_.size() - 1;
}

void ParamModule::deep_copy_params(const ParamModule& other) {
  params_.clear();
  for (const auto& p : other.params_)
    params_.push_back({p.name, p.value.clone_leaf(p.value.requires_grad()), p.encoder});
}

// ---- shared encoder -------------------------------------------------------------------

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  std::vector<double> normal(std::size_t n, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng_);
    return v;
  }
  // Scaled-normal for a fan_in × fan_out weight.
  std::vector<double> weight(std::size_t fan_in, std::size_t fan_out) {
    return normal(fan_in * fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  }

 private:
  std::mt19937_64 rng_;
};

struct EncoderBuilder {
  using Add = std::function<std::size_t(std::string, Shape, std::vector<double>)>;

  static EncoderLayout build(const ModelConfig& c, Initializer& init, const Add& add) {
    EncoderLayout L;
    const std::size_t E = c.embed_dim, H = c.embed_dim * c.mlp_ratio;
    L.patch_w = add("encoder.patch_embed.weight", {c.patch_dim(), E}, init.weight(c.patch_dim(), E));
    L.patch_b = add("encoder.patch_embed.bias", {E}, std::vector<double>(E, 0.0));
    L.pos = add("encoder.pos_embed", {c.tokens(), E}, init.normal(c.tokens() * E, 0.02));
    for (std::size_t b = 0; b < c.depth; ++b) {
      const std::string p = "encoder.blocks." + std::to_string(b) + ".";
      EncoderLayout::Block blk{};
      blk.norm1_gain = add(p + "norm1.gain", {E}, std::vector<double>(E, 1.0));
      blk.norm1_bias = add(p + "norm1.bias", {E}, std::vector<double>(E, 0.0));
      blk.qkv_w = add(p + "attn.qkv.weight", {E, 3 * E}, init.weight(E, 3 * E));
      blk.qkv_b = add(p + "attn.qkv.bias", {3 * E}, std::vector<double>(3 * E, 0.0));
      blk.proj_w = add(p + "attn.proj.weight", {E, E}, init.weight(E, E));
      blk.proj_b = add(p + "attn.proj.bias", {E}, std::vector<double>(E, 0.0));
      blk.norm2_gain = add(p + "norm2.gain", {E}, std::vector<double>(E, 1.0));
      blk.norm2_bias = add(p + "norm2.bias", {E}, std::vector<double>(E, 0.0));
      blk.fc1_w = add(p + "mlp.fc1.weight", {E, H}, init.weight(E, H));
      blk.fc1_b = add(p + "mlp.fc1.bias", {H}, std::vector<double>(H, 0.0));
      blk.fc2_w = add(p + "mlp.fc2.weight", {H, E}, init.weight(H, E));
      blk.fc2_b = add(p + "mlp.fc2.bias", {E}, std::vector<double>(E, 0.0));
      L.blocks.push_back(blk);
    }
    L.neck_w = add("encoder.neck.weight", {E, c.feature_dim}, init.weight(E, c.feature_dim));
    L.neck_b = add("encoder.neck.bias", {c.feature_dim}, std::vector<double>(c.feature_dim, 0.0));
    return L;
  }
};

template <typename Lookup>
Tensor run_encoder(const ModelConfig& c, const EncoderLayout& L, const Lookup& p,
                   const Tensor& tokens) {
  if (tokens.rank() != 2 || tokens.dim(0) != c.tokens() || tokens.dim(1) != c.patch_dim()) {
    throw ShapeError("encode: expected " + std::to_string(c.tokens()) + " tokens of width " +
                     std::to_string(c.patch_dim()) + ", got " + shape_str(tokens.shape()));
  }
  const std::size_t E = c.embed_dim, heads = c.num_heads, dh = E / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor x = add(linear(tokens, p(L.patch_w), p(L.patch_b)), p(L.pos));
  for (const auto& b : L.blocks) {
    const Tensor h = layer_norm(x, p(b.norm1_gain), p(b.norm1_bias), c.ln_eps);
    const Tensor qkv = linear(h, p(b.qkv_w), p(b.qkv_b));
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const Tensor q = slice_cols(qkv, hd * dh, dh);
      const Tensor k = slice_cols(qkv, E + hd * dh, dh);
      const Tensor v = slice_cols(qkv, 2 * E + hd * dh, dh);
      const Tensor att = softmax_lastdim(scale(matmul(q, transpose(k)), att_scale));
      outs.push_back(matmul(att, v));
    }
    const Tensor merged = heads == 1 ? outs.front() : concat_cols(outs);
    x = add(x, linear(merged, p(b.proj_w), p(b.proj_b)));
    const Tensor h2 = layer_norm(x, p(b.norm2_gain), p(b.norm2_bias), c.ln_eps);
    x = add(x, linear(gelu(linear(h2, p(b.fc1_w), p(b.fc1_b))), p(b.fc2_w), p(b.fc2_b)));
  }
  return linear(x, p(L.neck_w), p(L.neck_b));
}

}  // namespace

// ---- DensityModel -----------------------------------------------------------------------

DensityModel::DensityModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Initializer init(seed);
  enc_ = EncoderBuilder::build(config_, init, [this](std::string n, Shape s, std::vector<double> v) {
    return add_param(std::move(n), std::move(s), std::move(v), true);
  });
  std::size_t in = config_.feature_dim;
  std::vector<std::size_t> widths = config_.head_channels;
  widths.push_back(1);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string p = "head." + std::to_string(i) + ".";
    const auto w = add_param(p + "weight", {in, widths[i]}, init.weight(in, widths[i]), false);
    const auto b = add_param(p + "bias", {widths[i]}, std::vector<double>(widths[i], 0.0), false);
    head_.emplace_back(w, b);
    in = widths[i];
  }
  set_trainable(config_.encoder_trainable);
}

Tensor DensityModel::encode(const Tensor& tokens) const {
  return run_encoder(config_, enc_, [this](std::size_t i) -> const Tensor& { return p(i); }, tokens);
}

Tensor DensityModel::density_head(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != config_.feature_dim) {
    throw ShapeError("density_head: expected [N x " + std::to_string(config_.feature_dim) +
                     "] features, got " + shape_str(features.shape()));
  }
  Tensor y = features;
  for (std::size_t i = 0; i < head_.size(); ++i) {
    y = linear(y, p(head_[i].first), p(head_[i].second));
    if (i + 1 < head_.size()) y = relu(y);
  }
  return y;
}

void DensityModel::check_input(const GrayImage& img) const {
  if (img.width != config_.input_size || img.height != config_.input_size) {
    throw ShapeError("model expects " + std::to_string(config_.input_size) + "x" +
                     std::to_string(config_.input_size) + " input, got " +
                     std::to_string(img.width) + "x" + std::to_string(img.height));
  }
}

Tensor DensityModel::forward(const GrayImage& img) const {
  check_input(img);
  const Tensor density = density_head(encode(patchify(img, config_.patch_size)));
  return reshape(density, {config_.grid(), config_.grid()});
}

DensityMap DensityModel::predict(const GrayImage& img) const {
  NoGradGuard guard;
  const Tensor out = forward(img);
  DensityMap map = DensityMap::zeros(config_.grid(), config_.grid());
  std::copy(out.data().begin(), out.data().end(), map.values.begin());
  return map;
}

double DensityModel::predict_count(const GrayImage& img) const { return predict(img).total(); }

DensityModel DensityModel::clone() const {
  DensityModel m;
  m.config_ = config_;
  m.enc_ = enc_;
  m.head_ = head_;
  m.deep_copy_params(*this);
  return m;
}

// ---- RegressionModel -------------------------------------------------------------------

RegressionModel::RegressionModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Initializer init(seed);
  enc_ = EncoderBuilder::build(config_, init, [this](std::string n, Shape s, std::vector<double> v) {
    return add_param(std::move(n), std::move(s), std::move(v), true);
  });
  fc_w_ = add_param("fc.weight", {config_.feature_dim, 1}, init.weight(config_.feature_dim, 1), false);
  // Positive start keeps the clamp from silencing gradients at initialization.
  fc_b_ = add_param("fc.bias", {1}, {1.0}, false);
  set_trainable(config_.encoder_trainable);
}

Tensor RegressionModel::forward(const GrayImage& img) const {
  if (img.width != config_.input_size || img.height != config_.input_size) {
    throw ShapeError("model expects " + std::to_string(config_.input_size) + "x" +
                     std::to_string(config_.input_size) + " input, got " +
                     std::to_string(img.width) + "x" + std::to_string(img.height));
  }
  const Tensor features = run_encoder(
      config_, enc_, [this](std::size_t i) -> const Tensor& { return p(i); },
      patchify(img, config_.patch_size));
  return reshape(relu(linear(mean_rows(features), p(fc_w_), p(fc_b_))), {});
}

double RegressionModel::predict_count(const GrayImage& img) const {
  NoGradGuard guard;
  return forward(img).item();
}

RegressionModel RegressionModel::clone() const {
  RegressionModel m;
  m.config_ = config_;
  m.enc_ = enc_;
  m.fc_w_ = fc_w_;
  m.fc_b_ = fc_b_;
  m.deep_copy_params(*this);
  return m;
}

ParamBudget param_budget(const ModelConfig& c) {
  const std::size_t E = c.embed_dim, H = c.embed_dim * c.mlp_ratio;
  ParamBudget b;
  b.encoder = c.patch_dim() * E + E + c.tokens() * E;
  const std::size_t block = 4 * E            // two layer norms
                            + E * 3 * E + 3 * E  // qkv
                            + E * E + E          // attention projection
                            + E * H + H + H * E + E;
  b.encoder += c.depth * block + E * c.feature_dim + c.feature_dim;
  std::size_t in = c.feature_dim;
  for (std::size_t w : c.head_channels) {
    b.head += in * w + w;
    in = w;
  }
  b.head += in + 1;
  return b;
}

std::string format_param_count(std::size_t n) {
  if (n < 1000) return std::to_string(n);
  if (n < 1000000) return csv::format_fixed(static_cast<double>(n) / 1e3, 1) + " K";
  return csv::format_fixed(static_cast<double>(n) / 1e6, 1) + " M";
}

}  // namespace cellcount
