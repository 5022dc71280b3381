#include "cellcount/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "cellcount/errors.hpp"
#include "cellcount/kernels.hpp"

namespace cellcount {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  std::string op = "leaf";

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Node;
using kernels::Transpose;

namespace {

thread_local bool t_grad_enabled = true;

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

// Result node; history is recorded only when some input needs a gradient.
Tensor make_result(std::string op, Shape shape, std::vector<double> data,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = std::move(op);
  const bool track = t_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                   [](const auto& p) { return p->requires_grad; });
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

bool is_scalar(const Tensor& t) { return t.rank() == 0; }

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

enum class Binary { add, sub, mul };

Tensor binary(Binary kind, const Tensor& a, const Tensor& b, const char* name) {
  if (a.shape() != b.shape() && !is_scalar(a) && !is_scalar(b)) {
    throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const bool a_bc = a.shape() != b.shape() && is_scalar(a);
  const bool b_bc = a.shape() != b.shape() && is_scalar(b);
  const Shape out_shape = a_bc ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ad[a_bc ? 0 : i];
    const double y = bd[b_bc ? 0 : i];
    out[i] = kind == Binary::add ? x + y : kind == Binary::sub ? x - y : x * y;
  }
  return make_result(name, out_shape, std::move(out), {a.node(), b.node()},
                     [kind, a_bc, b_bc](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       const std::size_t n = self.data.size();
                       if (pa.requires_grad) {
                         auto& ga = pa.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           const double d = kind == Binary::mul
                                                ? self.grad[i] * pb.data[b_bc ? 0 : i]
                                                : self.grad[i];
                           ga[a_bc ? 0 : i] += d;
                         }
                       }
                       if (pb.requires_grad) {
                         auto& gb = pb.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) {
                           double d = self.grad[i];
                           if (kind == Binary::sub) d = -d;
                           if (kind == Binary::mul) d *= pa.data[a_bc ? 0 : i];
                           gb[b_bc ? 0 : i] += d;
                         }
                       }
                     });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() = default;

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw ShapeError("dim: axis out of range for " + shape_str(shape()));
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }
std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape()));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::is_leaf() const { return !node_->backward_fn; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }
void Tensor::zero_grad() { node_->grad.clear(); }
const std::string& Tensor::op_name() const { return node_->op; }

Tensor Tensor::detach() const { return Tensor(make_leaf(shape(), node_->data, false)); }

Tensor Tensor::clone_leaf(bool requires_grad) const {
  return Tensor(make_leaf(shape(), node_->data, requires_grad));
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ParameterError("backward: loss must have exactly one element, got shape " +
                         shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Post-order DFS gives a topological order: inputs before consumers.
  std::vector<Node*> tape;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      tape.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : tape) {
    if (n->backward_fn) n->grad.assign(n->data.size(), 0.0);
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm(kernels::default_backend(), Transpose::none, Transpose::none, m, n, k, a.data(),
                b.data(), out, false);
  return make_result("matmul", {m, n}, std::move(out), {a.node(), b.node()},
                     [m, n, k](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       const auto be = kernels::default_backend();
                       if (pa.requires_grad) {
                         kernels::gemm(be, Transpose::none, Transpose::trans, m, k, n, self.grad,
                                       pb.data, pa.grad_buffer(), true);
                       }
                       if (pb.requires_grad) {
                         kernels::gemm(be, Transpose::trans, Transpose::none, k, n, m, pa.data,
                                       self.grad, pb.grad_buffer(), true);
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  const auto ad = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ad[i * c + j];
  return make_result("transpose", {c, r}, std::move(out), {a.node()}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result("reshape", std::move(shape), std::move(out), {a.node()}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(Binary::add, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Binary::sub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Binary::mul, a, b, "mul"); }

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += s;
  return make_result("add_scalar", a.shape(), std::move(out), {a.node()}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return make_result("scale", a.shape(), std::move(out), {a.node()}, [s](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 || std::isnan(v) ? v : 0.0;  // NaN passes through so divergence stays visible
  return make_result("relu", a.shape(), std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.data[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor gelu(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double x = ad[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  return make_result("gelu", a.shape(), std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = p.data[i];
      const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
      const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k) {
    throw ShapeError("linear: inner dimensions disagree, " + shape_str(x.shape()) + " x " +
                     shape_str(w.shape()));
  }
  if (bias.numel() != n) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(n) + " outputs");
  }
  std::vector<double> out(m * n);
  const auto bd = bias.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(bd.begin(), bd.end(), out.begin() + i * n);
  kernels::gemm(kernels::default_backend(), Transpose::none, Transpose::none, m, n, k, x.data(),
                w.data(), out, true);
  return make_result(
      "linear", {m, n}, std::move(out), {x.node(), w.node(), bias.node()}, [m, n, k](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto be = kernels::default_backend();
        if (px.requires_grad) {
          kernels::gemm(be, Transpose::none, Transpose::trans, m, k, n, self.grad, pw.data,
                        px.grad_buffer(), true);
        }
        if (pw.requires_grad) {
          kernels::gemm(be, Transpose::trans, Transpose::none, k, n, m, px.data, self.grad,
                        pw.grad_buffer(), true);
        }
        if (pb.requires_grad) {
          auto& gb = pb.grad_buffer();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
        }
      });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw ShapeError("softmax_lastdim: last dimension must be >= 1, got " + shape_str(x.shape()));
  }
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * d;
    double* o = out.data() + r * d;
    const double mx = *std::max_element(in, in + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < d; ++j) o[j] /= z;
  }
  return make_result("softmax", x.shape(), std::move(out), {x.node()}, [rows, d](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.data.data() + r * d;
      const double* gy = self.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw ShapeError("layer_norm: last dimension must be >= 1, got " + shape_str(x.shape()));
  }
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                     shape_str(bias.shape()) + " do not match width " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  std::vector<double> out(xd.size());
  std::vector<double> xhat(xd.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (in[j] - mu) * rstd[r];
      out[r * d + j] = xhat[r * d + j] * gd[j] + bd[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gy = self.grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          if (pg.requires_grad) {
            auto& gg = pg.grad_buffer();
            for (std::size_t j = 0; j < d; ++j) gg[j] += gy[j] * xh[j];
          }
          if (pb.requires_grad) {
            auto& gb = pb.grad_buffer();
            for (std::size_t j = 0; j < d; ++j) gb[j] += gy[j];
          }
          if (px.requires_grad) {
            auto& gx = px.grad_buffer();
            double mean_g = 0.0, mean_gx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gy[j] * pg.data[j];
              mean_g += dxh;
              mean_gx += dxh * xh[j];
            }
            mean_g *= inv_d;
            mean_gx *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = gy[j] * pg.data[j];
              gx[r * d + j] += rstd[r] * (dxh - mean_g - xh[j] * mean_gx);
            }
          }
        }
      });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_rank2(a, "slice_cols");
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (start + count > c) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " + shape_str(a.shape()));
  }
  const auto ad = a.data();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(ad.begin() + i * c + start, count, out.begin() + i * count);
  return make_result("slice_cols", {r, count}, std::move(out), {a.node()},
                     [r, c, start, count](Node& self) {
                       auto& g = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < count; ++j)
                           g[i * c + start + j] += self.grad[i * count + j];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = parts.front().rank() == 2 ? parts.front().dim(0) : 0;
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  std::vector<std::shared_ptr<Node>> nodes;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.dim(0) != r) {
      throw ShapeError("concat_cols: row count mismatch " + shape_str(parts.front().shape()) +
                       " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
    nodes.push_back(p.node());
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pd = parts[k].data();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(pd.begin() + i * widths[k], widths[k], out.begin() + i * total + offset);
    offset += widths[k];
  }
  return make_result("concat_cols", {r, total}, std::move(out), std::move(nodes),
                     [r, total, widths](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         Node& p = *self.parents[k];
                         if (p.requires_grad) {
                           auto& g = p.grad_buffer();
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < widths[k]; ++j)
                               g[i * widths[k] + j] += self.grad[i * total + off + j];
                         }
                         off += widths[k];
                       }
                     });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("sum", {}, {s}, {a.node()}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean_rows(const Tensor& a) {
  require_rank2(a, "mean_rows");
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (r == 0) throw ShapeError("mean_rows: no rows");
  const auto ad = a.data();
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += ad[i * c + j];
  for (auto& v : out) v /= static_cast<double>(r);
  return make_result("mean_rows", {1, c}, std::move(out), {a.node()}, [r, c](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j] * inv;
  });
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  const std::size_t n = pred.numel();
  if (n == 0) throw ShapeError("mse_loss: empty tensors");
  const auto p = pred.data();
  const auto t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
  return make_result("mse_loss", {}, {acc / static_cast<double>(n)}, {pred.node(), target.node()},
                     [n](Node& self) {
                       Node& pp = *self.parents[0];
                       Node& pt = *self.parents[1];
                       const double k = 2.0 * self.grad[0] / static_cast<double>(n);
                       if (pp.requires_grad) {
                         auto& g = pp.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) g[i] += k * (pp.data[i] - pt.data[i]);
                       }
                       if (pt.requires_grad) {
                         auto& g = pt.grad_buffer();
                         for (std::size_t i = 0; i < n; ++i) g[i] -= k * (pp.data[i] - pt.data[i]);
                       }
                     });
}

}  // namespace cellcount
