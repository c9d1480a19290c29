#include "septr/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace septr {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

namespace {

thread_local Tape* g_current_tape = nullptr;

[[noreturn]] void shape_error(const std::string& op, const Shape& a,
                              const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " +
                              shape_to_string(a) + " and " +
                              shape_to_string(b));
}

bool grad_enabled(std::initializer_list<const Tensor*> inputs) {
  if (!g_current_tape) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<std::shared_ptr<Tensor::Node>> parents,
                   std::function<void(Tensor::Node&)> backward_fn,
                   bool track) {
  auto node = std::make_shared<Tensor::Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
    g_current_tape->record(node);
  }
  return Tensor(std::move(node));
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw std::invalid_argument("Tensor: shape " + shape_to_string(shape) +
                                " does not match " +
                                std::to_string(values.size()) + " values");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1)
    throw std::logic_error("item(): tensor has " + std::to_string(numel()) +
                           " elements");
  return node_->values[0];
}

void Tensor::zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }

void Tensor::check_finite(const std::string& context) const {
  for (double v : node_->values)
    if (!std::isfinite(v))
      throw std::runtime_error(context + ": non-finite tensor value");
}

// ---- Tape ----

Tape::Tape() : outer_(g_current_tape) { g_current_tape = this; }

Tape::~Tape() { g_current_tape = outer_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::record(std::shared_ptr<Tensor::Node> node) {
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw std::logic_error("backward: loss must be scalar, got " +
                           shape_to_string(loss.shape()));
  if (consumed_)
    throw std::logic_error("backward: tape already consumed; call reset()");
  consumed_ = true;
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Tensor::Node& n = **it;
    if (n.grad.empty()) continue;  // not reachable from the loss
    if (n.backward_fn) n.backward_fn(n);
  }
}

void Tape::reset() {
  // Drop intermediate grads so a rebuilt graph starts clean; leaf grads
  // live on the leaves themselves and are untouched.
  for (auto& n : nodes_) n->grad.clear();
  nodes_.clear();
  consumed_ = false;
}

// ---- ops ----

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] + b.values()[i];
  bool track = grad_enabled({&a, &b});
  auto an = a.node(), bn = b.node();
  return make_result(
      a.shape(), std::move(out), {an, bn},
      [an, bn](Tensor::Node& n) {
        an->ensure_grad();
        bn->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          an->grad[i] += n.grad[i];
          bn->grad[i] += n.grad[i];
        }
      },
      track);
}

Tensor add_broadcast(const Tensor& x, const Tensor& t) {
  const Shape& xs = x.shape();
  const Shape& ts = t.shape();
  if (ts.size() > xs.size() ||
      !std::equal(ts.rbegin(), ts.rend(), xs.rbegin()))
    shape_error("add_broadcast", xs, ts);
  const std::size_t tn = t.numel();
  const std::size_t reps = x.numel() / tn;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < reps; ++r) {
    const double* xv = x.values().data() + r * tn;
    double* o = out.data() + r * tn;
    for (std::size_t i = 0; i < tn; ++i) o[i] = xv[i] + t.values()[i];
  }
  bool track = grad_enabled({&x, &t});
  auto xn = x.node(), tn_node = t.node();
  return make_result(
      xs, std::move(out), {xn, tn_node},
      [xn, tn_node, tn, reps](Tensor::Node& n) {
        xn->ensure_grad();
        tn_node->ensure_grad();
        for (std::size_t r = 0; r < reps; ++r) {
          const double* g = n.grad.data() + r * tn;
          double* xg = xn->grad.data() + r * tn;
          for (std::size_t i = 0; i < tn; ++i) {
            xg[i] += g[i];
            tn_node->grad[i] += g[i];
          }
        }
      },
      track);
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  if (b.rank() != 1 || x.shape().back() != b.shape()[0])
    shape_error("add_bias", x.shape(), b.shape());
  return add_broadcast(x, b);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  bool track = grad_enabled({&a, &b});
  auto an = a.node(), bn = b.node();
  return make_result(
      a.shape(), std::move(out), {an, bn},
      [an, bn](Tensor::Node& n) {
        an->ensure_grad();
        bn->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          an->grad[i] += n.grad[i] * bn->values[i];
          bn->grad[i] += n.grad[i] * an->values[i];
        }
      },
      track);
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  bool track = grad_enabled({&a});
  auto an = a.node();
  return make_result(
      a.shape(), std::move(out), {an},
      [an, s](Tensor::Node& n) {
        an->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          an->grad[i] += n.grad[i] * s;
      },
      track);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) shape_error("matmul", as, bs);
  const std::size_t m = as[as.size() - 2];
  const std::size_t p = as[as.size() - 1];
  const std::size_t q = bs[bs.size() - 1];
  if (bs[bs.size() - 2] != p) shape_error("matmul", as, bs);
  const bool b_broadcast = bs.size() == 2 && as.size() > 2;
  if (!b_broadcast &&
      !std::equal(as.begin(), as.end() - 2, bs.begin(), bs.end() - 2))
    shape_error("matmul", as, bs);

  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];

  Shape out_shape(as.begin(), as.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(q);
  std::vector<double> out(batch * m * q);

  if (b_broadcast || as.size() == 2) {
    ConstMatMap A(a.values().data(), batch * m, p);
    ConstMatMap B(b.values().data(), p, q);
    MatMap(out.data(), batch * m, q).noalias() = A * B;
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMatMap A(a.values().data() + i * m * p, m, p);
      ConstMatMap B(b.values().data() + i * p * q, p, q);
      MatMap(out.data() + i * m * q, m, q).noalias() = A * B;
    }
  }

  bool track = grad_enabled({&a, &b});
  auto an = a.node(), bn = b.node();
  return make_result(
      std::move(out_shape), std::move(out), {an, bn},
      [an, bn, batch, m, p, q, b_broadcast](Tensor::Node& n) {
        an->ensure_grad();
        bn->ensure_grad();
        if (b_broadcast || batch == 1) {
          ConstMatMap G(n.grad.data(), batch * m, q);
          ConstMatMap A(an->values.data(), batch * m, p);
          ConstMatMap B(bn->values.data(), p, q);
          MatMap(an->grad.data(), batch * m, p).noalias() +=
              G * B.transpose();
          MatMap(bn->grad.data(), p, q).noalias() += A.transpose() * G;
        } else {
          for (std::size_t i = 0; i < batch; ++i) {
            ConstMatMap G(n.grad.data() + i * m * q, m, q);
            ConstMatMap A(an->values.data() + i * m * p, m, p);
            ConstMatMap B(bn->values.data() + i * p * q, p, q);
            MatMap(an->grad.data() + i * m * p, m, p).noalias() +=
                G * B.transpose();
            MatMap(bn->grad.data() + i * p * q, p, q).noalias() +=
                A.transpose() * G;
          }
        }
      },
      track);
}

Tensor transpose_last(const Tensor& a) {
  const Shape& as = a.shape();
  if (as.size() < 2)
    throw std::invalid_argument("transpose_last: rank must be >= 2, got " +
                                shape_to_string(as));
  const std::size_t r = as[as.size() - 2];
  const std::size_t c = as[as.size() - 1];
  std::size_t batch = a.numel() / (r * c);
  Shape out_shape = as;
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMatMap A(a.values().data() + i * r * c, r, c);
    MatMap(out.data() + i * r * c, c, r) = A.transpose();
  }
  bool track = grad_enabled({&a});
  auto an = a.node();
  return make_result(
      std::move(out_shape), std::move(out), {an},
      [an, batch, r, c](Tensor::Node& n) {
        an->ensure_grad();
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMatMap G(n.grad.data() + i * r * c, c, r);
          MatMap(an->grad.data() + i * r * c, r, c) += G.transpose();
        }
      },
      track);
}

Tensor transpose_01(const Tensor& a) {
  if (a.rank() != 3)
    throw std::invalid_argument("transpose_01: rank-3 tensor required, got " +
                                shape_to_string(a.shape()));
  const std::size_t d0 = a.shape()[0], d1 = a.shape()[1], d2 = a.shape()[2];
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < d0; ++i)
    for (std::size_t j = 0; j < d1; ++j)
      std::copy_n(a.values().data() + (i * d1 + j) * d2, d2,
                  out.data() + (j * d0 + i) * d2);
  bool track = grad_enabled({&a});
  auto an = a.node();
  return make_result(
      Shape{d1, d0, d2}, std::move(out), {an},
      [an, d0, d1, d2](Tensor::Node& n) {
        an->ensure_grad();
        for (std::size_t i = 0; i < d0; ++i)
          for (std::size_t j = 0; j < d1; ++j) {
            const double* g = n.grad.data() + (j * d0 + i) * d2;
            double* dst = an->grad.data() + (i * d1 + j) * d2;
            for (std::size_t k = 0; k < d2; ++k) dst[k] += g[k];
          }
      },
      track);
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() < 1 || x.shape().back() < 1)
    throw std::invalid_argument("softmax_rows: empty last axis in " +
                                shape_to_string(x.shape()));
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values().data() + r * d;
    double* o = out.data() + r * d;
    double mx = *std::max_element(in, in + d);
    double sum = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      o[i] = std::exp(in[i] - mx);
      sum += o[i];
    }
    for (std::size_t i = 0; i < d; ++i) o[i] /= sum;
  }
  bool track = grad_enabled({&x});
  auto xn = x.node();
  std::vector<double> saved = out;
  return make_result(
      x.shape(), std::move(out), {xn},
      [xn, d, rows, saved = std::move(saved)](Tensor::Node& n) {
        xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* s = saved.data() + r * d;
          const double* g = n.grad.data() + r * d;
          double dot = 0.0;
          for (std::size_t i = 0; i < d; ++i) dot += g[i] * s[i];
          double* dst = xn->grad.data() + r * d;
          for (std::size_t i = 0; i < d; ++i) dst[i] += s[i] * (g[i] - dot);
        }
      },
      track);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    shape_error("layer_norm", x.shape(), gamma.shape());
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.values().data() + r * d;
    double mean = std::accumulate(in, in + d, 0.0) / double(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= double(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      double xh = (in[i] - mean) * is;
      xhat[r * d + i] = xh;
      out[r * d + i] = xh * gamma.values()[i] + beta.values()[i];
    }
  }
  bool track = grad_enabled({&x, &gamma, &beta});
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_result(
      x.shape(), std::move(out), {xn, gn, bn},
      [xn, gn, bn, d, rows, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Tensor::Node& n) {
        xn->ensure_grad();
        gn->ensure_grad();
        bn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = n.grad.data() + r * d;
          const double* xh = xhat.data() + r * d;
          double mean_dxh = 0.0, mean_dxh_xh = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            double dxh = g[i] * gn->values[i];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[i];
            gn->grad[i] += g[i] * xh[i];
            bn->grad[i] += g[i];
          }
          mean_dxh /= double(d);
          mean_dxh_xh /= double(d);
          double* dst = xn->grad.data() + r * d;
          for (std::size_t i = 0; i < d; ++i) {
            double dxh = g[i] * gn->values[i];
            dst[i] += inv_std[r] * (dxh - mean_dxh - xh[i] * mean_dxh_xh);
          }
        }
      },
      track);
}

Tensor gelu(const Tensor& x) {
  bool track = grad_enabled({&x});
  std::vector<double> out(x.numel());
  std::vector<double> cdf;  // saved for the backward pass when tracking
  if (track) cdf.resize(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = x.values()[i];
    double c = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
    if (track) cdf[i] = c;
    out[i] = v * c;
  }
  auto xn = x.node();
  return make_result(
      x.shape(), std::move(out), {xn},
      [xn, cdf = std::move(cdf)](Tensor::Node& n) {
        xn->ensure_grad();
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
          double v = xn->values[i];
          double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
          xn->grad[i] += n.grad[i] * (cdf[i] + v * pdf);
        }
      },
      track);
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank())
    throw std::out_of_range("mean_axis: axis " + std::to_string(axis) +
                            " out of range for " + shape_to_string(x.shape()));
  const Shape& xs = x.shape();
  const std::size_t extent = xs[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xs[i];
  for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];
  Shape out_shape;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (i != axis) out_shape.push_back(xs[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e)
      for (std::size_t i = 0; i < inner; ++i)
        out[o * inner + i] += x.values()[(o * extent + e) * inner + i];
  for (double& v : out) v /= double(extent);
  bool track = grad_enabled({&x});
  auto xn = x.node();
  return make_result(
      std::move(out_shape), std::move(out), {xn},
      [xn, outer, extent, inner](Tensor::Node& n) {
        xn->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t e = 0; e < extent; ++e)
            for (std::size_t i = 0; i < inner; ++i)
              xn->grad[(o * extent + e) * inner + i] +=
                  n.grad[o * inner + i] / double(extent);
      },
      track);
}

Tensor sum_all(const Tensor& x) {
  double s = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  bool track = grad_enabled({&x});
  auto xn = x.node();
  return make_result(
      Shape{1}, {s}, {xn},
      [xn](Tensor::Node& n) {
        xn->ensure_grad();
        for (double& g : xn->grad) g += n.grad[0];
      },
      track);
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel())
    shape_error("reshape", x.shape(), new_shape);
  bool track = grad_enabled({&x});
  auto xn = x.node();
  return make_result(
      std::move(new_shape), x.values(), {xn},
      [xn](Tensor::Node& n) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
          xn->grad[i] += n.grad[i];
      },
      track);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size())
    throw std::out_of_range("concat: axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& ps = p.shape();
    if (ps.size() != s0.size()) shape_error("concat", s0, ps);
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (i != axis && ps[i] != s0[i]) shape_error("concat", s0, ps);
    out_shape[axis] += ps[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  const std::size_t out_axis = out_shape[axis];
  std::vector<double> out(outer * out_axis * inner);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t pa = p.shape()[axis];
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.values().data() + o * pa * inner, pa * inner,
                  out.data() + (o * out_axis + offset) * inner);
    offset += pa;
  }
  bool track = g_current_tape != nullptr &&
               std::any_of(parts.begin(), parts.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
  std::vector<std::shared_ptr<Tensor::Node>> pnodes;
  for (const Tensor& p : parts) pnodes.push_back(p.node());
  std::vector<std::size_t> extents;
  for (const Tensor& p : parts) extents.push_back(p.shape()[axis]);
  return make_result(
      std::move(out_shape), std::move(out), pnodes,
      [pnodes, offsets, extents, outer, inner, out_axis](Tensor::Node& n) {
        for (std::size_t pi = 0; pi < pnodes.size(); ++pi) {
          auto& pn = pnodes[pi];
          pn->ensure_grad();
          const std::size_t pa = extents[pi];
          for (std::size_t o = 0; o < outer; ++o) {
            const double* g =
                n.grad.data() + (o * out_axis + offsets[pi]) * inner;
            double* dst = pn->grad.data() + o * pa * inner;
            for (std::size_t i = 0; i < pa * inner; ++i) dst[i] += g[i];
          }
        }
      },
      track);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t len) {
  const Shape& xs = x.shape();
  if (axis >= xs.size() || start + len > xs[axis])
    throw std::out_of_range("slice: range [" + std::to_string(start) + ", " +
                            std::to_string(start + len) +
                            ") out of bounds for " + shape_to_string(xs));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xs[i];
  for (std::size_t i = axis + 1; i < xs.size(); ++i) inner *= xs[i];
  const std::size_t extent = xs[axis];
  Shape out_shape = xs;
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.values().data() + (o * extent + start) * inner, len * inner,
                out.data() + o * len * inner);
  bool track = grad_enabled({&x});
  auto xn = x.node();
  return make_result(
      std::move(out_shape), std::move(out), {xn},
      [xn, outer, inner, extent, start, len](Tensor::Node& n) {
        xn->ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* g = n.grad.data() + o * len * inner;
          double* dst = xn->grad.data() + (o * extent + start) * inner;
          for (std::size_t i = 0; i < len * inner; ++i) dst[i] += g[i];
        }
      },
      track);
}

Tensor tile_leading(const Tensor& t, std::size_t n) {
  const std::size_t tn = t.numel();
  Shape out_shape;
  out_shape.push_back(n);
  for (auto e : t.shape()) out_shape.push_back(e);
  std::vector<double> out(n * tn);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(t.values().data(), tn, out.data() + i * tn);
  bool track = grad_enabled({&t});
  auto tnode = t.node();
  return make_result(
      std::move(out_shape), std::move(out), {tnode},
      [tnode, n, tn](Tensor::Node& node) {
        tnode->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < tn; ++j)
            tnode->grad[j] += node.grad[i * tn + j];
      },
      track);
}

namespace {

// Log-softmax probabilities per row, returned as plain values.
std::vector<double> row_softmax_values(const Tensor& logits) {
  const std::size_t C = logits.shape().back();
  const std::size_t b = logits.numel() / C;
  std::vector<double> probs(logits.numel());
  for (std::size_t r = 0; r < b; ++r) {
    const double* in = logits.values().data() + r * C;
    double mx = *std::max_element(in, in + C);
    double sum = 0.0;
    for (std::size_t i = 0; i < C; ++i) {
      probs[r * C + i] = std::exp(in[i] - mx);
      sum += probs[r * C + i];
    }
    for (std::size_t i = 0; i < C; ++i) probs[r * C + i] /= sum;
  }
  return probs;
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy: logits must be [batch x C]");
  const std::size_t b = logits.shape()[0];
  const std::size_t C = logits.shape()[1];
  if (labels.size() != b)
    throw std::invalid_argument("cross_entropy: batch size mismatch");
  for (int l : labels)
    if (l < 0 || std::size_t(l) >= C)
      throw std::out_of_range("cross_entropy: label " + std::to_string(l) +
                              " outside [0, " + std::to_string(C) + ")");
  auto probs = row_softmax_values(logits);
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r)
    loss -= std::log(probs[r * C + labels[r]]);
  loss /= double(b);
  bool track = grad_enabled({&logits});
  auto ln = logits.node();
  return make_result(
      Shape{1}, {loss}, {ln},
      [ln, labels, b, C, probs = std::move(probs)](Tensor::Node& n) {
        ln->ensure_grad();
        const double g = n.grad[0] / double(b);
        for (std::size_t r = 0; r < b; ++r)
          for (std::size_t c = 0; c < C; ++c)
            ln->grad[r * C + c] +=
                g * (probs[r * C + c] - (int(c) == labels[r] ? 1.0 : 0.0));
      },
      track);
}

Tensor cross_entropy_soft(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape() || logits.rank() != 2)
    shape_error("cross_entropy_soft", logits.shape(), targets.shape());
  const std::size_t b = logits.shape()[0];
  const std::size_t C = logits.shape()[1];
  auto probs = row_softmax_values(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    loss -= targets.values()[i] * std::log(probs[i]);
  loss /= double(b);
  bool track = grad_enabled({&logits});
  auto ln = logits.node();
  auto tn = targets.node();
  return make_result(
      Shape{1}, {loss}, {ln},
      [ln, tn, b, C, probs = std::move(probs)](Tensor::Node& n) {
        ln->ensure_grad();
        const double g = n.grad[0] / double(b);
        for (std::size_t r = 0; r < b; ++r) {
          double tsum = 0.0;
          for (std::size_t c = 0; c < C; ++c) tsum += tn->values[r * C + c];
          for (std::size_t c = 0; c < C; ++c)
            ln->grad[r * C + c] +=
                g * (tsum * probs[r * C + c] - tn->values[r * C + c]);
        }
      },
      track);
}

}  // namespace septr
