#ifndef SEPTR_TENSOR_HPP
#define SEPTR_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace septr {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& s);
std::size_t shape_numel(const Shape& s);

class Tape;

/// Dense row-major tensor of doubles with reverse-mode autodiff.
/// Copies are shallow: a Tensor is a handle to a shared node, so gradients
/// written by backward() are visible through every copy of the handle.
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated lazily; same length as values
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Consumes this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    std::size_t numel() const { return values.size(); }
    void ensure_grad() {
      if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->values.size(); }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;

  void zero_grad();
  /// Throws if any value is NaN or Inf.
  void check_finite(const std::string& context) const;

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Records differentiable ops in application order. Ops record onto the
/// innermost live Tape; with no live Tape they run in inference mode and
/// build no graph. backward() replays the recorded ops once, in reverse;
/// a second backward() without reset() is rejected.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(std::shared_ptr<Tensor::Node> node);
  void backward(const Tensor& loss);
  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<Tensor::Node>> nodes_;
  bool consumed_ = false;
  Tape* outer_ = nullptr;
};

// ---- primitive ops ----

Tensor add(const Tensor& a, const Tensor& b);
/// x[..., d] + b[d]
Tensor add_bias(const Tensor& x, const Tensor& b);
/// x[B..., s...] + t[s...] where t's shape is a suffix of x's.
Tensor add_broadcast(const Tensor& x, const Tensor& t);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a[..., m, p] x b[..., p, q]; batch dims must match, or b may be rank 2
/// (broadcast over a's batch dims).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last(const Tensor& a);
/// Swap the first two axes of a rank-3 tensor.
Tensor transpose_01(const Tensor& a);
/// Softmax over the last axis, stabilized by row-max subtraction.
Tensor softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t len);
/// Replicate t[s...] into [n, s...].
Tensor tile_leading(const Tensor& t, std::size_t n);
/// Mean over batch of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);
/// Soft-label variant: targets[b, C] are per-class probabilities.
Tensor cross_entropy_soft(const Tensor& logits, const Tensor& targets);

}  // namespace septr

#endif  // SEPTR_TENSOR_HPP
