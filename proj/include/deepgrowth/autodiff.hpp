#pragma once

// Minimal tensor-level reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node holding row-major real64
// values. Ops record a backward closure on their output; backward() walks the
// graph in reverse topological order and accumulates gradients into every node
// that requires them. A graph is meant to be differentiated once: backward()
// releases the closures of interior nodes so the activations can be freed.

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dg::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN where a finite input is required.
class NonFiniteError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  std::span<double> grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  /// Direct write access; only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_values() { return node_->value; }
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  /// Copies values into a new leaf that does not require grad.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Seeds d(loss)/d(loss) = 1 and propagates. loss must hold one element.
void backward(const Tensor& loss);

/// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

// --- convolution / dense -------------------------------------------------

/// input [C_in,D,H,W], kernel [C_out,C_in,k,k,k], bias [C_out].
Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              std::size_t stride = 1, std::size_t padding = 0);

/// Affine map over the last dimension: input [..., F_in], weight [F_out, F_in].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// --- pointwise ----------------------------------------------------------------

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
/// sin(omega * x)
Tensor sine(const Tensor& x, double omega);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// Inverted dropout: identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);

// --- structural ---------------------------------------------------------------

/// Concatenates along dimension 0; trailing dimensions must agree.
Tensor concat0(const std::vector<Tensor>& parts);
/// Concatenates two [P, *] tensors along the last dimension.
Tensor concat_last(const Tensor& a, const Tensor& b);
/// Rows [begin, begin + count) of dimension 0.
Tensor slice0(const Tensor& x, std::size_t begin, std::size_t count);
/// Broadcasts a [K] vector to [K, d, h, w].
Tensor broadcast_to_grid(const Tensor& code, std::size_t d, std::size_t h, std::size_t w);
/// Nearest-neighbour x2 upsampling of [C,D,H,W].
Tensor upsample2(const Tensor& x);

// --- sampling -------------------------------------------------------------------

/// Corner-aligned trilinear interpolation of grid [C,d,h,w] at points [P,3].
/// Coordinate k addresses grid axis k + 1; -1 -> first node, +1 -> last node;
/// outside points clamp to the boundary. Returns [P, C].
Tensor grid_sample_trilinear(const Tensor& grid, const Tensor& points);

// --- reductions / losses -------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// mean |a - b| over all elements; subgradient 0 where a == b.
Tensor l1_mean(const Tensor& a, const Tensor& b);
/// Mean over tensors of the Euclidean norm of each flattened tensor.
Tensor l2_norm_mean(const std::vector<Tensor>& tensors);
/// sum_i weights[i] * scalars[i]
Tensor weighted_sum(const std::vector<Tensor>& scalars, const std::vector<double>& weights);

}  // namespace dg::ad
