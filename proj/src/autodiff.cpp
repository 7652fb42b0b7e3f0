#include "deepgrowth/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "deepgrowth/kernels.hpp"

namespace dg::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::span<double> Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (ad::numel(shape) != values.size())
    throw ShapeError("tensor shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

namespace {

// Creates the output node. Parents and the closure are only retained when a
// gradient can flow.
Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  node->requires_grad =
      g_grad_enabled && std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

std::span<double> grad_of(const std::shared_ptr<Node>& n) {
  return n->requires_grad ? n->grad_buffer() : std::span<double>{};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  const auto in = x.values();
  std::vector<double> out(in.size());
  const auto n = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = fwd(in[i]);
  return make_result(x.shape(), std::move(out), op, {x.node()}, [deriv](Node& self) {
    const auto& src = self.parents[0];
    auto g = src->grad_buffer();
    const auto m = static_cast<std::ptrdiff_t>(g.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < m; ++i) g[i] += self.grad[i] * deriv(src->value[i], self.value[i]);
  });
}

}  // namespace

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward() requires a scalar loss, got " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->parents.clear();
    }
  }
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  if (input.rank() != 4 || kernel.rank() != 5 || bias.rank() != 1 ||
      kernel.dim(1) != input.dim(0) || kernel.dim(2) != kernel.dim(3) ||
      kernel.dim(3) != kernel.dim(4) || bias.dim(0) != kernel.dim(0))
    throw ShapeError("conv3d: input " + shape_string(input.shape()) + " incompatible with kernel " +
                     shape_string(kernel.shape()) + " / bias " + shape_string(bias.shape()));
  const std::size_t k = kernel.dim(2);
  if (k % 2 == 0) throw ShapeError("conv3d: kernel size must be odd, got " + std::to_string(k));
  if (stride == 0) throw ShapeError("conv3d: stride must be positive");
  kernels::ConvGeometry g;
  g.in_channels = input.dim(0);
  g.dims = {input.dim(1), input.dim(2), input.dim(3)};
  g.kernel = k;
  g.stride = stride;
  g.padding = padding;
  for (std::size_t a = 0; a < 3; ++a)
    if (g.dims[a] + 2 * padding < k)
      throw ShapeError("conv3d: input " + shape_string(input.shape()) + " smaller than kernel " +
                       shape_string(kernel.shape()));
  const std::size_t c_out = kernel.dim(0);
  Shape out_shape{c_out, g.out_dim(0), g.out_dim(1), g.out_dim(2)};
  std::vector<double> out(numel(out_shape));
  kernels::conv3d_forward(g, c_out, input.values(), kernel.values(), bias.values(), out);
  return make_result(std::move(out_shape), std::move(out), "conv3d",
                     {input.node(), kernel.node(), bias.node()}, [g, c_out](Node& self) {
                       const auto& in = self.parents[0];
                       const auto& w = self.parents[1];
                       const auto& b = self.parents[2];
                       kernels::conv3d_backward(g, c_out, in->value, w->value, self.grad, grad_of(in),
                                                grad_of(w), grad_of(b));
                     });
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() < 1 || weight.rank() != 2 || bias.rank() != 1 ||
      input.shape().back() != weight.dim(1) || bias.dim(0) != weight.dim(0))
    throw ShapeError("linear: input " + shape_string(input.shape()) + " incompatible with weight " +
                     shape_string(weight.shape()) + " / bias " + shape_string(bias.shape()));
  const std::size_t f_in = weight.dim(1), f_out = weight.dim(0);
  const std::size_t rows = input.numel() / f_in;
  Shape out_shape = input.shape();
  out_shape.back() = f_out;
  std::vector<double> out(rows * f_out);
  kernels::linear_forward(rows, f_in, f_out, input.values(), weight.values(), bias.values(), out);
  return make_result(std::move(out_shape), std::move(out), "linear",
                     {input.node(), weight.node(), bias.node()}, [rows, f_in, f_out](Node& self) {
                       const auto& x = self.parents[0];
                       const auto& w = self.parents[1];
                       const auto& b = self.parents[2];
                       kernels::linear_backward(rows, f_in, f_out, x->value, w->value, self.grad,
                                                grad_of(x), grad_of(w), grad_of(b));
                     });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sine(const Tensor& x, double omega) {
  return unary(
      x, "sine", [omega](double v) { return std::sin(omega * v); },
      [omega](double v, double) { return omega * std::cos(omega * v); });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), "add", {a.node(), b.node()}, [](Node& self) {
    for (const auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), "sub", {a.node(), b.node()}, [](Node& self) {
    if (auto g = grad_of(self.parents[0]); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    if (auto g = grad_of(self.parents[1]); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), "mul", {a.node(), b.node()}, [](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (auto g = grad_of(pa); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    if (auto g = grad_of(pb); !g.empty())
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make_result(x.shape(), std::move(out), "scale", {x.node()}, [factor](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double survivor = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? survivor : 0.0;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return make_result(x.shape(), std::move(out), "dropout", {x.node()},
                     [mask = std::move(mask)](Node& self) {
                       auto g = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                     });
}

Tensor concat0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat0: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (p.rank() == 0 || t != tail)
      throw ShapeError("concat0: " + shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
    rows += p.dim(0);
    parents.push_back(p.node());
  }
  Shape out_shape = parts[0].shape();
  out_shape[0] = rows;
  std::vector<double> out;
  out.reserve(numel(out_shape));
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result(std::move(out_shape), std::move(out), "concat0", std::move(parents),
                     [](Node& self) {
                       std::size_t offset = 0;
                       for (const auto& p : self.parents) {
                         const std::size_t n = p->value.size();
                         if (p->requires_grad) {
                           auto g = p->grad_buffer();
                           for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
                         }
                         offset += n;
                       }
                     });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw ShapeError("concat_last: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const std::size_t rows = a.dim(0), fa = a.dim(1), fb = b.dim(1);
  std::vector<double> out(rows * (fa + fb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + r * fa, fa, out.data() + r * (fa + fb));
    std::copy_n(b.values().data() + r * fb, fb, out.data() + r * (fa + fb) + fa);
  }
  return make_result({rows, fa + fb}, std::move(out), "concat_last", {a.node(), b.node()},
                     [rows, fa, fb](Node& self) {
                       if (auto g = grad_of(self.parents[0]); !g.empty())
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < fa; ++i) g[r * fa + i] += self.grad[r * (fa + fb) + i];
                       if (auto g = grad_of(self.parents[1]); !g.empty())
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t i = 0; i < fb; ++i)
                             g[r * fb + i] += self.grad[r * (fa + fb) + fa + i];
                     });
}

Tensor slice0(const Tensor& x, std::size_t begin, std::size_t count) {
  if (x.rank() == 0 || begin + count > x.dim(0))
    throw ShapeError("slice0: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_string(x.shape()));
  const std::size_t row = x.numel() / x.dim(0);
  Shape out_shape = x.shape();
  out_shape[0] = count;
  std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(begin * row),
                          x.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * row));
  return make_result(std::move(out_shape), std::move(out), "slice0", {x.node()},
                     [offset = begin * row](Node& self) {
                       auto g = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < self.grad.size(); ++i) g[offset + i] += self.grad[i];
                     });
}

Tensor broadcast_to_grid(const Tensor& code, std::size_t d, std::size_t h, std::size_t w) {
  if (code.rank() != 1) throw ShapeError("broadcast_to_grid: expected a vector, got " + shape_string(code.shape()));
  const std::size_t k = code.dim(0), plane = d * h * w;
  std::vector<double> out(k * plane);
  for (std::size_t c = 0; c < k; ++c) std::fill_n(out.data() + c * plane, plane, code[c]);
  return make_result({k, d, h, w}, std::move(out), "broadcast_to_grid", {code.node()},
                     [k, plane](Node& self) {
                       auto g = self.parents[0]->grad_buffer();
                       for (std::size_t c = 0; c < k; ++c) {
                         double s = 0.0;
                         for (std::size_t i = 0; i < plane; ++i) s += self.grad[c * plane + i];
                         g[c] += s;
                       }
                     });
}

Tensor upsample2(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("upsample2: expected [C,D,H,W], got " + shape_string(x.shape()));
  const std::size_t C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  Shape out_shape{C, 2 * D, 2 * H, 2 * W};
  std::vector<double> out(numel(out_shape));
  auto src_index = [=](std::size_t c, std::size_t z, std::size_t y, std::size_t xx) {
    return ((c * D + z / 2) * H + y / 2) * W + xx / 2;
  };
  std::size_t o = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t z = 0; z < 2 * D; ++z)
      for (std::size_t y = 0; y < 2 * H; ++y)
        for (std::size_t xx = 0; xx < 2 * W; ++xx) out[o++] = x[src_index(c, z, y, xx)];
  return make_result(std::move(out_shape), std::move(out), "upsample2", {x.node()},
                     [=](Node& self) {
                       auto g = self.parents[0]->grad_buffer();
                       std::size_t i = 0;
                       for (std::size_t c = 0; c < C; ++c)
                         for (std::size_t z = 0; z < 2 * D; ++z)
                           for (std::size_t y = 0; y < 2 * H; ++y)
                             for (std::size_t xx = 0; xx < 2 * W; ++xx) g[src_index(c, z, y, xx)] += self.grad[i++];
                     });
}

Tensor grid_sample_trilinear(const Tensor& grid, const Tensor& points) {
  if (grid.rank() != 4 || points.rank() != 2 || points.dim(1) != 3)
    throw ShapeError("grid_sample_trilinear: grid " + shape_string(grid.shape()) + " / points " +
                     shape_string(points.shape()));
  for (double v : points.values())
    if (std::isnan(v)) throw NonFiniteError("grid_sample_trilinear: NaN coordinate");
  const std::size_t C = grid.dim(0), P = points.dim(0);
  const std::array<std::size_t, 3> dims{grid.dim(1), grid.dim(2), grid.dim(3)};
  std::vector<double> out(P * C);
  kernels::trilinear_sample(C, dims, grid.values(), points.values(), out);
  return make_result({P, C}, std::move(out), "grid_sample_trilinear", {grid.node(), points.node()},
                     [C, dims](Node& self) {
                       const auto& g = self.parents[0];
                       const auto& p = self.parents[1];
                       kernels::trilinear_sample_backward(C, dims, g->value, p->value, self.grad,
                                                          grad_of(g), grad_of(p));
                     });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_result({1}, {s}, "sum", {x.node()}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor l1_mean(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "l1_mean");
  if (a.numel() == 0) throw ShapeError("l1_mean of empty tensors");
  const double inv_n = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
  return make_result({1}, {s * inv_n}, "l1_mean", {a.node(), b.node()}, [inv_n](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    const double go = self.grad[0] * inv_n;
    auto ga = grad_of(pa);
    auto gb = grad_of(pb);
    for (std::size_t i = 0; i < pa->value.size(); ++i) {
      const double diff = pa->value[i] - pb->value[i];
      const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      if (!ga.empty()) ga[i] += go * sgn;
      if (!gb.empty()) gb[i] -= go * sgn;
    }
  });
}

Tensor l2_norm_mean(const std::vector<Tensor>& tensors) {
  if (tensors.empty()) throw ShapeError("l2_norm_mean: no tensors");
  const double inv_n = 1.0 / static_cast<double>(tensors.size());
  std::vector<double> norms;
  std::vector<std::shared_ptr<Node>> parents;
  double total = 0.0;
  for (const auto& t : tensors) {
    double s = 0.0;
    for (double v : t.values()) s += v * v;
    norms.push_back(std::sqrt(s));
    total += norms.back();
    parents.push_back(t.node());
  }
  return make_result({1}, {total * inv_n}, "l2_norm_mean", std::move(parents),
                     [inv_n, norms = std::move(norms)](Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         const auto& p = self.parents[k];
                         if (!p->requires_grad || norms[k] == 0.0) continue;  // subgradient 0 at the origin
                         auto g = p->grad_buffer();
                         const double f = self.grad[0] * inv_n / norms[k];
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += f * p->value[i];
                       }
                     });
}

Tensor weighted_sum(const std::vector<Tensor>& scalars, const std::vector<double>& weights) {
  if (scalars.size() != weights.size() || scalars.empty())
    throw ShapeError("weighted_sum: " + std::to_string(scalars.size()) + " scalars vs " +
                     std::to_string(weights.size()) + " weights");
  double total = 0.0;
  std::vector<std::shared_ptr<Node>> parents;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].numel() != 1) throw ShapeError("weighted_sum: non-scalar term");
    total += weights[i] * scalars[i].item();
    parents.push_back(scalars[i].node());
  }
  return make_result({1}, {total}, "weighted_sum", std::move(parents), [weights](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      if (self.parents[i]->requires_grad) self.parents[i]->grad_buffer()[0] += weights[i] * self.grad[0];
  });
}

}  // namespace dg::ad
