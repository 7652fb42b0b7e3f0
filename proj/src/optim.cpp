#include "deepgrowth/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dg::ad {

Tensor ParameterSet::add(std::string name, Tensor t) {
  for (const auto& [n, _] : entries_)
    if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.emplace_back(std::move(name), t);
  return t;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [_, t] : entries_) out.push_back(t);
  return out;
}

Tensor ParameterSet::find(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw std::out_of_range("no parameter named " + name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [_, t] : entries_) t.zero_grad();
}

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.m.empty() && state.v.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                                " parameters, got " + std::to_string(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k)
    if (state.m[k].size() != params[k].numel() || state.v[k].size() != params[k].numel())
      throw std::invalid_argument("adam_step: moment shape mismatch for parameter " + std::to_string(k));

  state.step_count += 1;
  const auto t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    const auto grad = params[k].grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace dg::ad
