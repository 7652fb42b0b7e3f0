#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "deepgrowth/autodiff.hpp"

namespace dg::ad {

/// Named, ordered collection of trainable leaves.
class ParameterSet {
 public:
  Tensor add(std::string name, Tensor t);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  /// Throws std::out_of_range for an unknown name.
  Tensor find(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

struct AdamState {
  std::uint64_t step_count = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<double>> m;  // one moment buffer per parameter
  std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam update. Parameters without an accumulated gradient are
/// treated as having a zero gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace dg::ad
