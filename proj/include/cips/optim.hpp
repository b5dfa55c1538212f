#pragma once

#include <cstdint>
#include <vector>

#include "cips/tensor.hpp"

namespace cips {

/// Bias-corrected Adam. Defaults are the generator/discriminator settings:
/// lr 2e-3, beta1 0, beta2 0.99, eps 1e-8.
struct AdamState {
  std::int64_t step_count = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  double lr = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;

  /// Zero moments shaped like `params`.
  static AdamState for_params(const std::vector<Tensor>& params, double lr = 2e-3,
                              double beta1 = 0.0, double beta2 = 0.99, double eps = 1e-8);
};

/// Updates every leaf in `params` in place from the aligned `grads`.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state);

}  // namespace cips
