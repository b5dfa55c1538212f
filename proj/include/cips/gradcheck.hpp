#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cips/tensor.hpp"

namespace cips {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  /// Entries accepted on a one-sided difference.
  std::size_t one_sided = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t one_sided = 0;
  bool passed = false;
};

/// Relative error used by the checker: |a - n| / max(|a|, |n|, floor).
/// The floor keeps entries whose true gradient is ~0 from dominating.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Compares backward() against central differences for every entry of every
/// parameter, or for `max_entries` evenly spaced entries of larger tensors. `build` must be deterministic and return a scalar; it is run
/// twice up front and a mismatch throws std::runtime_error.
///
/// Graph building runs with gradient recording on, so builders may take
/// gradients themselves (R1).
///
/// A kink (leaky_relu input crossing 0) within h of the evaluation point
/// spoils the central difference. With `one_sided_at_kinks`, an entry whose
/// central difference disagrees is accepted when the forward or backward
/// difference agrees; such entries are counted in `one_sided`.
GradCheckReport finite_diff_check(const std::function<Tensor()>& build,
                                  std::vector<Tensor> params, double h, double tolerance,
                                  const std::vector<std::string>& names = {},
                                  std::size_t max_entries = 0,
                                  bool one_sided_at_kinks = false);

}  // namespace cips
