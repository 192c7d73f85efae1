#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "mclp/param_map.hpp"
#include "mclp/tensor.hpp"

namespace mclp {

struct GradCheckOptions {
  double h = 1e-5;    // central-difference step
  double tol = 1e-4;  // max allowed relative error
  // Per-tensor cap on probed entries; small tensors are probed exhaustively.
  int max_entries_per_tensor = 40;
  std::uint64_t seed = 7;
  // Multiplies the analytic gradient of the first parameter. Anything other
  // than 1.0 is a deliberate fault used to prove the checker can fail.
  double fault_scale = 1.0;
};

struct GradCheckReport {
  bool pass = false;
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_entry = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::int64_t entries_checked = 0;
};

// Compares reverse-mode gradients of loss_fn against central finite
// differences. loss_fn must rebuild the loss from the current parameter
// values on every call and be deterministic. Relative error is
// |a - n| / max(1, |a|, |n|), so near-zero gradients compare absolutely.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           ParamMap& params, const GradCheckOptions& opt = {});

}  // namespace mclp
