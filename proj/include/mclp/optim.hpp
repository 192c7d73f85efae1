#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mclp/param_map.hpp"

namespace mclp {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // Guard against silently training on NaNs; costs one pass over the params.
  bool check_finite = true;
};

// AdamW with decoupled weight decay and bias correction. Decay applies only
// to rank-2 weight matrices whose name does not mention a positional table;
// biases, norms, tokens, and positional embeddings are never decayed.
struct OptimizerState {
  AdamWConfig cfg;
  std::int64_t step_count = 0;

  struct Slot {
    std::string name;
    std::vector<double> m;
    std::vector<double> v;
    bool decay = false;
  };
  std::vector<Slot> slots;
};

OptimizerState make_optimizer(const ParamMap& params, AdamWConfig cfg);

// One update over all registered parameters. Every parameter must carry a
// gradient buffer (zero_grad() allocates one); a missing buffer is an error.
void adamw_step(ParamMap& params, OptimizerState& state);

// In-place momentum update, slow' = lambda * slow + (1 - lambda) * fast.
// The endpoints are handled exactly: lambda 1 leaves slow untouched bit for
// bit, lambda 0 copies fast. Maps must agree in names, order, and shapes.
void ema_update(ParamMap& slow, const ParamMap& fast, double lambda);

}  // namespace mclp
