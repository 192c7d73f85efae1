#pragma once

#include <cstdint>

#include "mclp/grad_check.hpp"
#include "mclp/objectives.hpp"

namespace mclp {

struct MicroCheckOptions {
  HypothesisStrategy strategy = HypothesisStrategy::annealed;
  std::uint64_t seed = 7;
  // Scales one analytic gradient entry; anything but 1 must fail the check.
  double fault_scale = 1.0;
  int max_entries_per_tensor = 40;
  double tolerance = 1e-4;
};

// Finite-difference check of the complete combined objective on a micro
// model: 8-dim latents, two guesses, seven classes, three masked positions.
// Covers the patch embedding, attention, the predictor heads, the chosen
// guess-collapse strategy, and the classification pretext in one pass.
GradCheckReport micro_gradient_check(const MicroCheckOptions& opt);

}  // namespace mclp
