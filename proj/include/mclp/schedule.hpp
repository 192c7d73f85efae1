#pragma once

#include <cstdint>

namespace mclp {

// Learning rate: linear warmup from zero over warmup steps, then a cosine
// glide from base down to zero across the remaining steps. step is the
// 0-based index of the update being taken.
double lr_at(double base, std::int64_t warmup, std::int64_t step,
             std::int64_t total);

// Teacher momentum: cosine ramp from start at step 0 to final at the last
// step. start <= final in normal use, but the formula does not care.
double momentum_at(double start, double final_value, std::int64_t step,
                   std::int64_t total);

// One multiplicative decay of the assignment temperature, clamped at the
// floor. Callers keep the running value as trainer state.
double anneal_tau(double tau, double eta, double floor);

}  // namespace mclp
