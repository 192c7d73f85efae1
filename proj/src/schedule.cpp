#include "mclp/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "mclp/error.hpp"

namespace mclp {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double lr_at(double base, std::int64_t warmup, std::int64_t step,
             std::int64_t total) {
  if (total <= 0) throw ConfigError("lr_at: non-positive step count");
  if (step < 0 || step >= total)
    throw UsageError("lr_at: step outside the run");
  if (warmup < 0 || warmup >= total)
    throw ConfigError("lr_at: warmup must sit inside the run");
  if (step < warmup)
    return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double u = static_cast<double>(step - warmup) /
                   static_cast<double>(total - warmup);
  return base * 0.5 * (1.0 + std::cos(kPi * u));
}

double momentum_at(double start, double final_value, std::int64_t step,
                   std::int64_t total) {
  if (total <= 0) throw ConfigError("momentum_at: non-positive step count");
  if (step < 0 || step >= total)
    throw UsageError("momentum_at: step outside the run");
  const double u = total == 1 ? 1.0
                              : static_cast<double>(step) /
                                    static_cast<double>(total - 1);
  return final_value -
         (final_value - start) * 0.5 * (std::cos(kPi * u) + 1.0);
}

double anneal_tau(double tau, double eta, double floor) {
  if (eta <= 0.0 || eta > 1.0)
    throw ConfigError("anneal_tau: decay factor outside (0,1]");
  return std::max(floor, tau * eta);
}

}  // namespace mclp
