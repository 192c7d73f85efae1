#include "mclp/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mclp/error.hpp"

namespace mclp {

OptimizerState make_optimizer(const ParamMap& params, AdamWConfig cfg) {
  OptimizerState st;
  st.cfg = cfg;
  st.slots.reserve(params.size());
  for (const auto& [name, t] : params.items) {
    OptimizerState::Slot slot;
    slot.name = name;
    slot.m.assign(static_cast<std::size_t>(t.numel()), 0.0);
    slot.v.assign(static_cast<std::size_t>(t.numel()), 0.0);
    slot.decay = t.rank() == 2 && name.find("pos") == std::string::npos;
    st.slots.push_back(std::move(slot));
  }
  return st;
}

void adamw_step(ParamMap& params, OptimizerState& st) {
  if (st.slots.size() != params.size())
    throw UsageError("adamw_step: optimizer state does not match parameters");
  st.step_count += 1;
  const double t = static_cast<double>(st.step_count);
  const double bc1 = 1.0 - std::pow(st.cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(st.cfg.beta2, t);

  for (std::size_t si = 0; si < st.slots.size(); ++si) {
    auto& slot = st.slots[si];
    auto& [name, param] = params.items[si];
    if (name != slot.name)
      throw UsageError("adamw_step: parameter order changed ('" + name +
                       "' vs state '" + slot.name + "')");
    if (!param.has_grad())
      throw UsageError("adamw_step: parameter '" + name + "' has no gradient");
    const auto& g = param.grad();
    auto& w = param.raw_data();
    if (g.size() != w.size())
      throw ShapeError("adamw_step: gradient size mismatch for '" + name +
                       "'");
    const double wd = slot.decay ? st.cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      slot.m[i] = st.cfg.beta1 * slot.m[i] + (1.0 - st.cfg.beta1) * g[i];
      slot.v[i] = st.cfg.beta2 * slot.v[i] + (1.0 - st.cfg.beta2) * g[i] * g[i];
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      w[i] -= st.cfg.lr * (mhat / (std::sqrt(vhat) + st.cfg.eps) + wd * w[i]);
    }
    if (st.cfg.check_finite) {
      for (const double v : w)
        if (!std::isfinite(v))
          throw NumericError("adamw_step: non-finite value in '" + name +
                             "' after update");
    }
  }
}

void ema_update(ParamMap& slow, const ParamMap& fast, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("ema_update: lambda " + std::to_string(lambda) +
                      " outside [0,1]");
  if (slow.size() != fast.size())
    throw UsageError("ema_update: maps of different size");
  if (lambda == 1.0) return;
  for (std::size_t i = 0; i < slow.items.size(); ++i) {
    auto& [sn, st] = slow.items[i];
    const auto& [fn, ft] = fast.items[i];
    if (sn != fn)
      throw UsageError("ema_update: name mismatch ('" + sn + "' vs '" + fn +
                       "')");
    if (st.shape() != ft.shape())
      throw ShapeError("ema_update: shape mismatch for '" + sn + "'");
    auto& s = st.raw_data();
    const auto& f = ft.data();
    if (lambda == 0.0) {
      std::copy(f.begin(), f.end(), s.begin());
      continue;
    }
    // Delta form keeps a fixed point exact: s == f stays bitwise equal.
    for (std::size_t k = 0; k < s.size(); ++k)
      s[k] = f[k] + lambda * (s[k] - f[k]);
  }
}

}  // namespace mclp
