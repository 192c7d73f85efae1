#include "mclp/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mclp/error.hpp"
#include "mclp/rng.hpp"

namespace mclp {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           ParamMap& params, const GradCheckOptions& opt) {
  if (params.size() == 0) throw UsageError("grad_check: no parameters");
  for (auto& [name, t] : params.items) {
    if (!t.requires_grad())
      throw UsageError("grad_check: parameter '" + name +
                       "' does not require gradients");
    t.zero_grad();
  }

  Tensor loss = loss_fn();
  backward(loss);

  // Snapshot analytic gradients before finite differences mutate anything.
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, t] : params.items) analytic.push_back(t.grad());
  if (opt.fault_scale != 1.0)
    for (auto& v : analytic[0]) v *= opt.fault_scale;

  GradCheckReport report;
  Rng rng(derive_seed(opt.seed, "grad-check"));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [name, t] = params.items[pi];
    const std::int64_t n = t.numel();
    std::vector<std::int64_t> entries;
    if (n <= opt.max_entries_per_tensor) {
      entries.resize(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) entries[i] = i;
    } else {
      // Sample without replacement so repeated probes never hide an entry.
      std::vector<std::int64_t> all(static_cast<std::size_t>(n));
      for (std::int64_t i = 0; i < n; ++i) all[i] = i;
      rng.shuffle(all);
      entries.assign(all.begin(), all.begin() + opt.max_entries_per_tensor);
      std::sort(entries.begin(), entries.end());
    }

    auto& w = t.raw_data();
    for (const std::int64_t idx : entries) {
      const double saved = w[idx];
      w[idx] = saved + opt.h;
      const double up = loss_fn().item();
      w[idx] = saved - opt.h;
      const double down = loss_fn().item();
      w[idx] = saved;
      const double numeric = (up - down) / (2.0 * opt.h);
      const double a = analytic[pi][static_cast<std::size_t>(idx)];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / denom;
      report.entries_checked += 1;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_entry = idx;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_err < opt.tol;
  return report;
}

}  // namespace mclp
