#include "bcib/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bcib {

void optimizer_step(OptimState& state, ParamSet& params, double lr) {
  const OptimConfig& c = state.config;
  state.step += 1;
  double t = static_cast<double>(state.step);
  double bias1 = 1.0 - std::pow(c.beta1, t);
  double bias2 = 1.0 - std::pow(c.beta2, t);

  for (auto& [path, p] : params) {
    const std::vector<double>& g = p.grad();
    for (size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        throw numerical_error("optimizer_step: non-finite gradient in parameter '" +
                              path + "'");
    std::vector<double>& m = state.m[path];
    std::vector<double>& v = state.v[path];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    if (m.size() != g.size())
      throw std::runtime_error("optimizer_step: moment size mismatch for '" + path + "'");

    std::vector<double>& w = p.node()->value;
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      double m_hat = m[i] / bias1;
      double v_hat = v[i] / bias2;
      if (c.kind == OptimKind::adamw && c.weight_decay != 0.0)
        w[i] -= lr * c.weight_decay * w[i];
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

double lr_at(const LrSchedule& schedule, uint64_t step) {
  if (schedule.base_lr < 0.0)
    throw std::runtime_error("lr_at: base_lr must be non-negative");
  if (schedule.kind == LrScheduleKind::cosine && schedule.total_steps == 0)
    throw std::runtime_error("lr_at: cosine schedule requires total_steps > 0");
  if (schedule.total_steps > 0 && step > schedule.total_steps)
    throw std::runtime_error("lr_at: step " + std::to_string(step) +
                             " past total_steps " + std::to_string(schedule.total_steps));

  if (schedule.warmup_steps > 0 && step < schedule.warmup_steps)
    return schedule.base_lr * (static_cast<double>(step) + 1.0) /
           static_cast<double>(schedule.warmup_steps);

  if (schedule.kind == LrScheduleKind::constant) return schedule.base_lr;

  uint64_t decay_total = schedule.total_steps - schedule.warmup_steps;
  if (decay_total == 0) return schedule.base_lr;
  uint64_t decay_step = step - schedule.warmup_steps;
  double frac = static_cast<double>(decay_step) / static_cast<double>(decay_total);
  return schedule.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

GradcheckReport gradcheck(ParamSet& params,
                          const std::function<Tensor()>& loss_fn,
                          double tol, double h) {
  GradcheckReport report;

  // analytic gradients from one clean backward pass
  params.zero_grad();
  Tensor loss = loss_fn();
  if (loss.size() != 1)
    throw std::runtime_error("gradcheck: loss_fn must return a scalar");
  backward(loss);
  std::map<std::string, std::vector<double>> analytic;
  for (auto& [path, p] : params) analytic[path] = p.grad();

  for (auto& [path, p] : params) {
    GradcheckEntry entry;
    entry.path = path;
    std::vector<double>& w = p.node()->value;
    for (size_t i = 0; i < w.size(); ++i) {
      double saved = w[i];
      w[i] = saved + h;
      double f_plus = loss_fn().item();
      w[i] = saved - h;
      double f_minus = loss_fn().item();
      w[i] = saved;
      double numeric = (f_plus - f_minus) / (2.0 * h);
      double a = analytic[path][i];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-3});
      double rel = std::fabs(a - numeric) / denom;
      if (rel > entry.max_rel_err) {
        entry.max_rel_err = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  report.passed = report.max_rel_err <= tol;
  return report;
}

}  // namespace bcib
