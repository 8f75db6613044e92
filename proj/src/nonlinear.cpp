#include "deflact/nonlinear.hpp"

#include <chrono>
#include <cmath>

#include "deflact/errors.hpp"
#include "deflact/text.hpp"

namespace deflact {

namespace {

using Clock = std::chrono::steady_clock;

void check_size(const Vector& v, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(v.size()) != n)
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(v.size()));
}

void check_config(const NonlinearMap& f, const Vector& y, const Vector& x0, const SolveConfig& cfg) {
  check_size(y, f.dim_range(), "data");
  check_size(x0, f.dim_domain(), "start vector");
  if (cfg.max_iters < 1) throw ConfigError("max_iters must be positive");
  if (!(cfg.delta >= 0.0)) throw ConfigError("delta must be nonnegative");
  if (cfg.stop_at_discrepancy && !(cfg.tau > 1.0))
    throw ConfigError("discrepancy principle requires tau > 1, got " + format_double(cfg.tau));
  if (cfg.record_error) check_size(cfg.x_true, f.dim_domain(), "x_true");
}

std::optional<double> error_of(const NonlinearMap& f, const Vector& x, const SolveConfig& cfg) {
  if (!cfg.record_error) return std::nullopt;
  const Vector e = x - cfg.x_true;
  if (cfg.error_norm == ErrorNorm::normal) return f.derivative(cfg.x_true, e).norm();
  return e.norm();
}

StopRule make_rule(const SolveConfig& cfg) {
  return cfg.stop_at_discrepancy ? StopRule::discrepancy(cfg.tau, cfg.delta, cfg.max_iters)
                                 : StopRule::iterations(cfg.max_iters);
}

/// Residual y - F(x), or DivergenceError carrying `last` if it is not finite.
Vector residual_or_throw(const NonlinearMap& f, const Vector& y, const Vector& x, const Vector& last,
                         std::size_t iter) {
  if (!x.allFinite()) throw DivergenceError("iterate became non-finite", last, iter);
  Vector r = y - f.apply(x);
  if (!r.allFinite()) throw DivergenceError("F(x) became non-finite", last, iter);
  return r;
}

RecycleSpace factor_at(const NonlinearMap& f, const Vector& x, const KTuple& u_raw, std::size_t iter) {
  try {
    return qr_against(f.linearize(x), u_raw);
  } catch (const RankDeficiencyError& e) {
    throw RankDeficiencyError("F'(x) U lost rank at iteration " + std::to_string(iter) + ": " + e.what(),
                              e.column());
  }
}

}  // namespace

NonlinearMap::NonlinearMap(std::size_t dim_domain, std::size_t dim_range, Forward forward, Derivative derivative,
                           Derivative derivative_adjoint, std::string label)
    : dim_domain_(dim_domain),
      dim_range_(dim_range),
      forward_(std::make_shared<const Forward>(std::move(forward))),
      derivative_(std::make_shared<const Derivative>(std::move(derivative))),
      derivative_adjoint_(std::make_shared<const Derivative>(std::move(derivative_adjoint))),
      label_(std::move(label)) {
  if (dim_domain_ == 0 || dim_range_ == 0) throw DimensionError("NonlinearMap dimensions must be positive");
}

Vector NonlinearMap::apply(const Vector& x) const {
  check_size(x, dim_domain_, "NonlinearMap::apply");
  return (*forward_)(x);
}

Vector NonlinearMap::derivative(const Vector& x, const Vector& v) const {
  check_size(x, dim_domain_, "NonlinearMap::derivative (x)");
  check_size(v, dim_domain_, "NonlinearMap::derivative (v)");
  return (*derivative_)(x, v);
}

Vector NonlinearMap::derivative_adjoint(const Vector& x, const Vector& w) const {
  check_size(x, dim_domain_, "NonlinearMap::derivative_adjoint (x)");
  check_size(w, dim_range_, "NonlinearMap::derivative_adjoint (w)");
  return (*derivative_adjoint_)(x, w);
}

LinearMap NonlinearMap::linearize(const Vector& x) const {
  check_size(x, dim_domain_, "NonlinearMap::linearize");
  auto d = derivative_;
  auto da = derivative_adjoint_;
  return LinearMap(
      dim_domain_, dim_range_, [d, x](const Vector& v) { return (*d)(x, v); },
      [da, x](const Vector& w) { return (*da)(x, w); }, label_ + "'");
}

NonlinearMap wrap_linear(const LinearMap& op) {
  return NonlinearMap(
      op.dim_domain(), op.dim_range(), [op](const Vector& x) { return op.apply(x); },
      [op](const Vector&, const Vector& v) { return op.apply(v); },
      [op](const Vector&, const Vector& w) { return op.apply_adjoint(w); }, op.label());
}

NonlinearMap projected_nl_operator(const NonlinearMap& f, ProjectorAction q_apply) {
  auto q = std::make_shared<const ProjectorAction>(std::move(q_apply));
  return NonlinearMap(
      f.dim_domain(), f.dim_range(),
      [f, q](const Vector& x) {
        Vector fx = f.apply(x);
        return Vector(fx - (*q)(fx));
      },
      [f, q](const Vector& x, const Vector& v) {
        Vector d = f.derivative(x, v);
        return Vector(d - (*q)(d));
      },
      [f, q](const Vector& x, const Vector& w) { return f.derivative_adjoint(x, w - (*q)(w)); },
      "(I-Q)" + f.label());
}

SolveResult nl_gradient_descent(const NonlinearMap& f, const Vector& y_delta, const Vector& x0, StepRule step,
                                const SolveConfig& cfg) {
  check_config(f, y_delta, x0, cfg);
  if (step.kind == StepRule::Kind::fixed && !(step.alpha > 0.0))
    throw ConfigError("fixed step requires alpha > 0, got " + format_double(step.alpha));
  const auto start = Clock::now();
  const StopRule rule = make_rule(cfg);

  SolveResult out;
  Vector x = x0;
  Vector r = residual_or_throw(f, y_delta, x, x0, 0);

  auto record = [&](std::size_t iter, double alpha) {
    TraceRow row;
    row.iter = iter;
    row.residual_norm = r.norm();
    row.error_norm = error_of(f, x, cfg);
    row.alpha = alpha;
    row.wallclock_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    out.trace.push(row);
    if (cfg.observer) cfg.observer(IterateView{iter, x, r});
    return rule.check(row);
  };
  auto finish = [&](StopReason reason) {
    out.x = x;
    out.stop_reason = reason;
    return out;
  };

  if (auto stop = record(0, 0.0)) return finish(*stop);
  for (std::size_t i = 1; i <= cfg.max_iters; ++i) {
    const Vector g = f.derivative_adjoint(x, r);
    double alpha = step.alpha;
    if (step.kind == StepRule::Kind::steepest) {
      const double num = g.squaredNorm();
      const double den = f.derivative(x, g).squaredNorm();
      if (num == 0.0 || den == 0.0) return finish(StopReason::stagnation);
      alpha = num / den;
    }
    const Vector x_prev = x;
    x += alpha * g;
    r = residual_or_throw(f, y_delta, x, x_prev, i);
    if (auto stop = record(i, alpha)) return finish(*stop);
  }
  return finish(StopReason::max_iters);
}

SolveResult nl_augmented_landweber(const NonlinearMap& f, const KTuple& u_raw, const Vector& y_delta,
                                   const Vector& x0, double alpha, const SolveConfig& cfg,
                                   NlAugmentedOptions options) {
  check_config(f, y_delta, x0, cfg);
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive, got " + format_double(alpha));
  if (u_raw.length() != f.dim_domain()) throw DimensionError("U_raw vectors must have the domain length");
  const auto start = Clock::now();
  const StopRule rule = make_rule(cfg);
  const int rank = static_cast<int>(u_raw.size());

  SolveResult out;
  Vector x = x0;
  Vector r = residual_or_throw(f, y_delta, x, x0, 0);
  {
    const RecycleSpace rs = factor_at(f, x, u_raw, 0);
    x += rs.u() * bilinear_xu(r, rs.c());
    r = residual_or_throw(f, y_delta, x, x0, 0);
  }
  // Space at the current iterate; the loop body and the closing correction reuse it.
  RecycleSpace rs = factor_at(f, x, u_raw, 0);
  auto projected = [&]() -> Vector {
    if (rs.empty()) return r;
    return r - rs.c() * bilinear_xu(r, rs.c());
  };

  // Rows in the loop report ||(I - Q_i) r_i||, the residual the projected
  // iteration drives down; the closing correction removes the C_i component.
  auto make_row = [&](std::size_t iter, double a, double residual) {
    TraceRow row;
    row.iter = iter;
    row.residual_norm = residual;
    row.error_norm = error_of(f, x, cfg);
    row.alpha = a;
    row.wallclock_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    row.qr_rank = rank;
    return row;
  };
  auto finish = [&](StopReason reason) {
    if (options.final_correction && u_raw.size() > 0) {
      const std::size_t iter = out.trace.back().iter;
      const Vector x_prev = x;
      x += rs.u() * bilinear_xu(r, rs.c());
      r = residual_or_throw(f, y_delta, x, x_prev, iter);
      TraceRow& last = out.trace.back();
      const TraceRow fresh = make_row(iter, last.alpha, r.norm());
      last = fresh;
    }
    out.x = x;
    out.stop_reason = reason;
    return out;
  };
  auto record = [&](std::size_t iter, double a, const Vector& pr) {
    const TraceRow row = make_row(iter, a, pr.norm());
    out.trace.push(row);
    if (cfg.observer) cfg.observer(IterateView{iter, x, r});
    return rule.check(row);
  };

  Vector pr = projected();
  if (auto stop = record(0, 0.0, pr)) return finish(*stop);
  for (std::size_t i = 1; i <= cfg.max_iters; ++i) {
    const KTuple& C = rs.c();
    const Vector g = f.derivative_adjoint(x, pr);
    Vector w_hat;
    if (!rs.empty()) {
      const Vector inner = options.project_residual ? g : f.derivative_adjoint(x, r);
      w_hat = bilinear_xu(f.derivative(x, inner), C);
    }
    const Vector x_prev = x;
    x += alpha * g;
    if (!rs.empty()) x -= alpha * (rs.u() * w_hat);
    r = residual_or_throw(f, y_delta, x, x_prev, i);
    rs = factor_at(f, x, u_raw, i);
    pr = projected();
    if (auto stop = record(i, alpha, pr)) return finish(*stop);
  }
  return finish(StopReason::max_iters);
}

}  // namespace deflact
