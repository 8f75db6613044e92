#include "deflact/solvers.hpp"

#include <chrono>
#include <cmath>

#include "deflact/errors.hpp"
#include "deflact/text.hpp"

namespace deflact {

namespace {

constexpr std::size_t kRecomputeEvery = 50;
constexpr double kDriftTol = 1e-8;
constexpr double kStagnationTol = 1e-14;
constexpr int kStagnationRuns = 10;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_common(const LinearMap& op, const Vector& y, const Vector& x0, const SolveConfig& cfg) {
  if (static_cast<std::size_t>(y.size()) != op.dim_range())
    throw DimensionError("data has length " + std::to_string(y.size()) + ", operator range is " +
                         std::to_string(op.dim_range()));
  if (static_cast<std::size_t>(x0.size()) != op.dim_domain())
    throw DimensionError("start vector has length " + std::to_string(x0.size()) + ", operator domain is " +
                         std::to_string(op.dim_domain()));
  if (cfg.max_iters < 1) throw ConfigError("max_iters must be positive");
  if (!(cfg.delta >= 0.0) || !std::isfinite(cfg.delta)) throw ConfigError("delta must be finite and nonnegative");
  if (cfg.stop_at_discrepancy && !(cfg.tau > 1.0))
    throw ConfigError("discrepancy principle requires tau > 1, got " + format_double(cfg.tau));
  if (cfg.record_error && static_cast<std::size_t>(cfg.x_true.size()) != op.dim_domain())
    throw DimensionError("x_true must be given with the domain length to record errors");
}

void check_beta(const LinearMap& op, double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive, got " + format_double(beta));
  const double norm = norm_estimate(op);
  const double limit = 2.0 / (norm * norm);
  if (!(beta < limit))
    throw ConfigError("beta = " + format_double(beta) + " violates 0 < beta < 2/||T||^2 = " + format_double(limit));
}

StopRule make_rule(const SolveConfig& cfg) {
  return cfg.stop_at_discrepancy ? StopRule::discrepancy(cfg.tau, cfg.delta, cfg.max_iters)
                                 : StopRule::iterations(cfg.max_iters);
}

std::optional<double> error_of(const LinearMap& op, const Vector& x, const SolveConfig& cfg) {
  if (!cfg.record_error) return std::nullopt;
  const Vector e = x - cfg.x_true;
  if (cfg.error_norm == ErrorNorm::normal) return op.apply(e).norm();
  return e.norm();
}

/// Tracks consecutive iterations without relative residual progress.
class StagnationMonitor {
 public:
  bool update(double previous, double current) {
    const double scale = std::max(previous, current);
    if (scale == 0.0 || std::abs(previous - current) < kStagnationTol * scale) {
      ++runs_;
    } else {
      runs_ = 0;
    }
    return runs_ >= kStagnationRuns;
  }

 private:
  int runs_ = 0;
};

/// Shared loop of (augmented) Landweber and steepest descent. With an empty
/// recycle space it is exactly the plain method.
SolveResult gradient_core(const LinearMap& op, const RecycleSpace& rs, const Vector& y, const Vector& x0,
                          const SolveConfig& cfg, bool steepest) {
  const auto start = Clock::now();
  const StopRule rule = make_rule(cfg);
  const bool aug = !rs.empty();
  const KTuple& U = rs.u();
  const KTuple& C = rs.c();
  const double y_norm = y.norm();

  SolveResult out;
  Vector x = x0;
  Vector r = y - op.apply(x0);
  if (aug) {
    const Vector w = bilinear_xu(r, C);
    x += U * w;
    r -= C * w;
  }

  auto record = [&](std::size_t iter, double alpha) -> std::optional<StopReason> {
    TraceRow row;
    row.iter = iter;
    row.residual_norm = r.norm();
    row.error_norm = error_of(op, x, cfg);
    row.alpha = alpha;
    row.wallclock_ms = ms_since(start);
    out.trace.push(row);
    if (cfg.observer) cfg.observer(IterateView{iter, x, r});
    return rule.check(row);
  };

  auto finish = [&](StopReason reason) {
    out.x = x;
    out.stop_reason = reason;
    return out;
  };

  if (!std::isfinite(r.norm())) throw DivergenceError("non-finite initial residual", x0, 0);
  if (auto stop = record(0, 0.0)) return finish(*stop);

  StagnationMonitor monitor;
  for (std::size_t k = 1; k <= cfg.max_iters; ++k) {
    const Vector v = op.apply_adjoint(r);
    Vector q = op.apply(v);
    Vector w_hat;
    if (aug) {
      w_hat = bilinear_xu(q, C);
      q -= C * w_hat;
    }

    double alpha = cfg.beta;
    if (steepest) {
      const double num = v.squaredNorm();
      const double den = q.squaredNorm();
      if (den == 0.0 || num == 0.0) return finish(StopReason::stagnation);
      alpha = num / den;
    }

    const Vector x_prev = x;
    const double r_prev = r.norm();
    x += alpha * v;
    if (aug) x -= alpha * (U * w_hat);
    r -= alpha * q;

    bool drifted = false;
    if (k % kRecomputeEvery == 0) {
      Vector r_true = y - op.apply(x);
      if (aug) r_true -= C * bilinear_xu(r_true, C);
      drifted = (r_true - r).norm() > kDriftTol * std::max(y_norm, 1.0);
      r = r_true;
    }

    if (!x.allFinite() || !std::isfinite(r.norm()))
      throw DivergenceError("iteration produced non-finite values", x_prev, k);

    if (auto stop = record(k, alpha)) return finish(*stop);
    if (drifted || monitor.update(r_prev, r.norm())) return finish(StopReason::stagnation);
  }
  return finish(StopReason::max_iters);
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::landweber: return "landweber";
    case Method::steepest_descent: return "sd";
    case Method::cgne: return "cgne";
    case Method::aug_landweber: return "aug-landweber";
    case Method::aug_steepest_descent: return "aug-sd";
  }
  return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
  if (name == "landweber") return Method::landweber;
  if (name == "sd" || name == "steepest-descent") return Method::steepest_descent;
  if (name == "cgne") return Method::cgne;
  if (name == "aug-landweber") return Method::aug_landweber;
  if (name == "aug-sd" || name == "aug-steepest-descent") return Method::aug_steepest_descent;
  return std::nullopt;
}

bool is_augmented(Method method) {
  return method == Method::aug_landweber || method == Method::aug_steepest_descent;
}

SolveResult landweber(const LinearMap& op, const Vector& y_delta, const Vector& x0, const SolveConfig& cfg) {
  check_common(op, y_delta, x0, cfg);
  if (cfg.check_beta) {
    check_beta(op, cfg.beta);
  } else if (!(cfg.beta > 0.0)) {
    throw ConfigError("beta must be positive");
  }
  return gradient_core(op, RecycleSpace::empty(op.dim_domain(), op.dim_range()), y_delta, x0, cfg, false);
}

SolveResult steepest_descent(const LinearMap& op, const Vector& y_delta, const Vector& x0, const SolveConfig& cfg) {
  check_common(op, y_delta, x0, cfg);
  return gradient_core(op, RecycleSpace::empty(op.dim_domain(), op.dim_range()), y_delta, x0, cfg, true);
}

SolveResult augmented_steepest_descent(const LinearMap& op, const RecycleSpace& rs, const Vector& y_delta,
                                       const Vector& x0, const SolveConfig& cfg) {
  check_common(op, y_delta, x0, cfg);
  if (rs.dim_domain() != op.dim_domain() || rs.dim_range() != op.dim_range())
    throw DimensionError("recycle space does not match the operator");
  return gradient_core(op, rs, y_delta, x0, cfg, true);
}

SolveResult augmented_landweber(const LinearMap& op, const RecycleSpace& rs, const Vector& y_delta,
                                const Vector& x0, const SolveConfig& cfg) {
  check_common(op, y_delta, x0, cfg);
  if (rs.dim_domain() != op.dim_domain() || rs.dim_range() != op.dim_range())
    throw DimensionError("recycle space does not match the operator");
  if (cfg.check_beta) {
    check_beta(rs.empty() ? op : deflate(op, q_projector(rs)), cfg.beta);
  } else if (!(cfg.beta > 0.0)) {
    throw ConfigError("beta must be positive");
  }
  return gradient_core(op, rs, y_delta, x0, cfg, false);
}

SolveResult cgne(const LinearMap& op, const Vector& y_delta, const SolveConfig& cfg) {
  const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(op.dim_domain()));
  check_common(op, y_delta, x0, cfg);
  const auto start = Clock::now();
  const StopRule rule = make_rule(cfg);

  SolveResult out;
  Vector x = x0;
  Vector r = y_delta;
  Vector s = op.apply_adjoint(r);
  Vector p = s;
  double gamma = s.squaredNorm();

  auto record = [&](std::size_t iter, double alpha) {
    TraceRow row;
    row.iter = iter;
    row.residual_norm = r.norm();
    row.error_norm = error_of(op, x, cfg);
    row.alpha = alpha;
    row.wallclock_ms = ms_since(start);
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
  StagnationMonitor monitor;
  for (std::size_t k = 1; k <= cfg.max_iters; ++k) {
    const Vector q = op.apply(p);
    const double curvature = q.squaredNorm();
    if (curvature == 0.0 || gamma == 0.0) return finish(StopReason::stagnation);
    const double alpha = gamma / curvature;
    const double r_prev = r.norm();
    x += alpha * p;
    r -= alpha * q;
    s = op.apply_adjoint(r);
    const double gamma_next = s.squaredNorm();
    p = s + (gamma_next / gamma) * p;
    gamma = gamma_next;
    if (!x.allFinite()) throw DivergenceError("CGNE produced non-finite values", x - alpha * p, k);
    if (auto stop = record(k, alpha)) return finish(*stop);
    if (monitor.update(r_prev, r.norm())) return finish(StopReason::stagnation);
  }
  return finish(StopReason::max_iters);
}

SolveResult solve(const LinearMap& op, const RecycleSpace* rs, const Vector& y_delta, const Vector& x0,
                  const SolveConfig& cfg) {
  const RecycleSpace none = RecycleSpace::empty(op.dim_domain(), op.dim_range());
  const RecycleSpace& space = rs ? *rs : none;
  switch (cfg.method) {
    case Method::landweber: return landweber(op, y_delta, x0, cfg);
    case Method::steepest_descent: return steepest_descent(op, y_delta, x0, cfg);
    case Method::cgne: return cgne(op, y_delta, cfg);
    case Method::aug_landweber: return augmented_landweber(op, space, y_delta, x0, cfg);
    case Method::aug_steepest_descent: return augmented_steepest_descent(op, space, y_delta, x0, cfg);
  }
  throw ConfigError("unknown method");
}

AugmentedResult augmented_regularize(const InnerSolver& inner, const RecycleSpace& rs, const LinearMap& op,
                                     const Vector& y_delta, double delta, double kappa_u) {
  if (static_cast<std::size_t>(y_delta.size()) != op.dim_range())
    throw DimensionError("data length does not match the operator range");
  if (!(delta >= 0.0)) throw ConfigError("delta must be nonnegative");
  if (!(kappa_u >= 1.0)) throw ConfigError("kappa_U must be at least 1");

  AugmentedResult out;
  out.x_p = initial_projection(rs, y_delta);
  const Vector y_p = op.apply(out.x_p);
  const LinearMap b = rs.empty() ? op : deflate(op, q_projector(rs));
  out.inner_delta = kappa_u * delta;
  out.result = inner(b, y_delta - y_p, out.inner_delta);
  out.inner_x = out.result.x;
  out.result.x = out.x_p + out.inner_x - apply_P(rs, op, out.inner_x);
  return out;
}

}  // namespace deflact
