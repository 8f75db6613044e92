#pragma once

// Plain and augmented gradient iterations for the normal equations T*T x = T*y.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>

#include "deflact/linops.hpp"
#include "deflact/recycle.hpp"
#include "deflact/trace.hpp"

namespace deflact {

enum class Method { landweber, steepest_descent, cgne, aug_landweber, aug_steepest_descent };

std::string to_string(Method method);
std::optional<Method> parse_method(const std::string& name);
bool is_augmented(Method method);

enum class ErrorNorm { euclidean, normal };

/// State handed to an observer after each recorded trace row.
struct IterateView {
  std::size_t iter;
  const Vector& x;
  const Vector& r;  ///< current (recurred) residual
};
using IterateObserver = std::function<void(const IterateView&)>;

struct SolveConfig {
  Method method = Method::steepest_descent;
  double beta = 0.0;  ///< fixed step for the Landweber variants
  double tau = 1.5;
  double delta = 0.0;
  std::size_t max_iters = 500;
  bool stop_at_discrepancy = true;  ///< false: always run to max_iters
  bool record_error = false;
  Vector x_true;  ///< required when record_error is set
  ErrorNorm error_norm = ErrorNorm::euclidean;
  bool check_beta = true;  ///< compare beta with 2 / norm_estimate^2
  IterateObserver observer;
};

struct SolveResult {
  Vector x;
  IterationTrace trace;
  StopReason stop_reason = StopReason::max_iters;
};

/// x_{k+1} = x_k + beta T*(y - T x_k).
SolveResult landweber(const LinearMap& op, const Vector& y_delta, const Vector& x0, const SolveConfig& cfg);

/// Landweber with the residual-minimizing step ||T*r||^2 / ||TT*r||^2.
SolveResult steepest_descent(const LinearMap& op, const Vector& y_delta, const Vector& x0, const SolveConfig& cfg);

/// CG on the normal equations from x0 = 0 (CGLS formulation).
SolveResult cgne(const LinearMap& op, const Vector& y_delta, const SolveConfig& cfg);

/// Steepest descent over U + span{T*r_j}. Row 0 of the trace is the state
/// after the initial correction x0 + U (r0, C).
SolveResult augmented_steepest_descent(const LinearMap& op, const RecycleSpace& rs, const Vector& y_delta,
                                       const Vector& x0, const SolveConfig& cfg);

/// Augmented iteration with the fixed step cfg.beta, checked against the
/// norm of the deflated operator (I - Q) T.
SolveResult augmented_landweber(const LinearMap& op, const RecycleSpace& rs, const Vector& y_delta,
                                const Vector& x0, const SolveConfig& cfg);

/// Dispatches on cfg.method. Augmented methods with a null space pointer run
/// with the k = 0 space.
SolveResult solve(const LinearMap& op, const RecycleSpace* rs, const Vector& y_delta, const Vector& x0,
                  const SolveConfig& cfg);

/// A regularization procedure: (operator, data, noise level) -> result.
using InnerSolver = std::function<SolveResult(const LinearMap&, const Vector&, double)>;

struct AugmentedResult {
  SolveResult result;  ///< x is the recombined approximation
  Vector x_p;          ///< initial projection U (y, C)
  Vector inner_x;      ///< inner solution of the deflated problem
  double inner_delta = 0.0;
};

/// Augmented regularization: x_p = U (y, C), inner solve of (I - Q) T t = (I - Q) y
/// at noise level kappa * delta, result x_p + (I - P) t.
AugmentedResult augmented_regularize(const InnerSolver& inner, const RecycleSpace& rs, const LinearMap& op,
                                     const Vector& y_delta, double delta, double kappa_u);

}  // namespace deflact
