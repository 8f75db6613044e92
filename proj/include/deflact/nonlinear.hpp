#pragma once

// Gradient descent and augmented Landweber for nonlinear equations F(x) = y.
// Experimental: no convergence or regularization property is claimed.

#include <cstddef>
#include <functional>
#include <string>

#include "deflact/linops.hpp"
#include "deflact/recycle.hpp"
#include "deflact/solvers.hpp"

namespace deflact {

/// F : R^n -> R^m with Frechet derivative F'(x) and its adjoint. The
/// derivative is assumed to satisfy ||F(x + h v) - F(x) - h F'(x) v|| = O(h^2).
class NonlinearMap {
 public:
  using Forward = std::function<Vector(const Vector&)>;
  using Derivative = std::function<Vector(const Vector& x, const Vector& v)>;

  NonlinearMap(std::size_t dim_domain, std::size_t dim_range, Forward forward, Derivative derivative,
               Derivative derivative_adjoint, std::string label = {});

  std::size_t dim_domain() const noexcept { return dim_domain_; }
  std::size_t dim_range() const noexcept { return dim_range_; }
  const std::string& label() const noexcept { return label_; }

  Vector apply(const Vector& x) const;
  /// F'(x) v.
  Vector derivative(const Vector& x, const Vector& v) const;
  /// F'(x)* w.
  Vector derivative_adjoint(const Vector& x, const Vector& w) const;
  /// F'(x) frozen as a LinearMap.
  LinearMap linearize(const Vector& x) const;

 private:
  std::size_t dim_domain_;
  std::size_t dim_range_;
  std::shared_ptr<const Forward> forward_;
  std::shared_ptr<const Derivative> derivative_;
  std::shared_ptr<const Derivative> derivative_adjoint_;
  std::string label_;
};

/// F(x) = T x with F'(x) = T.
NonlinearMap wrap_linear(const LinearMap& op);

/// x -> (I - Q) F(x), derivative (I - Q) F'(x), adjoint F'(x)* (I - Q).
NonlinearMap projected_nl_operator(const NonlinearMap& f, ProjectorAction q_apply);

struct StepRule {
  enum class Kind { fixed, steepest } kind = Kind::steepest;
  double alpha = 0.0;

  static StepRule fixed(double alpha) { return {Kind::fixed, alpha}; }
  static StepRule steepest() { return {Kind::steepest, 0.0}; }
};

/// x_{i+1} = x_i + alpha_i F'(x_i)* r_i with r_i = y - F(x_i). Uses
/// cfg.tau, cfg.delta, cfg.max_iters, cfg.stop_at_discrepancy and error options.
/// Throws DivergenceError (with the last finite iterate) on non-finite values.
SolveResult nl_gradient_descent(const NonlinearMap& f, const Vector& y_delta, const Vector& x0, StepRule step,
                                const SolveConfig& cfg);

struct NlAugmentedOptions {
  /// Use (I - Q) r inside F'(x) F'(x)* (.) when forming w_hat; false uses r.
  bool project_residual = true;
  /// Apply the closing correction x <- x + U (r, C) after the loop.
  bool final_correction = true;
};

/// Augmented nonlinear Landweber with fixed step alpha. U is rescaled fresh
/// from u_raw at every iteration through a QR of F'(x) U_raw. Trace rows carry
/// the QR rank and the projected residual ||(I - Q) r||, which is what the
/// stop rule tests; the final correction, when applied, overwrites the last
/// row with the true residual.
/// Throws RankDeficiencyError (message names the iteration) on rank loss.
SolveResult nl_augmented_landweber(const NonlinearMap& f, const KTuple& u_raw, const Vector& y_delta,
                                   const Vector& x0, double alpha, const SolveConfig& cfg,
                                   NlAugmentedOptions options = {});

}  // namespace deflact
