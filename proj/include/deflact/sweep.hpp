#pragma once

// Noise-level sweeps: the empirical check that reconstructions approach x_true
// as delta -> 0 under discrepancy stopping.

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "deflact/problems.hpp"
#include "deflact/recycle.hpp"
#include "deflact/solvers.hpp"

namespace deflact {

/// Builds the problem instance for one absolute noise level.
using ProblemFamily = std::function<TestProblem(double delta)>;

struct SweepRun {
  SolveResult result;
  double noise_level = 0.0;  ///< value fed to the discrepancy rule
};

/// Solves one instance of the family.
using SweepSolver = std::function<SweepRun(const TestProblem&)>;

struct SweepPoint {
  double delta = 0.0;
  double kappa_delta = 0.0;
  std::size_t stop_iter = 0;
  double final_error = 0.0;
  StopReason stop_reason = StopReason::max_iters;
};

/// Runs every delta (strictly decreasing, nonnegative) and returns rows in the
/// order given. Points run on up to `threads` workers; 0 reads DEFLACT_THREADS
/// (default 1). Results do not depend on the thread count.
std::vector<SweepPoint> delta_sweep(const ProblemFamily& family, const SweepSolver& solver,
                                    const std::vector<double>& deltas, std::size_t threads = 0);

/// Worker count from DEFLACT_THREADS, at least 1.
std::size_t sweep_threads_from_env();

struct SweepSolverOptions {
  SolveConfig cfg;  ///< method, tau, max_iters, beta...; delta is set per point
  /// Recycle space for a given instance; required for augmented methods.
  std::function<RecycleSpace(const TestProblem&)> recycle;
  /// Feed kappa_U * delta to the stop rule of augmented runs (false: bare delta).
  bool use_kappa = true;
  /// ||T||; estimated per instance when absent.
  std::optional<double> t_norm;
};

/// The standard solver for sweeps: plain methods stop at tau * delta,
/// augmented ones at tau * kappa_U * delta.
SweepSolver standard_sweep_solver(SweepSolverOptions options);

/// `delta,kappa_delta,stop_iter,final_error,stop_reason`.
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points);

}  // namespace deflact
