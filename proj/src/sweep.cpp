#include "deflact/sweep.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>

#include "deflact/errors.hpp"
#include "deflact/text.hpp"

namespace deflact {

std::size_t sweep_threads_from_env() {
  const char* env = std::getenv("DEFLACT_THREADS");
  if (env == nullptr) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) return 1;
  return static_cast<std::size_t>(v);
}

std::vector<SweepPoint> delta_sweep(const ProblemFamily& family, const SweepSolver& solver,
                                    const std::vector<double>& deltas, std::size_t threads) {
  if (deltas.empty()) throw ConfigError("delta sweep needs at least one delta");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] >= 0.0)) throw ConfigError("sweep deltas must be nonnegative");
    if (i > 0 && !(deltas[i] < deltas[i - 1])) throw ConfigError("sweep deltas must be strictly decreasing");
  }
  if (threads == 0) threads = sweep_threads_from_env();
  threads = std::min(threads, deltas.size());

  std::vector<SweepPoint> points(deltas.size());
  std::vector<std::exception_ptr> errors(deltas.size());
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < deltas.size(); i = next++) {
      try {
        const TestProblem problem = family(deltas[i]);
        if (problem.x_true.size() == 0) throw ConfigError("delta sweep needs problems with a known x_true");
        const SweepRun run = solver(problem);
        SweepPoint& p = points[i];
        p.delta = deltas[i];
        p.kappa_delta = run.noise_level;
        p.stop_iter = run.result.trace.back().iter;
        p.final_error = (run.result.x - problem.x_true).norm();
        p.stop_reason = run.result.stop_reason;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return points;
}

SweepSolver standard_sweep_solver(SweepSolverOptions options) {
  return [options](const TestProblem& problem) {
    SolveConfig cfg = options.cfg;
    cfg.stop_at_discrepancy = true;
    cfg.delta = problem.delta;
    const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(problem.op.dim_domain()));
    SweepRun run;
    if (is_augmented(cfg.method)) {
      if (!options.recycle) throw ConfigError("augmented sweep needs a recycle-space builder");
      const RecycleSpace rs = options.recycle(problem);
      if (options.use_kappa) {
        const double t_norm = options.t_norm ? *options.t_norm : norm_estimate(problem.op);
        cfg.delta = bounds(rs, t_norm, problem.delta).kappa_u * problem.delta;
      }
      run.result = solve(problem.op, &rs, problem.y_delta, x0, cfg);
    } else {
      run.result = solve(problem.op, nullptr, problem.y_delta, x0, cfg);
    }
    run.noise_level = cfg.delta;
    return run;
  };
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& points) {
  out << "delta,kappa_delta,stop_iter,final_error,stop_reason\n";
  for (const auto& p : points) {
    out << format_double(p.delta) << ',' << format_double(p.kappa_delta) << ',' << p.stop_iter << ','
        << format_double(p.final_error) << ',' << to_string(p.stop_reason) << '\n';
  }
}

}  // namespace deflact
