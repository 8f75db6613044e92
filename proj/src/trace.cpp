#include "deflact/trace.hpp"

#include <cmath>

#include "deflact/errors.hpp"
#include "deflact/text.hpp"

namespace deflact {

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::discrepancy: return "discrepancy";
    case StopReason::max_iters: return "max_iters";
    case StopReason::stagnation: return "stagnation";
  }
  return "unknown";
}

void IterationTrace::push(TraceRow row) {
  if (!rows_.empty() && row.iter <= rows_.back().iter) {
    throw ConfigError("IterationTrace: iteration indices must increase");
  }
  if (!(row.residual_norm >= 0.0)) throw ConfigError("IterationTrace: residual norm must be nonnegative");
  rows_.push_back(row);
}

bool IterationTrace::has_errors() const {
  for (const auto& r : rows_)
    if (r.error_norm) return true;
  return false;
}

bool discrepancy_stop(const TraceRow& row, double tau, double delta) {
  if (!(tau > 1.0)) throw ConfigError("discrepancy principle requires tau > 1, got " + format_double(tau));
  if (!(delta >= 0.0)) throw ConfigError("noise level delta must be nonnegative");
  return row.residual_norm <= tau * delta;
}

std::optional<std::size_t> discrepancy_index(const IterationTrace& trace, double tau, double delta) {
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (discrepancy_stop(trace[i], tau, delta)) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> semiconvergence_index(const IterationTrace& trace) {
  std::optional<std::size_t> best;
  double best_err = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& e = trace[i].error_norm;
    if (!e) continue;
    if (!best || *e < best_err) {
      best = i;
      best_err = *e;
    }
  }
  return best;
}

StopRule StopRule::discrepancy(double tau, double delta, std::size_t max_iters) {
  StopRule r;
  r.tau = tau;
  r.delta = delta;
  r.max_iters = max_iters;
  r.validate();
  return r;
}

StopRule StopRule::iterations(std::size_t max_iters) {
  StopRule r;
  r.max_iters = max_iters;
  r.validate();
  return r;
}

void StopRule::validate() const {
  if (tau && !(*tau > 1.0)) throw ConfigError("discrepancy principle requires tau > 1, got " + format_double(*tau));
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("noise level delta must be finite and nonnegative");
  if (max_iters < 1) throw ConfigError("max_iters must be positive");
}

std::optional<StopReason> StopRule::check(const TraceRow& row) const {
  if (tau && discrepancy_stop(row, *tau, delta)) return StopReason::discrepancy;
  if (row.iter >= max_iters) return StopReason::max_iters;
  return std::nullopt;
}

void write_trace_csv(std::ostream& out, const IterationTrace& trace, StopReason reason, bool with_qr_rank) {
  out << "iter,residual_norm,error_norm,alpha,stop" << (with_qr_rank ? ",qr_rank" : "") << '\n';
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceRow& r = trace[i];
    out << r.iter << ',' << format_double(r.residual_norm) << ','
        << (r.error_norm ? format_double(*r.error_norm) : std::string()) << ',' << format_double(r.alpha) << ','
        << (i + 1 == trace.size() ? to_string(reason) : std::string());
    if (with_qr_rank) out << ',' << (r.qr_rank ? std::to_string(*r.qr_rank) : std::string());
    out << '\n';
  }
}

}  // namespace deflact
