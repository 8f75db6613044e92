#pragma once

// Per-iteration bookkeeping and stopping rules shared by every solver.

#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace deflact {

enum class StopReason { discrepancy, max_iters, stagnation };

std::string to_string(StopReason reason);

struct TraceRow {
  std::size_t iter = 0;
  double residual_norm = 0.0;
  std::optional<double> error_norm;
  double alpha = 0.0;
  double wallclock_ms = 0.0;
  std::optional<int> qr_rank;  ///< only set by the nonlinear augmented method
};

/// Rows indexed from 0 (the starting state) in strictly increasing order.
class IterationTrace {
 public:
  void push(TraceRow row);

  const std::vector<TraceRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  const TraceRow& back() const { return rows_.back(); }
  TraceRow& back() { return rows_.back(); }
  const TraceRow& operator[](std::size_t i) const { return rows_[i]; }

  bool has_errors() const;

 private:
  std::vector<TraceRow> rows_;
};

/// ||y - T x_k|| <= tau * delta. Throws ConfigError for tau <= 1 or delta < 0.
bool discrepancy_stop(const TraceRow& row, double tau, double delta);

/// First index satisfying the discrepancy principle, scanning the whole trace.
std::optional<std::size_t> discrepancy_index(const IterationTrace& trace, double tau, double delta);

/// Index of the smallest recorded error (first one on ties). Empty if the
/// trace carries no error norms.
std::optional<std::size_t> semiconvergence_index(const IterationTrace& trace);

/// Discrepancy principle and/or an iteration cap.
struct StopRule {
  std::optional<double> tau;
  double delta = 0.0;
  std::size_t max_iters = 0;

  static StopRule discrepancy(double tau, double delta, std::size_t max_iters);
  static StopRule iterations(std::size_t max_iters);

  /// Checks the rule parameters; throws ConfigError.
  void validate() const;
  /// Reason to stop after recording `row`, if any.
  std::optional<StopReason> check(const TraceRow& row) const;
};

/// `iter,residual_norm,error_norm,alpha,stop[,qr_rank]`. The stop column is
/// filled on the final row only.
void write_trace_csv(std::ostream& out, const IterationTrace& trace, StopReason reason,
                     bool with_qr_rank = false);

}  // namespace deflact
