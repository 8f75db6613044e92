#pragma once

#include <cstdint>
#include <random>

#include "deflact/linops.hpp"
#include "deflact/recycle.hpp"
#include "oracles.hpp"

namespace fixtures {

inline deflact::LinearMap diag2() { return deflact::diagonal_operator(deflact::Vector{{2.0, 1.0}}); }

inline deflact::Vector vec(std::initializer_list<double> v) {
  deflact::Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/// Recycle space of DIAG2 built from U_raw = {e1}.
inline deflact::RecycleSpace diag2_space() {
  return deflact::qr_against(diag2(), deflact::KTuple(deflact::Matrix{{1.0}, {0.0}}));
}

inline deflact::Matrix random_dense(Eigen::Index m, Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_matrix(m, n, rng);
}

/// Square matrix with a prescribed, well-separated singular spectrum.
inline deflact::Matrix conditioned_dense(Eigen::Index n, double cond, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const deflact::Matrix q1 = oracle::random_matrix(n, n, rng).householderQr().householderQ();
  const deflact::Matrix q2 = oracle::random_matrix(n, n, rng).householderQr().householderQ();
  deflact::Vector s(n);
  for (Eigen::Index i = 0; i < n; ++i)
    s[i] = std::pow(cond, -static_cast<double>(i) / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)));
  return q1 * s.asDiagonal() * q2.transpose();
}

inline deflact::KTuple random_tuple(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return deflact::KTuple(oracle::random_matrix(n, k, rng));
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace fixtures
