#pragma once

// Recycle (augmentation) spaces: k-tuples of vectors, the Gram-Schmidt pairing
// C = T U with orthonormal C, the projectors P (T*T-orthogonal onto span U) and
// Q (orthogonal onto span C), and strategies for choosing U.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "deflact/linops.hpp"

namespace deflact {

/// An ordered list of k vectors of common length n, stored as the columns of
/// an n x k matrix. Right-multiplication by z in R^k gives sum_i z_i m_i.
class KTuple {
 public:
  KTuple() = default;
  /// Empty tuple (k = 0) of vectors of length n.
  explicit KTuple(std::size_t n) : columns_(static_cast<Eigen::Index>(n), 0) {}
  explicit KTuple(Matrix columns);
  static KTuple from_vectors(const std::vector<Vector>& vectors);

  std::size_t size() const noexcept { return static_cast<std::size_t>(columns_.cols()); }
  std::size_t length() const noexcept { return static_cast<std::size_t>(columns_.rows()); }
  bool empty() const noexcept { return columns_.cols() == 0; }

  const Matrix& matrix() const noexcept { return columns_; }
  Vector column(std::size_t i) const { return columns_.col(static_cast<Eigen::Index>(i)); }

  /// sum_i z_i m_i. Throws DimensionError if z.size() != k.
  Vector operator*(const Vector& z) const;
  /// Right-multiplication by a k x j matrix, column by column.
  KTuple operator*(const Matrix& m) const;

 private:
  Matrix columns_;
};

/// (x, M) = (<x, m_1>, ..., <x, m_k>).
Vector bilinear_xu(const Vector& x, const KTuple& m);
/// (M, L) with entries <m_i, l_j>.
Matrix gram(const KTuple& m, const KTuple& l);

/// A pair (U, C) with C orthonormal and T U = C, and the triangular factor R
/// of T U_raw = C R (so U = U_raw R^{-1}).
class RecycleSpace {
 public:
  /// k = 0 space for an operator R^n -> R^m.
  static RecycleSpace empty(std::size_t dim_domain, std::size_t dim_range);
  /// Assembles a space from stored parts; checks shapes and orthonormality of C.
  static RecycleSpace from_parts(KTuple u, KTuple c, Matrix r);

  std::size_t size() const noexcept { return u_.size(); }
  bool empty() const noexcept { return u_.empty(); }
  std::size_t dim_domain() const noexcept { return u_.length(); }
  std::size_t dim_range() const noexcept { return c_.length(); }

  const KTuple& u() const noexcept { return u_; }
  const KTuple& c() const noexcept { return c_; }
  const Matrix& r() const noexcept { return r_; }

 private:
  RecycleSpace(KTuple u, KTuple c, Matrix r) : u_(std::move(u)), c_(std::move(c)), r_(std::move(r)) {}
  friend RecycleSpace qr_against(const LinearMap& op, const KTuple& u_raw);

  KTuple u_;
  KTuple c_;
  Matrix r_;
};

/// Modified Gram-Schmidt (with one reorthogonalization pass) of T U_raw.
/// Throws RankDeficiencyError naming the first column whose diagonal entry of R
/// falls below 1e-12 * ||T u_raw_0||.
RecycleSpace qr_against(const LinearMap& op, const KTuple& u_raw);

/// Q w = C (w, C).
Vector apply_Q(const RecycleSpace& rs, const Vector& w);
/// P v = U (T v, C).
Vector apply_P(const RecycleSpace& rs, const LinearMap& op, const Vector& v);
/// x_p = U (y, C), the cheap approximation of P x from data y.
Vector initial_projection(const RecycleSpace& rs, const Vector& y);

/// Q as a standalone action, e.g. for deflate().
ProjectorAction q_projector(const RecycleSpace& rs);

/// Largest column-wise ||T u_i - c_i||.
double consistency_error(const RecycleSpace& rs, const LinearMap& op);

struct BoundReport {
  double init_proj_bound = 0.0;  ///< bound on ||x_p(exact) - x_p(noisy)||
  double kappa_u = 1.0;          ///< data-error amplification factor
  double gram_fro = 0.0;         ///< ||(U, U)||_F
  double sum_u_norms = 0.0;      ///< sum_l ||u_l||^2
  double inv_gram_fro = 0.0;     ///< ||(C, C)^{-1}||_F
};

/// Noise-propagation constants of the initial projection:
///   init_proj_bound = sqrt(||(U,U)||_F * sum ||u_l||^2) * ||(C,C)^{-1}||_F * ||T|| * delta
///   kappa_u         = 1 + ||T|| * sqrt(||(U,U)||_F * sum ||u_l||^2) * ||(C,C)^{-1}||_F
BoundReport bounds(const RecycleSpace& rs, double t_norm, double delta);

struct RitzPairs {
  KTuple vectors;  ///< orthonormal, eigenvalue-descending
  Vector values;
};

/// Rayleigh-Ritz extraction for a self-adjoint operator A (typically T*T) from
/// span(V): A v - lambda v is orthogonal to span(V).
RitzPairs ritz_vectors(const LinearMap& op, const KTuple& v, std::size_t count);

struct EigenResult {
  KTuple vectors;     ///< orthonormal, eigenvalue-descending
  Vector values;
  Vector residuals;   ///< ||A v - lambda v|| per kept pair
  std::size_t pruned = 0;
  int iterations = 0;
};

/// Dominant eigenvectors of a self-adjoint operator by subspace iteration with
/// Rayleigh-Ritz. Pairs with ||A v - lambda v|| > residual_tol are discarded.
EigenResult top_eigenvectors(const LinearMap& op, std::size_t count, int iters, std::uint64_t seed,
                             double residual_tol = 1e-6);

struct RecycleBasis {
  KTuple basis;             ///< Euclidean-orthonormal
  std::size_t dropped = 0;  ///< inputs dependent on earlier ones
};

/// Orthonormal basis of span(solutions). Directions whose remainder after
/// orthogonalization is below drop_tol times their norm are dropped and counted.
RecycleBasis recycle_from_solutions(const std::vector<Vector>& solutions, double drop_tol = 1e-10);

/// Writes u_000.rg ..., c_000.rg ... and r.csv. Each u is stored with shape
/// rows x cols (rows * cols must equal the domain dimension); each c uses the
/// same shape when the range has that size, m x 1 otherwise.
void save_recycle_space(const std::filesystem::path& dir, const RecycleSpace& rs, std::size_t rows,
                        std::size_t cols);
/// Reads a saved space; an empty r.csv yields the k = 0 space.
RecycleSpace load_recycle_space(const std::filesystem::path& dir, std::size_t dim_domain, std::size_t dim_range);

}  // namespace deflact
