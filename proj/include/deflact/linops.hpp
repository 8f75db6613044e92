#pragma once

// Matrix-free linear operators between real coordinate spaces.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "deflact/errors.hpp"

namespace deflact {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Action of a linear map on a vector whose size has already been checked.
using VectorAction = std::function<Vector(const Vector&)>;

/// A bounded linear operator T : R^n -> R^m given by its forward and adjoint
/// actions. Immutable after construction; copies share the underlying actions.
class LinearMap {
 public:
  LinearMap(std::size_t dim_domain, std::size_t dim_range, VectorAction forward,
            VectorAction adjoint, std::string label = {});

  std::size_t dim_domain() const noexcept { return dim_domain_; }
  std::size_t dim_range() const noexcept { return dim_range_; }
  const std::string& label() const noexcept { return label_; }

  /// Tx. Throws DimensionError if x.size() != dim_domain().
  Vector apply(const Vector& x) const;
  /// T*y. Throws DimensionError if y.size() != dim_range().
  Vector apply_adjoint(const Vector& y) const;

  /// T T* y, the operator that drives gradient steps in the range space.
  Vector apply_normal_range(const Vector& y) const { return apply(apply_adjoint(y)); }
  /// T* T x.
  Vector apply_normal_domain(const Vector& x) const { return apply_adjoint(apply(x)); }

  /// The adjoint T* as a LinearMap in its own right.
  LinearMap adjoint() const;
  /// T*T as a self-adjoint LinearMap on the domain.
  LinearMap normal() const;

 private:
  std::size_t dim_domain_;
  std::size_t dim_range_;
  std::shared_ptr<const VectorAction> forward_;
  std::shared_ptr<const VectorAction> adjoint_;
  std::string label_;
};

Vector apply(const LinearMap& op, const Vector& x);
Vector apply_adjoint(const LinearMap& op, const Vector& y);

LinearMap identity_operator(std::size_t n);
LinearMap diagonal_operator(Vector diagonal);
LinearMap dense_operator(Matrix matrix);

/// A range-space projector action, e.g. the orthogonal projector onto span(C).
using ProjectorAction = std::function<Vector(const Vector&)>;

/// B = (I - Q) T with adjoint B* = T* (I - Q). Q must be self-adjoint and
/// idempotent for the adjoint to be exact.
LinearMap deflate(const LinearMap& op, ProjectorAction q_apply);

/// Point spread function sampled on a grid. `center_row`/`center_col` index
/// the entry holding the PSF value at offset (0, 0).
struct PsfGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Matrix values;
  std::size_t center_row = 0;
  std::size_t center_col = 0;

  double at(std::size_t r, std::size_t c) const { return values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)); }
  double sum() const { return values.sum(); }
};

/// Throws ConfigError unless values are finite, sum is positive and the
/// center lies in the grid.
void validate(const PsfGrid& psf);

/// Samples exp(-(x^2 + y^2) / (2 sigma^2)) around the grid center
/// (rows / 2, cols / 2) and normalizes to unit sum. Subnormal samples are
/// flushed to zero.
PsfGrid gaussian_psf(std::size_t rows, std::size_t cols, double sigma);

/// PSF of the adjoint convolution: PSFadj(x, y) = PSF(-x, -y).
PsfGrid reflect(const PsfGrid& psf);

/// Periodic convolution of a row-major rows x cols image with the PSF, by
/// direct summation. The adjoint convolves with the reflected PSF. A PSF that
/// factors as an outer product (to rounding) is applied as two 1-D passes.
LinearMap psf_operator(const PsfGrid& psf, std::size_t rows, std::size_t cols);

/// Power-iteration estimate of ||T|| = sqrt(lambda_max(T*T)), from a
/// seeded random start vector.
double norm_estimate(const LinearMap& op, int iters = 200, std::uint64_t seed = 0);

}  // namespace deflact
