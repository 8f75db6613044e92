#include "deflact/linops.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace deflact {

namespace {

void check_size(const Vector& v, std::size_t expected, const char* what, const std::string& label) {
  if (static_cast<std::size_t>(v.size()) != expected) {
    throw DimensionError(std::string(what) + (label.empty() ? "" : " of '" + label + "'") +
                         ": expected vector of length " + std::to_string(expected) + ", got " +
                         std::to_string(v.size()));
  }
}

std::size_t wrap(long long value, std::size_t n) {
  const auto m = static_cast<long long>(n);
  return static_cast<std::size_t>(((value % m) + m) % m);
}

// out(i, j) += w * in((i - sign*dp) mod rows, (j - sign*dq) mod cols) for every PSF
// entry w at offset (dp, dq) from the center. sign = +1 is convolution with the
// PSF, sign = -1 convolution with its point reflection.
void periodic_convolve(const PsfGrid& psf, std::size_t rows, std::size_t cols, const double* in,
                       double* out, int sign) {
  for (std::size_t p = 0; p < psf.rows; ++p) {
    for (std::size_t q = 0; q < psf.cols; ++q) {
      const double w = psf.at(p, q);
      if (w == 0.0) continue;
      const long long dp = sign * (static_cast<long long>(p) - static_cast<long long>(psf.center_row));
      const long long dq = sign * (static_cast<long long>(q) - static_cast<long long>(psf.center_col));
      const std::size_t row_shift = wrap(-dp, rows);
      const std::size_t col_shift = wrap(-dq, cols);
      const std::size_t head = cols - col_shift;
      std::size_t src_row = row_shift;
      for (std::size_t i = 0; i < rows; ++i) {
        const double* src = in + src_row * cols;
        double* dst = out + i * cols;
        for (std::size_t j = 0; j < head; ++j) dst[j] += w * src[j + col_shift];
        for (std::size_t j = head; j < cols; ++j) dst[j] += w * src[j - head];
        if (++src_row == rows) src_row = 0;
      }
    }
  }
}

// Rank-one factorization psf = a b^T, if the grid admits one to rounding level.
struct SeparableKernel {
  Vector a;
  Vector b;
};

std::optional<SeparableKernel> separate(const PsfGrid& psf) {
  Eigen::Index pr = 0, pc = 0;
  const double peak = psf.values.cwiseAbs().maxCoeff(&pr, &pc);
  if (peak == 0.0) return std::nullopt;
  SeparableKernel k{psf.values.col(pc), psf.values.row(pr).transpose() / psf.values(pr, pc)};
  const double misfit = (psf.values - k.a * k.b.transpose()).cwiseAbs().maxCoeff();
  if (misfit > 1e-13 * peak) return std::nullopt;
  return k;
}

void separable_convolve(const SeparableKernel& k, const PsfGrid& psf, std::size_t rows, std::size_t cols,
                        const double* in, double* out, int sign) {
  std::vector<double> tmp(rows * cols, 0.0);
  for (std::size_t q = 0; q < psf.cols; ++q) {
    const double w = k.b[static_cast<Eigen::Index>(q)];
    if (w == 0.0) continue;
    const long long dq = sign * (static_cast<long long>(q) - static_cast<long long>(psf.center_col));
    const std::size_t col_shift = wrap(-dq, cols);
    const std::size_t head = cols - col_shift;
    for (std::size_t i = 0; i < rows; ++i) {
      const double* src = in + i * cols;
      double* dst = tmp.data() + i * cols;
      for (std::size_t j = 0; j < head; ++j) dst[j] += w * src[j + col_shift];
      for (std::size_t j = head; j < cols; ++j) dst[j] += w * src[j - head];
    }
  }
  for (std::size_t p = 0; p < psf.rows; ++p) {
    const double w = k.a[static_cast<Eigen::Index>(p)];
    if (w == 0.0) continue;
    const long long dp = sign * (static_cast<long long>(p) - static_cast<long long>(psf.center_row));
    std::size_t src_row = wrap(-dp, rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const double* src = tmp.data() + src_row * cols;
      double* dst = out + i * cols;
      for (std::size_t j = 0; j < cols; ++j) dst[j] += w * src[j];
      if (++src_row == rows) src_row = 0;
    }
  }
}

}  // namespace

LinearMap::LinearMap(std::size_t dim_domain, std::size_t dim_range, VectorAction forward,
                     VectorAction adjoint, std::string label)
    : dim_domain_(dim_domain),
      dim_range_(dim_range),
      forward_(std::make_shared<const VectorAction>(std::move(forward))),
      adjoint_(std::make_shared<const VectorAction>(std::move(adjoint))),
      label_(std::move(label)) {
  if (dim_domain_ == 0 || dim_range_ == 0) throw ConfigError("LinearMap dimensions must be positive");
}

Vector LinearMap::apply(const Vector& x) const {
  check_size(x, dim_domain_, "apply", label_);
  Vector y = (*forward_)(x);
  check_size(y, dim_range_, "forward result", label_);
  return y;
}

Vector LinearMap::apply_adjoint(const Vector& y) const {
  check_size(y, dim_range_, "apply_adjoint", label_);
  Vector x = (*adjoint_)(y);
  check_size(x, dim_domain_, "adjoint result", label_);
  return x;
}

LinearMap LinearMap::adjoint() const {
  auto fwd = forward_;
  auto adj = adjoint_;
  return LinearMap(
      dim_range_, dim_domain_, [adj](const Vector& y) { return (*adj)(y); },
      [fwd](const Vector& x) { return (*fwd)(x); }, label_ + "*");
}

LinearMap LinearMap::normal() const {
  auto fwd = forward_;
  auto adj = adjoint_;
  auto action = [fwd, adj](const Vector& x) { return (*adj)((*fwd)(x)); };
  return LinearMap(dim_domain_, dim_domain_, action, action, label_ + "*" + label_);
}

Vector apply(const LinearMap& op, const Vector& x) { return op.apply(x); }
Vector apply_adjoint(const LinearMap& op, const Vector& y) { return op.apply_adjoint(y); }

LinearMap identity_operator(std::size_t n) {
  auto id = [](const Vector& x) { return x; };
  return LinearMap(n, n, id, id, "identity");
}

LinearMap diagonal_operator(Vector diagonal) {
  const auto n = static_cast<std::size_t>(diagonal.size());
  auto d = std::make_shared<const Vector>(std::move(diagonal));
  auto act = [d](const Vector& x) -> Vector { return d->cwiseProduct(x); };
  return LinearMap(n, n, act, act, "diagonal");
}

LinearMap dense_operator(Matrix matrix) {
  const auto m = static_cast<std::size_t>(matrix.rows());
  const auto n = static_cast<std::size_t>(matrix.cols());
  auto a = std::make_shared<const Matrix>(std::move(matrix));
  return LinearMap(
      n, m, [a](const Vector& x) -> Vector { return (*a) * x; },
      [a](const Vector& y) -> Vector { return a->transpose() * y; }, "dense");
}

LinearMap deflate(const LinearMap& op, ProjectorAction q_apply) {
  auto q = std::make_shared<const ProjectorAction>(std::move(q_apply));
  auto forward = [op, q](const Vector& x) -> Vector {
    Vector tx = op.apply(x);
    return tx - (*q)(tx);
  };
  auto adjoint = [op, q](const Vector& y) -> Vector { return op.apply_adjoint(y - (*q)(y)); };
  return LinearMap(op.dim_domain(), op.dim_range(), forward, adjoint, "(I-Q)" + op.label());
}

void validate(const PsfGrid& psf) {
  if (psf.rows == 0 || psf.cols == 0) throw ConfigError("PSF grid must be non-empty");
  if (static_cast<std::size_t>(psf.values.rows()) != psf.rows ||
      static_cast<std::size_t>(psf.values.cols()) != psf.cols) {
    throw ConfigError("PSF values do not match declared grid shape");
  }
  if (psf.center_row >= psf.rows || psf.center_col >= psf.cols) {
    throw ConfigError("PSF center lies outside the grid");
  }
  if (!psf.values.allFinite()) throw ConfigError("PSF contains non-finite values");
  if (!(psf.sum() > 0.0)) throw ConfigError("PSF values must have positive sum");
}

PsfGrid gaussian_psf(std::size_t rows, std::size_t cols, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("gaussian_psf: sigma must be positive");
  if (rows == 0 || cols == 0) throw ConfigError("gaussian_psf: grid must be non-empty");
  PsfGrid psf;
  psf.rows = rows;
  psf.cols = cols;
  psf.center_row = rows / 2;
  psf.center_col = cols / 2;
  psf.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const double denom = 2.0 * sigma * sigma;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double dr = static_cast<double>(r) - static_cast<double>(psf.center_row);
      const double dc = static_cast<double>(c) - static_cast<double>(psf.center_col);
      double v = std::exp(-(dr * dr + dc * dc) / denom);
      if (v < std::numeric_limits<double>::min()) v = 0.0;
      psf.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  psf.values /= psf.values.sum();
  return psf;
}

PsfGrid reflect(const PsfGrid& psf) {
  PsfGrid out;
  out.rows = psf.rows;
  out.cols = psf.cols;
  out.values = psf.values.reverse();
  out.center_row = psf.rows - 1 - psf.center_row;
  out.center_col = psf.cols - 1 - psf.center_col;
  return out;
}

LinearMap psf_operator(const PsfGrid& psf, std::size_t rows, std::size_t cols) {
  validate(psf);
  if (psf.rows > rows || psf.cols > cols) {
    throw DimensionError("psf_operator: PSF grid " + std::to_string(psf.rows) + "x" +
                         std::to_string(psf.cols) + " exceeds image " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  auto kernel = std::make_shared<const PsfGrid>(psf);
  std::shared_ptr<const SeparableKernel> factors;
  if (auto k = separate(psf)) factors = std::make_shared<const SeparableKernel>(std::move(*k));
  const std::size_t n = rows * cols;
  auto convolve = [kernel, factors, rows, cols](const double* in, double* out, int sign) {
    if (factors) {
      separable_convolve(*factors, *kernel, rows, cols, in, out, sign);
    } else {
      periodic_convolve(*kernel, rows, cols, in, out, sign);
    }
  };
  auto forward = [convolve, n](const Vector& x) -> Vector {
    Vector y = Vector::Zero(static_cast<Eigen::Index>(n));
    convolve(x.data(), y.data(), +1);
    return y;
  };
  auto adjoint = [convolve, n](const Vector& y) -> Vector {
    Vector x = Vector::Zero(static_cast<Eigen::Index>(n));
    convolve(y.data(), x.data(), -1);
    return x;
  };
  return LinearMap(n, n, forward, adjoint, "psf");
}

double norm_estimate(const LinearMap& op, int iters, std::uint64_t seed) {
  if (iters < 1) throw ConfigError("norm_estimate: iters must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(op.dim_domain()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  v.normalize();
  for (int it = 0; it < iters; ++it) {
    Vector w = op.apply_normal_domain(v);
    const double nrm = w.norm();
    if (nrm == 0.0) return 0.0;
    v = w / nrm;
  }
  return op.apply(v).norm();
}

}  // namespace deflact
