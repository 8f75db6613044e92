#include "deflact/recycle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "deflact/rgrid.hpp"
#include "deflact/text.hpp"

namespace deflact {

namespace {

constexpr double kRankTol = 1e-12;

void check_length(const Vector& x, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(x.size()) != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                         std::to_string(x.size()));
  }
}

// Orthonormalizes columns in place with two-pass modified Gram-Schmidt.
// Returns the index of the first column whose remainder falls below
// tol * (its original norm), or -1 if all are independent. If `refill` is
// given, dependent columns are replaced by orthogonalized random vectors.
Eigen::Index orthonormalize(Matrix& m, double tol, std::mt19937_64* refill) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (int attempt = 0;; ++attempt) {
      const double original = m.col(j).norm();
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index i = 0; i < j; ++i) m.col(j) -= m.col(i).dot(m.col(j)) * m.col(i);
      }
      const double remaining = m.col(j).norm();
      if (original > 0.0 && remaining > tol * original) {
        m.col(j) /= remaining;
        break;
      }
      if (refill == nullptr || attempt > 8) return j;
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, j) = normal(*refill);
    }
  }
  return -1;
}

struct RayleighRitz {
  Matrix vectors;
  Vector values;
  Vector residuals;
};

// Ritz pairs of A from an orthonormal basis V, given AV. Sorted by value, descending.
RayleighRitz rayleigh_ritz(const Matrix& v, const Matrix& av) {
  Matrix h = v.transpose() * av;
  h = 0.5 * (h + h.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(h);
  const Eigen::Index p = h.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return eig.eigenvalues()[a] > eig.eigenvalues()[b];
  });
  Matrix y(p, p);
  RayleighRitz out;
  out.values.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    y.col(i) = eig.eigenvectors().col(order[static_cast<std::size_t>(i)]);
    out.values[i] = eig.eigenvalues()[order[static_cast<std::size_t>(i)]];
  }
  out.vectors = v * y;
  const Matrix avy = av * y;
  out.residuals.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) out.residuals[i] = (avy.col(i) - out.values[i] * out.vectors.col(i)).norm();
  // Sign flips commute with the residual computation above.
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::Index arg = 0;
    out.vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.vectors(arg, j) < 0.0) out.vectors.col(j) *= -1.0;
  }
  return out;
}

Matrix apply_columns(const LinearMap& op, const Matrix& v) {
  Matrix out(static_cast<Eigen::Index>(op.dim_range()), v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) out.col(j) = op.apply(v.col(j));
  return out;
}

std::string indexed_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.rg", prefix, i);
  return buf;
}

}  // namespace

KTuple::KTuple(Matrix columns) : columns_(std::move(columns)) {
  if (columns_.cols() > columns_.rows()) {
    throw DimensionError("KTuple: " + std::to_string(columns_.cols()) + " vectors of length " +
                         std::to_string(columns_.rows()) + " (k must not exceed n)");
  }
}

KTuple KTuple::from_vectors(const std::vector<Vector>& vectors) {
  if (vectors.empty()) throw DimensionError("KTuple::from_vectors: empty list has no length");
  const Eigen::Index n = vectors.front().size();
  Matrix m(n, static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != n) throw DimensionError("KTuple::from_vectors: vectors differ in length");
    m.col(static_cast<Eigen::Index>(i)) = vectors[i];
  }
  return KTuple(std::move(m));
}

Vector KTuple::operator*(const Vector& z) const {
  check_length(z, size(), "KTuple * z");
  return columns_ * z;
}

KTuple KTuple::operator*(const Matrix& m) const {
  if (static_cast<std::size_t>(m.rows()) != size()) throw DimensionError("KTuple * M: inner dimensions differ");
  return KTuple(Matrix(columns_ * m));
}

Vector bilinear_xu(const Vector& x, const KTuple& m) {
  check_length(x, m.length(), "bilinear_xu");
  return m.matrix().transpose() * x;
}

Matrix gram(const KTuple& m, const KTuple& l) {
  if (m.length() != l.length()) throw DimensionError("gram: tuples have different vector lengths");
  return m.matrix().transpose() * l.matrix();
}

RecycleSpace RecycleSpace::empty(std::size_t dim_domain, std::size_t dim_range) {
  return RecycleSpace(KTuple(dim_domain), KTuple(dim_range), Matrix(0, 0));
}

RecycleSpace RecycleSpace::from_parts(KTuple u, KTuple c, Matrix r) {
  const auto k = static_cast<Eigen::Index>(u.size());
  if (c.size() != u.size() || r.rows() != k || r.cols() != k) {
    throw DimensionError("RecycleSpace: U, C and R sizes disagree");
  }
  const Matrix cc = gram(c, c);
  if (k > 0 && (cc - Matrix::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-10) {
    throw ConfigError("RecycleSpace: C is not orthonormal");
  }
  return RecycleSpace(std::move(u), std::move(c), std::move(r));
}

RecycleSpace qr_against(const LinearMap& op, const KTuple& u_raw) {
  if (u_raw.length() != op.dim_domain()) {
    throw DimensionError("qr_against: recycle vectors have length " + std::to_string(u_raw.length()) +
                         ", operator domain is " + std::to_string(op.dim_domain()));
  }
  const auto k = static_cast<Eigen::Index>(u_raw.size());
  Matrix u(static_cast<Eigen::Index>(op.dim_domain()), k);
  Matrix c(static_cast<Eigen::Index>(op.dim_range()), k);
  Matrix r = Matrix::Zero(k, k);
  double reference = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    Vector uj = u_raw.matrix().col(j);
    Vector cj = op.apply(uj);
    if (j == 0) reference = cj.norm();
    // T uj == cj is maintained through every update: each subtraction of
    // s * c_i is mirrored by s * u_i, where T u_i = c_i already holds.
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < j; ++i) {
        const double s = c.col(i).dot(cj);
        cj -= s * c.col(i);
        uj -= s * u.col(i);
        r(i, j) += s;
      }
    }
    const double diag = cj.norm();
    if (!(diag > kRankTol * reference)) {
      throw RankDeficiencyError("qr_against: T*U is rank deficient at column " + std::to_string(j) +
                                    " (R diagonal " + format_double(diag) + ")",
                                static_cast<std::size_t>(j));
    }
    r(j, j) = diag;
    c.col(j) = cj / diag;
    u.col(j) = uj / diag;
  }
  return RecycleSpace(KTuple(std::move(u)), KTuple(std::move(c)), std::move(r));
}

Vector apply_Q(const RecycleSpace& rs, const Vector& w) {
  check_length(w, rs.dim_range(), "apply_Q");
  return rs.c().matrix() * (rs.c().matrix().transpose() * w);
}

Vector apply_P(const RecycleSpace& rs, const LinearMap& op, const Vector& v) {
  check_length(v, rs.dim_domain(), "apply_P");
  return rs.u().matrix() * (rs.c().matrix().transpose() * op.apply(v));
}

Vector initial_projection(const RecycleSpace& rs, const Vector& y) {
  check_length(y, rs.dim_range(), "initial_projection");
  return rs.u().matrix() * (rs.c().matrix().transpose() * y);
}

ProjectorAction q_projector(const RecycleSpace& rs) {
  auto c = std::make_shared<const Matrix>(rs.c().matrix());
  return [c](const Vector& w) -> Vector { return (*c) * (c->transpose() * w); };
}

double consistency_error(const RecycleSpace& rs, const LinearMap& op) {
  double worst = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    worst = std::max(worst, (op.apply(rs.u().column(i)) - rs.c().column(i)).norm());
  }
  return worst;
}

BoundReport bounds(const RecycleSpace& rs, double t_norm, double delta) {
  if (!(t_norm > 0.0)) throw ConfigError("bounds: operator norm must be positive");
  if (!(delta >= 0.0)) throw ConfigError("bounds: delta must be nonnegative");
  BoundReport b;
  if (rs.empty()) return b;
  const auto k = static_cast<Eigen::Index>(rs.size());
  b.gram_fro = gram(rs.u(), rs.u()).norm();
  b.sum_u_norms = rs.u().matrix().squaredNorm();
  const Matrix cc = gram(rs.c(), rs.c());
  const Matrix cc_inv = cc.ldlt().solve(Matrix::Identity(k, k));
  b.inv_gram_fro = cc_inv.norm();
  const double root = std::sqrt(b.gram_fro * b.sum_u_norms);
  b.init_proj_bound = root * b.inv_gram_fro * t_norm * delta;
  b.kappa_u = 1.0 + t_norm * root * b.inv_gram_fro;
  return b;
}

RitzPairs ritz_vectors(const LinearMap& op, const KTuple& v, std::size_t count) {
  if (op.dim_domain() != op.dim_range()) throw DimensionError("ritz_vectors: operator must be square");
  if (v.length() != op.dim_domain()) throw DimensionError("ritz_vectors: basis length differs from operator size");
  if (count > v.size()) throw ConfigError("ritz_vectors: count exceeds subspace dimension");
  Matrix basis = v.matrix();
  const Eigen::Index bad = orthonormalize(basis, kRankTol, nullptr);
  if (bad >= 0) {
    throw RankDeficiencyError("ritz_vectors: basis is rank deficient at column " + std::to_string(bad),
                              static_cast<std::size_t>(bad));
  }
  const RayleighRitz rr = rayleigh_ritz(basis, apply_columns(op, basis));
  const auto c = static_cast<Eigen::Index>(count);
  return RitzPairs{KTuple(Matrix(rr.vectors.leftCols(c))), rr.values.head(c)};
}

EigenResult top_eigenvectors(const LinearMap& op, std::size_t count, int iters, std::uint64_t seed,
                             double residual_tol) {
  if (op.dim_domain() != op.dim_range()) throw DimensionError("top_eigenvectors: operator must be square");
  if (count < 1) throw ConfigError("top_eigenvectors: count must be >= 1");
  if (iters < 1) throw ConfigError("top_eigenvectors: iters must be >= 1");
  const std::size_t n = op.dim_domain();
  if (count > n) throw ConfigError("top_eigenvectors: count exceeds operator size");
  const std::size_t block = std::min(n, count + std::max<std::size_t>(5, count / 2));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(block));
  for (Eigen::Index j = 0; j < v.cols(); ++j)
    for (Eigen::Index i = 0; i < v.rows(); ++i) v(i, j) = normal(rng);
  orthonormalize(v, kRankTol, &rng);

  const auto wanted = static_cast<Eigen::Index>(count);
  RayleighRitz rr;
  int it = 0;
  for (;;) {
    const Matrix av = apply_columns(op, v);
    ++it;
    rr = rayleigh_ritz(v, av);
    const double scale = std::max(rr.values.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    if (rr.residuals.head(wanted).maxCoeff() <= 1e-12 * scale || it >= iters) break;
    v = av;
    orthonormalize(v, kRankTol, &rng);
  }

  EigenResult out;
  out.iterations = it;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < wanted; ++i) {
    if (rr.residuals[i] <= residual_tol) keep.push_back(i);
  }
  out.pruned = count - keep.size();
  Matrix vecs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(keep.size()));
  out.values.resize(static_cast<Eigen::Index>(keep.size()));
  out.residuals.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto idx = static_cast<Eigen::Index>(i);
    vecs.col(idx) = rr.vectors.col(keep[i]);
    out.values[idx] = rr.values[keep[i]];
    out.residuals[idx] = rr.residuals[keep[i]];
  }
  out.vectors = KTuple(std::move(vecs));
  return out;
}

RecycleBasis recycle_from_solutions(const std::vector<Vector>& solutions, double drop_tol) {
  if (solutions.empty()) throw ConfigError("recycle_from_solutions: no input vectors");
  const Eigen::Index n = solutions.front().size();
  std::vector<Vector> kept;
  RecycleBasis out;
  for (const Vector& s : solutions) {
    if (s.size() != n) throw DimensionError("recycle_from_solutions: vectors differ in length");
    const double original = s.norm();
    Vector w = s;
    for (int pass = 0; pass < 2; ++pass) {
      for (const Vector& b : kept) w -= b.dot(w) * b;
    }
    const double remaining = w.norm();
    if (!(original > 0.0) || !(remaining > drop_tol * original) || kept.size() == static_cast<std::size_t>(n)) {
      ++out.dropped;
      continue;
    }
    kept.push_back(w / remaining);
  }
  if (kept.empty()) {
    throw RankDeficiencyError("recycle_from_solutions: all input vectors are zero", 0);
  }
  out.basis = KTuple::from_vectors(kept);
  return out;
}

void save_recycle_space(const std::filesystem::path& dir, const RecycleSpace& rs, std::size_t rows,
                        std::size_t cols) {
  if (rows * cols != rs.dim_domain()) throw DimensionError("save_recycle_space: shape does not match domain");
  std::filesystem::create_directories(dir);
  const bool image_range = rs.dim_range() == rows * cols;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    write_rgrid(dir / indexed_name("u", i), Grid::from_vector(rs.u().column(i), rows, cols));
    write_rgrid(dir / indexed_name("c", i), image_range ? Grid::from_vector(rs.c().column(i), rows, cols)
                                                        : Grid::from_vector(rs.c().column(i), rs.dim_range(), 1));
  }
  std::ofstream out(dir / "r.csv", std::ios::trunc);
  if (!out) throw FormatError("cannot write r.csv in '" + dir.string() + "'");
  const Matrix& r = rs.r();
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.cols(); ++j) out << (j ? "," : "") << format_double(r(i, j));
    out << '\n';
  }
}

RecycleSpace load_recycle_space(const std::filesystem::path& dir, std::size_t dim_domain, std::size_t dim_range) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("recycle space '" + dir.string() + "' is not a directory");
  std::ifstream in(dir / "r.csv");
  if (!in) throw FormatError("recycle space '" + dir.string() + "' has no r.csv");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      double v = 0.0;
      if (!parse_double(cell, v)) throw FormatError("r.csv: bad value '" + cell + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  const std::size_t k = rows.size();
  Matrix r(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    if (rows[i].size() != k) throw FormatError("r.csv: expected a square matrix");
    for (std::size_t j = 0; j < k; ++j) r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  if (k == 0) return RecycleSpace::empty(dim_domain, dim_range);
  std::vector<Vector> us, cs;
  for (std::size_t i = 0; i < k; ++i) {
    us.push_back(read_rgrid(dir / indexed_name("u", i)).as_vector());
    cs.push_back(read_rgrid(dir / indexed_name("c", i)).as_vector());
  }
  if (static_cast<std::size_t>(us.front().size()) != dim_domain || static_cast<std::size_t>(cs.front().size()) != dim_range) {
    throw DimensionError("recycle space '" + dir.string() + "' does not match the operator dimensions");
  }
  return RecycleSpace::from_parts(KTuple::from_vectors(us), KTuple::from_vectors(cs), std::move(r));
}

}  // namespace deflact
