#include "deflact/problems.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "deflact/errors.hpp"
#include "deflact/rgrid.hpp"
#include "deflact/text.hpp"

namespace deflact {

namespace {

// Independent streams per purpose from one user seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t parts[2];
  seq.generate(parts, parts + 2);
  return (static_cast<std::uint64_t>(parts[0]) << 32) | parts[1];
}

enum Stream : std::uint64_t { kImage = 1, kNoise = 2, kOperator = 3, kSolution = 4 };

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal(rng);
  return m;
}

Vector gaussian_vector(std::size_t n, std::mt19937_64& rng) {
  return gaussian_matrix(n, 1, rng).col(0);
}

Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
  const Matrix g = gaussian_matrix(n, n, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
  // Fix column signs so Q does not depend on the QR sign convention.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

std::size_t psf_extent(std::size_t n, double sigma) {
  const double half = std::ceil(4.0 * sigma);
  const double want = 2.0 * half + 1.0;
  if (want >= static_cast<double>(n)) return n;
  return static_cast<std::size_t>(want);
}

void add_noise(TestProblem& p, double norm, bool uniform) {
  const std::size_t m = static_cast<std::size_t>(p.y_exact.size());
  const std::uint64_t s = stream_seed(p.seed, kNoise);
  p.y_delta = p.y_exact;
  if (norm > 0.0) p.y_delta += uniform ? uniform_noise(m, norm, s) : gaussian_noise(m, norm, s);
  p.delta = (p.y_delta - p.y_exact).norm();
  const double y_norm = p.y_exact.norm();
  p.delta_rel = y_norm > 0.0 ? p.delta / y_norm : 0.0;
}

std::string image_name(const ImageSpec& image) {
  switch (image.kind) {
    case ImageKind::geometric: return "geometric";
    case ImageKind::starfield: return "starfield";
    case ImageKind::file: return "file";
  }
  return "unknown";
}

NonlinearMap toy_map(const Matrix& t, double epsilon) {
  const auto n = static_cast<std::size_t>(t.cols());
  auto mat = std::make_shared<const Matrix>(t);
  return NonlinearMap(
      n, n, [mat, epsilon](const Vector& x) { return Vector(*mat * x + epsilon * x.cwiseProduct(x)); },
      [mat, epsilon](const Vector& x, const Vector& v) {
        return Vector(*mat * v + 2.0 * epsilon * x.cwiseProduct(v));
      },
      [mat, epsilon](const Vector& x, const Vector& w) {
        return Vector(mat->transpose() * w + 2.0 * epsilon * x.cwiseProduct(w));
      },
      "toy");
}

Matrix grid_matrix(const Grid& g) {
  Matrix m(static_cast<Eigen::Index>(g.rows), static_cast<Eigen::Index>(g.cols));
  for (std::size_t i = 0; i < g.rows; ++i)
    for (std::size_t j = 0; j < g.cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g.values[i * g.cols + j];
  return m;
}

Grid matrix_grid(const Matrix& m) {
  Grid g;
  g.rows = static_cast<std::size_t>(m.rows());
  g.cols = static_cast<std::size_t>(m.cols());
  g.values.resize(g.rows * g.cols);
  for (std::size_t i = 0; i < g.rows; ++i)
    for (std::size_t j = 0; j < g.cols; ++j)
      g.values[i * g.cols + j] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return g;
}

std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed manifest line: " + line);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\"");
      const auto e = s.find_last_not_of(" \t\"\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

double number(const std::map<std::string, std::string>& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  double v = 0.0;
  if (!parse_double(it->second, v)) throw FormatError("manifest key " + key + " is not a number: " + it->second);
  return v;
}

std::uint64_t integer(const std::map<std::string, std::string>& kv, const std::string& key, std::uint64_t fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw FormatError("manifest key " + key + " is not an integer: " + s);
  return v;
}

std::string text(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("manifest is missing key " + key);
  return it->second;
}

}  // namespace

Vector geometric_image(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw ConfigError("image dimensions must be positive");
  const long cr = static_cast<long>(rows / 2);
  const long cc = static_cast<long>(cols / 2);
  const long w = std::max<long>(1, static_cast<long>(std::min(rows, cols) / 16));
  Vector img(static_cast<Eigen::Index>(rows * cols));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const long d = std::max(std::labs(static_cast<long>(i) - cr), std::labs(static_cast<long>(j) - cc));
      const long ring = d / w;
      double v = 0.0;
      if (ring < 6) v = ring % 2 == 0 ? 1.0 : 0.25;
      img[static_cast<Eigen::Index>(i * cols + j)] = v;
    }
  }
  return img;
}

Vector starfield_image(std::size_t rows, std::size_t cols, std::size_t count, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw ConfigError("image dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pos(0, rows * cols - 1);
  std::uniform_real_distribution<double> expo(0.0, 3.0);
  Vector img = Vector::Zero(static_cast<Eigen::Index>(rows * cols));
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t p = pos(rng);
    img[static_cast<Eigen::Index>(p)] += std::pow(10.0, expo(rng));
  }
  return img;
}

Vector uniform_noise(std::size_t n, double norm, std::uint64_t seed) {
  if (!(norm >= 0.0)) throw ConfigError("noise norm must be nonnegative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Vector e(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = unif(rng);
  e.array() -= e.mean();
  const double en = e.norm();
  if (en == 0.0 || norm == 0.0) return Vector::Zero(e.size());
  return e * (norm / en);
}

Vector gaussian_noise(std::size_t n, double norm, std::uint64_t seed) {
  if (!(norm >= 0.0)) throw ConfigError("noise norm must be nonnegative");
  std::mt19937_64 rng(seed);
  Vector e = gaussian_vector(n, rng);
  const double en = e.norm();
  if (en == 0.0 || norm == 0.0) return Vector::Zero(e.size());
  return e * (norm / en);
}

Vector logspace(double first, double last, std::size_t count) {
  if (!(first > 0.0) || !(last > 0.0)) throw ConfigError("logspace endpoints must be positive");
  Vector v(static_cast<Eigen::Index>(count));
  if (count == 1) {
    v[0] = first;
    return v;
  }
  const double a = std::log10(first);
  const double b = std::log10(last);
  for (std::size_t i = 0; i < count; ++i)
    v[static_cast<Eigen::Index>(i)] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  return v;
}

TestProblem make_blur_problem(std::size_t rows, std::size_t cols, double sigma, const ImageSpec& image,
                              double delta_rel, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw ConfigError("image dimensions must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be positive");
  if (!(delta_rel >= 0.0) || !std::isfinite(delta_rel)) throw ConfigError("relative noise level must be nonnegative");

  PsfGrid psf = gaussian_psf(psf_extent(rows, sigma), psf_extent(cols, sigma), sigma);
  TestProblem p(psf_operator(psf, rows, cols));
  p.kind = "blur";
  p.psf = std::move(psf);
  p.rows = rows;
  p.cols = cols;
  p.sigma = sigma;
  p.seed = seed;
  p.image = image_name(image);

  switch (image.kind) {
    case ImageKind::geometric: p.x_true = geometric_image(rows, cols); break;
    case ImageKind::starfield:
      p.x_true = starfield_image(rows, cols, image.star_count, stream_seed(seed, kImage));
      break;
    case ImageKind::file: {
      Grid g;
      try {
        g = read_rgrid(image.path);
      } catch (const FormatError& e) {
        throw FormatError("cannot read ground-truth image: " + std::string(e.what()));
      }
      if (g.rows != rows || g.cols != cols)
        throw DimensionError("ground-truth image is " + std::to_string(g.rows) + "x" + std::to_string(g.cols) +
                             ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
      p.x_true = g.as_vector();
      break;
    }
  }
  p.y_exact = p.op.apply(p.x_true);
  add_noise(p, delta_rel * p.y_exact.norm(), true);
  p.label = "blur " + std::to_string(rows) + "x" + std::to_string(cols) + " sigma=" + format_double(sigma) + " " +
            p.image;
  return p;
}

TestProblem make_diagonal_problem(const Vector& singular_values, const Vector& x_true, double delta,
                                  std::uint64_t seed) {
  if (singular_values.size() == 0) throw ConfigError("need at least one singular value");
  if (singular_values.size() != x_true.size()) throw DimensionError("singular values and x_true differ in length");
  if ((singular_values.array() < 0.0).any()) throw ConfigError("singular values must be nonnegative");
  if (!(delta >= 0.0)) throw ConfigError("delta must be nonnegative");
  TestProblem p(diagonal_operator(singular_values));
  p.kind = "diagonal";
  p.singular_values = singular_values;
  p.rows = static_cast<std::size_t>(x_true.size());
  p.cols = 1;
  p.seed = seed;
  p.x_true = x_true;
  p.y_exact = p.op.apply(x_true);
  add_noise(p, delta, false);
  p.label = "diagonal n=" + std::to_string(p.rows);
  return p;
}

TestProblem make_dense_problem(const Vector& singular_values, double delta, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(singular_values.size());
  if (n == 0) throw ConfigError("need at least one singular value");
  if ((singular_values.array() < 0.0).any()) throw ConfigError("singular values must be nonnegative");
  if (!(delta >= 0.0)) throw ConfigError("delta must be nonnegative");
  std::mt19937_64 rng(stream_seed(seed, kOperator));
  const Matrix q1 = random_orthogonal(n, rng);
  const Matrix q2 = random_orthogonal(n, rng);
  const Matrix t = q1 * singular_values.asDiagonal() * q2.transpose();

  TestProblem p(dense_operator(t));
  p.kind = "dense";
  p.dense = t;
  p.singular_values = singular_values;
  p.rows = n;
  p.cols = 1;
  p.seed = seed;
  std::mt19937_64 xr(stream_seed(seed, kSolution));
  // x_true = T* z: smooth with respect to T, so regularization error shrinks with delta.
  const Vector z = gaussian_vector(n, xr);
  p.x_true = q2 * singular_values.asDiagonal() * z;
  p.x_true /= p.x_true.norm();
  p.y_exact = p.op.apply(p.x_true);
  add_noise(p, delta, false);
  p.label = "dense n=" + std::to_string(n);
  return p;
}

TestProblem make_nonlinear_toy(std::size_t n, double epsilon, double delta, std::uint64_t seed) {
  if (n == 0) throw ConfigError("n must be positive");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be nonnegative");
  if (!(delta >= 0.0)) throw ConfigError("delta must be nonnegative");
  std::mt19937_64 rng(stream_seed(seed, kOperator));
  const Matrix t = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) +
                   (0.3 / std::sqrt(static_cast<double>(n))) * gaussian_matrix(n, n, rng);
  std::mt19937_64 xr(stream_seed(seed, kSolution));
  const Vector x_true = gaussian_vector(n, xr);

  NonlinearMap f = toy_map(t, epsilon);
  TestProblem p(f.linearize(Vector::Zero(static_cast<Eigen::Index>(n))));
  p.nl_op = f;
  p.kind = "toy";
  p.dense = t;
  p.epsilon = epsilon;
  p.rows = n;
  p.cols = 1;
  p.seed = seed;
  p.x_true = x_true;
  p.y_exact = f.apply(x_true);
  add_noise(p, delta, false);
  p.label = "toy n=" + std::to_string(n) + " epsilon=" + format_double(epsilon);
  return p;
}

std::string manifest_text(const TestProblem& p) {
  std::ostringstream out;
  out << "kind = \"" << p.kind << "\"\n";
  out << "label = \"" << p.label << "\"\n";
  out << "rows = " << p.rows << "\n";
  out << "cols = " << p.cols << "\n";
  out << "seed = " << p.seed << "\n";
  out << "delta = " << format_double(p.delta) << "\n";
  out << "delta_rel = " << format_double(p.delta_rel) << "\n";
  if (p.kind == "blur") {
    out << "sigma = " << format_double(p.sigma) << "\n";
    out << "image = \"" << p.image << "\"\n";
    out << "psf_center_row = " << p.psf->center_row << "\n";
    out << "psf_center_col = " << p.psf->center_col << "\n";
  }
  if (p.kind == "toy") out << "epsilon = " << format_double(p.epsilon) << "\n";
  return out.str();
}

void save_problem(const std::filesystem::path& dir, const TestProblem& p) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "manifest.toml", std::ios::binary);
    if (!out) throw FormatError("cannot write " + (dir / "manifest.toml").string());
    out << manifest_text(p);
  }
  const std::size_t r = p.rows;
  const std::size_t c = p.cols;
  if (p.x_true.size() > 0) write_rgrid(dir / "x_true.rg", Grid::from_vector(p.x_true, r, c));
  if (p.y_exact.size() > 0) write_rgrid(dir / "y_exact.rg", Grid::from_vector(p.y_exact, r, c));
  write_rgrid(dir / "y_delta.rg", Grid::from_vector(p.y_delta, r, c));
  if (p.kind == "blur") write_rgrid(dir / "psf.rg", *p.psf);
  if (p.kind == "diagonal") write_rgrid(dir / "sv.rg", Grid::from_vector(p.singular_values, r, 1));
  if (p.kind == "dense" || p.kind == "toy") write_rgrid(dir / "op.rg", matrix_grid(p.dense));
}

TestProblem load_problem(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw FormatError("problem directory not found: " + dir.string());
  const auto kv = read_manifest(dir / "manifest.toml");
  const std::string kind = text(kv, "kind");
  const auto rows = static_cast<std::size_t>(integer(kv, "rows", 0));
  const auto cols = static_cast<std::size_t>(integer(kv, "cols", 1));
  auto optional_vector = [&](const char* name) {
    const auto path = dir / name;
    return std::filesystem::exists(path) ? read_rgrid(path).as_vector() : Vector();
  };

  std::optional<TestProblem> loaded;
  if (kind == "blur") {
    PsfGrid psf = read_psf(dir / "psf.rg", static_cast<std::size_t>(integer(kv, "psf_center_row", 0)),
                           static_cast<std::size_t>(integer(kv, "psf_center_col", 0)));
    loaded.emplace(psf_operator(psf, rows, cols));
    loaded->psf = std::move(psf);
    loaded->sigma = number(kv, "sigma", 0.0);
    loaded->image = text(kv, "image");
  } else if (kind == "diagonal") {
    const Vector sv = read_rgrid(dir / "sv.rg").as_vector();
    loaded.emplace(diagonal_operator(sv));
    loaded->singular_values = sv;
  } else if (kind == "dense") {
    const Matrix t = grid_matrix(read_rgrid(dir / "op.rg"));
    loaded.emplace(dense_operator(t));
    loaded->dense = t;
  } else if (kind == "toy") {
    const Matrix t = grid_matrix(read_rgrid(dir / "op.rg"));
    const double eps = number(kv, "epsilon", 0.0);
    NonlinearMap f = toy_map(t, eps);
    loaded.emplace(f.linearize(Vector::Zero(t.cols())));
    loaded->nl_op = f;
    loaded->dense = t;
    loaded->epsilon = eps;
  } else {
    throw FormatError("unknown problem kind: " + kind);
  }
  TestProblem& p = *loaded;
  p.kind = kind;
  p.label = kv.count("label") ? kv.at("label") : kind;
  p.rows = rows;
  p.cols = cols;
  p.seed = integer(kv, "seed", 0);
  p.delta = number(kv, "delta", 0.0);
  p.delta_rel = number(kv, "delta_rel", 0.0);
  p.x_true = optional_vector("x_true.rg");
  p.y_exact = optional_vector("y_exact.rg");
  p.y_delta = read_rgrid(dir / "y_delta.rg").as_vector();
  if (static_cast<std::size_t>(p.y_delta.size()) != p.op.dim_range())
    throw FormatError("y_delta does not match the operator range");
  return std::move(*loaded);
}

}  // namespace deflact
