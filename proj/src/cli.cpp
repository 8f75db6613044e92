#include "deflact/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "deflact/errors.hpp"
#include "deflact/nonlinear.hpp"
#include "deflact/problems.hpp"
#include "deflact/recycle.hpp"
#include "deflact/rgrid.hpp"
#include "deflact/solvers.hpp"
#include "deflact/sweep.hpp"
#include "deflact/text.hpp"
#include "deflact/trace.hpp"

namespace fs = std::filesystem;

namespace deflact {

namespace {

/// Bad flag combinations that CLI11 validators cannot express. Exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr const char* kNonlinearWarning =
    "warning: nonlinear methods are experimental; no convergence or regularization property is claimed\n";

// ---------------------------------------------------------------- gen

struct GenOptions {
  std::string kind = "blur";
  std::size_t size = 64;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double sigma = 6.0;
  std::string image = "geometric";
  std::size_t stars = 40;
  double noise_rel = 0.0;
  double noise_abs = 0.0;
  std::uint64_t seed = 0;
  std::size_t n = 8;
  double decay = 0.5;
  double cond = 1e4;
  double epsilon = 0.01;
  std::string out;
  CLI::Option* rel_opt = nullptr;
  CLI::Option* abs_opt = nullptr;
};

ImageSpec image_spec(const std::string& image, std::size_t stars) {
  ImageSpec spec;
  spec.star_count = stars;
  if (image == "geometric") {
    spec.kind = ImageKind::geometric;
  } else if (image == "starfield") {
    spec.kind = ImageKind::starfield;
  } else {
    spec.kind = ImageKind::file;
    spec.path = image;
    if (!fs::exists(spec.path)) throw UsageError("--image: '" + image + "' is neither a built-in image nor a file");
  }
  return spec;
}

/// Problem of the given kind at absolute noise norm `delta`.
TestProblem generate_abs(const GenOptions& o, double delta) {
  const std::size_t rows = o.rows ? o.rows : o.size;
  const std::size_t cols = o.cols ? o.cols : o.size;
  if (o.kind == "blur") {
    const ImageSpec spec = image_spec(o.image, o.stars);
    if (delta == 0.0) return make_blur_problem(rows, cols, o.sigma, spec, 0.0, o.seed);
    const TestProblem clean = make_blur_problem(rows, cols, o.sigma, spec, 0.0, o.seed);
    const double y_norm = clean.y_exact.norm();
    if (y_norm == 0.0) throw ConfigError("exact data is zero; relative noise is undefined");
    return make_blur_problem(rows, cols, o.sigma, spec, delta / y_norm, o.seed);
  }
  if (o.kind == "diagonal") {
    Vector sv(static_cast<Eigen::Index>(o.n));
    for (std::size_t i = 0; i < o.n; ++i) sv[static_cast<Eigen::Index>(i)] = std::pow(o.decay, static_cast<double>(i));
    return make_diagonal_problem(sv, Vector::Ones(sv.size()), delta, o.seed);
  }
  if (o.kind == "dense") return make_dense_problem(logspace(1.0, 1.0 / o.cond, o.n), delta, o.seed);
  if (o.kind == "toy") return make_nonlinear_toy(o.n, o.epsilon, delta, o.seed);
  throw UsageError("--kind: unknown problem kind '" + o.kind + "'");
}

TestProblem generate(const GenOptions& o) {
  if (o.kind == "blur" && o.rel_opt->count() > 0) {
    const std::size_t rows = o.rows ? o.rows : o.size;
    const std::size_t cols = o.cols ? o.cols : o.size;
    return make_blur_problem(rows, cols, o.sigma, image_spec(o.image, o.stars), o.noise_rel, o.seed);
  }
  if (o.abs_opt->count() > 0) return generate_abs(o, o.noise_abs);
  const TestProblem clean = generate_abs(o, 0.0);
  return generate_abs(o, o.noise_rel * clean.y_exact.norm());
}

int cmd_gen(const GenOptions& o, std::ostream& out) {
  if (o.rel_opt->count() + o.abs_opt->count() != 1)
    throw UsageError("gen: exactly one of --noise-rel or --noise-abs is required");
  const TestProblem p = generate(o);
  save_problem(o.out, p);
  out << manifest_text(p);
  return 0;
}

// ---------------------------------------------------------------- recycle

struct RecycleOptions {
  std::string problem;
  std::string strategy = "prior-solves";
  std::string sigmas = "0.5:1.5:5";
  std::size_t iters = 2;
  std::size_t count = 20;
  int eig_iters = 200;
  std::uint64_t seed = 0;
  std::vector<std::string> files;
  std::string data = "noisy";
  std::string op = "auto";
  double drop_tol = 1e-10;
  std::string out;
};

/// Iterates of short steepest-descent solves with Gaussian blurs of other widths.
std::vector<Vector> prior_solve_vectors(const TestProblem& p, const std::vector<double>& sigmas, std::size_t iters,
                                        bool exact_data) {
  if (p.kind != "blur") throw UsageError("--strategy prior-solves needs a blur problem");
  const Vector& data = exact_data ? p.y_exact : p.y_delta;
  if (data.size() == 0) throw UsageError("--data exact needs a problem with exact data");
  std::vector<Vector> vectors;
  for (double sigma : sigmas) {
    const TestProblem sub = make_blur_problem(p.rows, p.cols, sigma, ImageSpec{}, 0.0, 0);
    SolveConfig cfg;
    cfg.max_iters = iters;
    cfg.stop_at_discrepancy = false;
    cfg.observer = [&](const IterateView& v) {
      if (v.iter > 0) vectors.push_back(v.x);
    };
    steepest_descent(sub.op, data, Vector::Zero(data.size()), cfg);
  }
  return vectors;
}

LinearMap eigen_operator(const TestProblem& p, const std::string& which) {
  const bool square = p.op.dim_domain() == p.op.dim_range();
  if (which == "forward" || (which == "auto" && square && p.kind == "blur")) {
    if (!square) throw UsageError("--operator forward needs a square operator");
    return p.op;
  }
  return p.op.normal();
}

RecycleSpace build_space(const TestProblem& p, const RecycleOptions& o, std::ostream& out, std::ostream& err) {
  KTuple u_raw;
  if (o.strategy == "prior-solves") {
    const auto sigmas = parse_value_list(o.sigmas);
    const auto vectors = prior_solve_vectors(p, sigmas, o.iters, o.data == "exact");
    const RecycleBasis basis = recycle_from_solutions(vectors, o.drop_tol);
    if (basis.dropped > 0) err << "warning: dropped " << basis.dropped << " dependent direction(s)\n";
    u_raw = basis.basis;
  } else if (o.strategy == "eigen") {
    const EigenResult eig = top_eigenvectors(eigen_operator(p, o.op), o.count, o.eig_iters, o.seed);
    out << "eigen: requested " << o.count << ", kept " << eig.vectors.size() << ", pruned " << eig.pruned << "\n";
    if (eig.vectors.empty()) throw RankDeficiencyError("eigen strategy kept no vectors", 0);
    u_raw = eig.vectors;
  } else if (o.strategy == "files") {
    if (o.files.empty()) throw UsageError("--strategy files needs --files");
    std::vector<Vector> vectors;
    for (const auto& f : o.files) vectors.push_back(read_rgrid(f).as_vector());
    const RecycleBasis basis = recycle_from_solutions(vectors, o.drop_tol);
    if (basis.dropped > 0) err << "warning: dropped " << basis.dropped << " dependent direction(s)\n";
    u_raw = basis.basis;
  } else {
    throw UsageError("--strategy: unknown strategy '" + o.strategy + "'");
  }
  return qr_against(p.op, u_raw);
}

int cmd_recycle(const RecycleOptions& o, std::ostream& out, std::ostream& err) {
  const TestProblem p = load_problem(o.problem);
  RecycleSpace rs = RecycleSpace::empty(p.op.dim_domain(), p.op.dim_range());
  try {
    rs = build_space(p, o, out, err);
  } catch (const RankDeficiencyError& e) {
    err << "error: strategy " << o.strategy << " failed: " << e.what() << "\n";
    return 1;
  }
  save_recycle_space(o.out, rs, p.rows, p.cols);
  out << "recycle space: strategy=" << o.strategy << " k=" << rs.size()
      << " consistency=" << format_double(consistency_error(rs, p.op)) << "\n";
  return 0;
}

// ---------------------------------------------------------------- run / compare

struct RunOptions {
  std::string problem;
  std::string method = "sd";
  std::string recycle;
  double tau = 1.5;
  double beta = 0.0;
  double alpha = 0.0;
  std::size_t max_iters = 500;
  double delta = 0.0;
  double delta_rel = 0.0;
  bool kappa_delta = false;
  bool residual_toggle = false;
  std::uint64_t seed = 0;
  std::string out;
  CLI::Option* beta_opt = nullptr;
  CLI::Option* alpha_opt = nullptr;
  CLI::Option* delta_opt = nullptr;
  CLI::Option* delta_rel_opt = nullptr;
};

double noise_level(const TestProblem& p, const RunOptions& o) {
  if (o.delta_opt->count() && o.delta_rel_opt->count()) throw UsageError("--delta and --delta-rel are exclusive");
  if (o.delta_opt->count()) return o.delta;
  if (o.delta_rel_opt->count()) {
    if (p.y_exact.size() == 0) throw UsageError("--delta-rel needs a problem with exact data");
    return o.delta_rel * p.y_exact.norm();
  }
  return p.delta;
}

std::optional<RecycleSpace> load_space(const TestProblem& p, const std::string& dir) {
  if (dir.empty()) return std::nullopt;
  return load_recycle_space(dir, p.op.dim_domain(), p.op.dim_range());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f << text;
}

std::string run_manifest(const RunOptions& o, const std::string& method, double delta, double threshold) {
  std::ostringstream m;
  m << "problem = \"" << o.problem << "\"\n";
  m << "method = \"" << method << "\"\n";
  m << "recycle = \"" << o.recycle << "\"\n";
  m << "tau = " << format_double(o.tau) << "\n";
  m << "delta = " << format_double(delta) << "\n";
  m << "stop_delta = " << format_double(threshold) << "\n";
  m << "max_iters = " << o.max_iters << "\n";
  m << "seed = " << o.seed << "\n";
  return m.str();
}

std::string summarize(const SolveResult& r) {
  std::ostringstream s;
  const TraceRow& last = r.trace.back();
  s << "stop_iter=" << last.iter << " stop_reason=" << to_string(r.stop_reason)
    << " residual=" << format_double(last.residual_norm);
  if (last.error_norm) s << " error=" << format_double(*last.error_norm);
  return s.str();
}

int run_nonlinear(const TestProblem& p, const RunOptions& o, double delta, std::ostream& out, std::ostream& err) {
  err << kNonlinearWarning;
  if (!p.nl_op) throw UsageError("--method " + o.method + " needs a nonlinear (toy) problem");
  SolveConfig cfg;
  cfg.tau = o.tau;
  cfg.delta = delta;
  cfg.max_iters = o.max_iters;
  if (p.x_true.size() > 0) {
    cfg.record_error = true;
    cfg.x_true = p.x_true;
  }
  const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(p.op.dim_domain()));
  SolveResult result;
  bool qr_column = false;
  if (o.method == "nl-gd") {
    const StepRule step = o.alpha_opt->count() ? StepRule::fixed(o.alpha) : StepRule::steepest();
    result = nl_gradient_descent(*p.nl_op, p.y_delta, x0, step, cfg);
  } else {
    const auto rs = load_space(p, o.recycle);
    if (!rs) throw UsageError("--method nl-aug-landweber needs --recycle");
    double alpha = o.alpha;
    if (!o.alpha_opt->count()) {
      const double t = norm_estimate(p.op);
      alpha = 1.0 / (t * t);
    }
    NlAugmentedOptions opts;
    opts.project_residual = !o.residual_toggle;
    result = nl_augmented_landweber(*p.nl_op, rs->u(), p.y_delta, x0, alpha, cfg, opts);
    qr_column = true;
  }
  fs::create_directories(o.out);
  {
    std::ofstream csv(fs::path(o.out) / "trace.csv", std::ios::binary);
    write_trace_csv(csv, result.trace, result.stop_reason, qr_column);
  }
  write_rgrid(fs::path(o.out) / "x.rg", Grid::from_vector(result.x, p.rows, p.cols));
  write_text(fs::path(o.out) / "run.toml", run_manifest(o, o.method, delta, delta));
  out << o.method << ": " << summarize(result) << "\n";
  return 0;
}

/// Method after applying --recycle (plain sd/landweber become augmented).
Method resolve_method(const std::string& name, bool has_recycle) {
  const auto m = parse_method(name);
  if (!m) throw UsageError("--method: unknown method '" + name + "'");
  if (!has_recycle) {
    if (is_augmented(*m)) throw UsageError("--method " + name + " needs --recycle");
    return *m;
  }
  if (*m == Method::steepest_descent) return Method::aug_steepest_descent;
  if (*m == Method::landweber) return Method::aug_landweber;
  if (*m == Method::cgne) throw UsageError("--method cgne does not support --recycle");
  return *m;
}

SolveConfig base_config(const TestProblem& p, const RunOptions& o, Method method) {
  SolveConfig cfg;
  cfg.method = method;
  cfg.tau = o.tau;
  cfg.max_iters = o.max_iters;
  if (p.x_true.size() > 0) {
    cfg.record_error = true;
    cfg.x_true = p.x_true;
  }
  if (method == Method::landweber || method == Method::aug_landweber) {
    if (o.beta_opt->count()) {
      cfg.beta = o.beta;
    } else {
      const double t = norm_estimate(p.op);
      cfg.beta = 1.0 / (t * t);
    }
  }
  return cfg;
}

double stop_level(const TestProblem& p, const RecycleSpace* rs, double delta, bool kappa) {
  if (!kappa || rs == nullptr) return delta;
  return bounds(*rs, norm_estimate(p.op), delta).kappa_u * delta;
}

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
  const TestProblem p = load_problem(o.problem);
  const double delta = noise_level(p, o);
  if (o.method == "nl-gd" || o.method == "nl-aug-landweber") return run_nonlinear(p, o, delta, out, err);

  const Method method = resolve_method(o.method, !o.recycle.empty());
  const auto rs = load_space(p, o.recycle);
  const RecycleSpace* space = rs ? &*rs : nullptr;
  SolveConfig cfg = base_config(p, o, method);
  cfg.delta = stop_level(p, space, delta, o.kappa_delta);

  const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(p.op.dim_domain()));
  const SolveResult result = solve(p.op, space, p.y_delta, x0, cfg);

  fs::create_directories(o.out);
  {
    std::ofstream csv(fs::path(o.out) / "trace.csv", std::ios::binary);
    write_trace_csv(csv, result.trace, result.stop_reason);
  }
  write_rgrid(fs::path(o.out) / "x.rg", Grid::from_vector(result.x, p.rows, p.cols));
  write_text(fs::path(o.out) / "run.toml", run_manifest(o, to_string(method), delta, cfg.delta));
  out << to_string(method) << ": " << summarize(result) << "\n";
  return 0;
}

std::string index_text(const std::optional<std::size_t>& i) { return i ? std::to_string(*i) : "none"; }

int cmd_compare(const RunOptions& o, std::ostream& out) {
  const TestProblem p = load_problem(o.problem);
  const double delta = noise_level(p, o);
  if (o.recycle.empty()) throw UsageError("compare needs --recycle");
  const Method plain = resolve_method(o.method, false);
  if (plain != Method::steepest_descent && plain != Method::landweber)
    throw UsageError("compare: --method must be sd or landweber");
  const Method aug = resolve_method(o.method, true);
  const auto rs = load_space(p, o.recycle);

  const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(p.op.dim_domain()));
  SolveConfig plain_cfg = base_config(p, o, plain);
  plain_cfg.delta = delta;
  plain_cfg.stop_at_discrepancy = false;
  SolveConfig aug_cfg = base_config(p, o, aug);
  aug_cfg.delta = stop_level(p, &*rs, delta, o.kappa_delta);
  aug_cfg.stop_at_discrepancy = false;

  const SolveResult a = solve(p.op, nullptr, p.y_delta, x0, plain_cfg);
  const SolveResult b = solve(p.op, &*rs, p.y_delta, x0, aug_cfg);

  fs::create_directories(o.out);
  {
    std::ofstream csv(fs::path(o.out) / "compare.csv", std::ios::binary);
    csv << "iter,plain_residual,plain_error,aug_residual,aug_error\n";
    const std::size_t rows = std::max(a.trace.size(), b.trace.size());
    auto cell = [](const IterationTrace& t, std::size_t i, bool error) -> std::string {
      if (i >= t.size()) return "";
      if (!error) return format_double(t[i].residual_norm);
      return t[i].error_norm ? format_double(*t[i].error_norm) : "";
    };
    for (std::size_t i = 0; i < rows; ++i) {
      csv << i << ',' << cell(a.trace, i, false) << ',' << cell(a.trace, i, true) << ',' << cell(b.trace, i, false)
          << ',' << cell(b.trace, i, true) << '\n';
    }
  }
  write_rgrid(fs::path(o.out) / "x_plain.rg", Grid::from_vector(a.x, p.rows, p.cols));
  write_rgrid(fs::path(o.out) / "x_aug.rg", Grid::from_vector(b.x, p.rows, p.cols));

  const auto plain_stop = discrepancy_index(a.trace, o.tau, plain_cfg.delta);
  const auto aug_stop = discrepancy_index(b.trace, o.tau, aug_cfg.delta);
  out << "plain " << to_string(plain) << ": discrepancy_stop=" << index_text(plain_stop)
      << " semiconvergence=" << index_text(semiconvergence_index(a.trace)) << " | augmented " << to_string(aug)
      << " (k=" << rs->size() << "): discrepancy_stop=" << index_text(aug_stop)
      << " semiconvergence=" << index_text(semiconvergence_index(b.trace)) << "\n";
  return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepOptions {
  GenOptions family;
  std::string deltas = "1e-1,1e-2,1e-3,1e-4";
  std::string method = "landweber";
  double tau = 1.5;
  double beta = 0.0;
  std::size_t max_iters = 20000;
  std::string recycle = "none";
  std::size_t count = 2;
  std::string sigmas = "0.5:1.5:5";
  std::size_t iters = 2;
  bool bare_delta = false;
  std::size_t threads = 0;
  std::string out;
  CLI::Option* beta_opt = nullptr;
};

int cmd_sweep(const SweepOptions& o, std::ostream& out) {
  const auto deltas = parse_value_list(o.deltas);
  const auto parsed = parse_method(o.method);
  if (!parsed || *parsed == Method::cgne) throw UsageError("--method: sweep supports landweber, sd and their aug- forms");
  Method method = *parsed;
  if (o.recycle != "none") {
    if (method == Method::landweber) method = Method::aug_landweber;
    if (method == Method::steepest_descent) method = Method::aug_steepest_descent;
  } else if (is_augmented(method)) {
    throw UsageError("--method " + o.method + " needs --recycle eigen or prior-solves");
  }

  const GenOptions family = o.family;
  ProblemFamily gen = [family](double delta) { return generate_abs(family, delta); };
  const TestProblem reference = gen(0.0);
  const double t_norm = norm_estimate(reference.op);

  SweepSolverOptions so;
  so.cfg.method = method;
  so.cfg.tau = o.tau;
  so.cfg.max_iters = o.max_iters;
  so.cfg.beta = o.beta_opt->count() ? o.beta : 1.0 / (t_norm * t_norm);
  so.use_kappa = !o.bare_delta;
  so.t_norm = t_norm;
  if (o.recycle == "eigen") {
    const std::size_t count = o.count;
    so.recycle = [count](const TestProblem& p) {
      return qr_against(p.op, top_eigenvectors(p.op.normal(), count, 200, 0).vectors);
    };
  } else if (o.recycle == "prior-solves") {
    const auto sigmas = parse_value_list(o.sigmas);
    const std::size_t iters = o.iters;
    so.recycle = [sigmas, iters](const TestProblem& p) {
      return qr_against(p.op, recycle_from_solutions(prior_solve_vectors(p, sigmas, iters, false)).basis);
    };
  } else if (o.recycle != "none") {
    throw UsageError("--recycle: unknown strategy '" + o.recycle + "'");
  }

  const auto points = delta_sweep(gen, standard_sweep_solver(so), deltas, o.threads);
  if (o.out.empty()) {
    write_sweep_csv(out, points);
  } else {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw FormatError("cannot write " + o.out);
    write_sweep_csv(f, points);
    out << "wrote " << points.size() << " rows to " << o.out << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- inspect

int cmd_inspect(const std::string& path, std::ostream& out) {
  const fs::path p(path);
  if (fs::is_directory(p) && fs::exists(p / "manifest.toml")) {
    const TestProblem prob = load_problem(p);
    out << manifest_text(prob);
    out << "dim_domain = " << prob.op.dim_domain() << "\n";
    out << "dim_range = " << prob.op.dim_range() << "\n";
    out << "norm_y_delta = " << format_double(prob.y_delta.norm()) << "\n";
    if (prob.x_true.size() > 0) out << "norm_x_true = " << format_double(prob.x_true.norm()) << "\n";
    out << "norm_T = " << format_double(norm_estimate(prob.op)) << "\n";
    return 0;
  }
  if (fs::is_directory(p) && fs::exists(p / "r.csv")) {
    if (!fs::exists(p / "u_000.rg")) {
      out << "recycle space: k = 0\n";
      return 0;
    }
    const Grid u0 = read_rgrid(p / "u_000.rg");
    const Grid c0 = read_rgrid(p / "c_000.rg");
    const RecycleSpace rs = load_recycle_space(p, u0.values.size(), c0.values.size());
    const Matrix g = gram(rs.c(), rs.c());
    const double orth = (g - Matrix::Identity(g.rows(), g.cols())).norm();
    out << "recycle space: k = " << rs.size() << "\n";
    out << "dim_domain = " << rs.dim_domain() << "\n";
    out << "dim_range = " << rs.dim_range() << "\n";
    out << "orthonormality_error = " << format_double(orth) << "\n";
    return 0;
  }
  if (fs::is_regular_file(p)) {
    const Grid g = read_rgrid(p);
    const Vector v = g.as_vector();
    out << "grid: " << g.rows << " x " << g.cols << "\n";
    if (v.size() > 0) {
      out << "min = " << format_double(v.minCoeff()) << "\n";
      out << "max = " << format_double(v.maxCoeff()) << "\n";
      out << "sum = " << format_double(v.sum()) << "\n";
      out << "norm = " << format_double(v.norm()) << "\n";
    }
    return 0;
  }
  throw UsageError("inspect: '" + path + "' is not a problem, recycle space or RGRID file");
}

void add_family_options(CLI::App* app, GenOptions& o) {
  app->add_option("--kind", o.kind, "Problem kind")->check(CLI::IsMember({"blur", "diagonal", "dense", "toy"}));
  app->add_option("--size", o.size, "Square image size (blur)")->check(CLI::PositiveNumber);
  app->add_option("--rows", o.rows, "Image rows (blur; overrides --size)")->check(CLI::PositiveNumber);
  app->add_option("--cols", o.cols, "Image columns (blur; overrides --size)")->check(CLI::PositiveNumber);
  app->add_option("--sigma", o.sigma, "Gaussian PSF standard deviation (blur)")->check(CLI::PositiveNumber);
  app->add_option("--image", o.image, "geometric, starfield, or an RGRID file (blur)");
  app->add_option("--stars", o.stars, "Number of stars (starfield)")->check(CLI::PositiveNumber);
  app->add_option("--seed", o.seed, "Random seed");
  app->add_option("--n", o.n, "Dimension (diagonal, dense, toy)")->check(CLI::PositiveNumber);
  app->add_option("--decay", o.decay, "Singular value ratio (diagonal)")->check(CLI::Range(0.0, 1.0));
  app->add_option("--cond", o.cond, "Condition number (dense)")->check(CLI::Range(1.0, 1e300));
  app->add_option("--epsilon", o.epsilon, "Nonlinearity strength (toy)")->check(CLI::NonNegativeNumber);
}

}  // namespace

std::vector<double> parse_value_list(const std::string& text) {
  std::vector<double> values;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    double a = 0.0;
    double b = 0.0;
    double n = 0.0;
    if (parts.size() != 3 || !parse_double(parts[0], a) || !parse_double(parts[1], b) || !parse_double(parts[2], n) ||
        n < 1 || n != std::floor(n))
      throw ConfigError("expected a:b:n with integer n >= 1, got '" + text + "'");
    const auto count = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i < count; ++i)
      values.push_back(count == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    return values;
  }
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    double v = 0.0;
    if (!parse_double(part, v)) throw ConfigError("not a number: '" + part + "' in '" + text + "'");
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError("empty value list");
  return values;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Augmented (subspace-recycling) iterative regularization toolkit", "deflact"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a test problem directory");
  add_family_options(gen_cmd, gen);
  gen.rel_opt = gen_cmd->add_option("--noise-rel", gen.noise_rel, "Noise norm relative to ||y||")
                    ->check(CLI::NonNegativeNumber);
  gen.abs_opt = gen_cmd->add_option("--noise-abs", gen.noise_abs, "Absolute noise norm")->check(CLI::NonNegativeNumber);
  gen.rel_opt->excludes(gen.abs_opt);
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  RecycleOptions rec;
  auto* rec_cmd = app.add_subcommand("recycle", "Build a recycle space for a problem");
  rec_cmd->add_option("--problem", rec.problem, "Problem directory")->required()->check(CLI::ExistingDirectory);
  rec_cmd->add_option("--strategy", rec.strategy, "prior-solves, eigen or files")
      ->check(CLI::IsMember({"prior-solves", "eigen", "files"}));
  rec_cmd->add_option("--sigmas", rec.sigmas, "Blur widths for prior solves, a:b:n or a list");
  rec_cmd->add_option("--iters", rec.iters, "Steepest-descent iterations per prior solve")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--count", rec.count, "Number of eigenvectors")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--eig-iters", rec.eig_iters, "Subspace iterations")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--seed", rec.seed, "Seed for the eigenvector start block");
  rec_cmd->add_option("--files", rec.files, "RGRID vectors (files strategy)")->check(CLI::ExistingFile);
  rec_cmd->add_option("--data", rec.data, "Data for prior solves")->check(CLI::IsMember({"exact", "noisy"}));
  rec_cmd->add_option("--operator", rec.op, "Eigen operator: auto, forward (T) or normal (T*T)")
      ->check(CLI::IsMember({"auto", "forward", "normal"}));
  rec_cmd->add_option("--drop-tol", rec.drop_tol, "Relative remainder below which an input direction counts as dependent")
      ->check(CLI::Range(0.0, 1.0));
  rec_cmd->add_option("--out", rec.out, "Output directory")->required();

  auto add_run_options = [](CLI::App* cmd, RunOptions& o) {
    cmd->add_option("--problem", o.problem, "Problem directory")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--method", o.method, "landweber, sd, cgne, aug-landweber, aug-sd, nl-gd, nl-aug-landweber");
    cmd->add_option("--recycle", o.recycle, "Recycle space directory")->check(CLI::ExistingDirectory);
    cmd->add_option("--tau", o.tau, "Discrepancy factor (> 1)")->check(CLI::Range(1.0, 1e300));
    o.beta_opt = cmd->add_option("--beta", o.beta, "Landweber step")->check(CLI::PositiveNumber);
    o.alpha_opt = cmd->add_option("--alpha", o.alpha, "Nonlinear step")->check(CLI::PositiveNumber);
    cmd->add_option("--max-iters", o.max_iters, "Iteration cap")->check(CLI::PositiveNumber);
    o.delta_opt = cmd->add_option("--delta", o.delta, "Absolute noise level override")->check(CLI::NonNegativeNumber);
    o.delta_rel_opt =
        cmd->add_option("--delta-rel", o.delta_rel, "Relative noise level override")->check(CLI::NonNegativeNumber);
    cmd->add_flag("--kappa-delta", o.kappa_delta, "Stop augmented runs at tau * kappa_U * delta");
    cmd->add_flag("--unprojected-residual", o.residual_toggle, "nl-aug-landweber: use r instead of (I-Q) r");
    cmd->add_option("--seed", o.seed, "Seed (recorded in run.toml)");
    cmd->add_option("--out", o.out, "Output directory")->required();
  };

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run one solver");
  add_run_options(run_cmd, run);

  RunOptions cmp;
  cmp.method = "sd";
  cmp.max_iters = 200;
  auto* cmp_cmd = app.add_subcommand("compare", "Run plain and augmented solvers side by side");
  add_run_options(cmp_cmd, cmp);

  SweepOptions sw;
  sw.family.kind = "dense";
  auto* sw_cmd = app.add_subcommand("sweep", "Noise-level sweep with discrepancy stopping");
  add_family_options(sw_cmd, sw.family);
  sw_cmd->add_option("--deltas", sw.deltas, "Decreasing noise levels, list or a:b:n");
  sw_cmd->add_option("--method", sw.method, "landweber, sd, aug-landweber or aug-sd");
  sw_cmd->add_option("--tau", sw.tau, "Discrepancy factor (> 1)")->check(CLI::Range(1.0, 1e300));
  sw.beta_opt = sw_cmd->add_option("--beta", sw.beta, "Landweber step")->check(CLI::PositiveNumber);
  sw_cmd->add_option("--max-iters", sw.max_iters, "Iteration cap")->check(CLI::PositiveNumber);
  sw_cmd->add_option("--recycle", sw.recycle, "none, eigen or prior-solves")
      ->check(CLI::IsMember({"none", "eigen", "prior-solves"}));
  sw_cmd->add_option("--count", sw.count, "Eigenvectors of T*T (eigen)")->check(CLI::PositiveNumber);
  sw_cmd->add_option("--sigmas", sw.sigmas, "Blur widths (prior-solves)");
  sw_cmd->add_option("--iters", sw.iters, "Iterations per prior solve")->check(CLI::PositiveNumber);
  sw_cmd->add_flag("--bare-delta", sw.bare_delta, "Stop augmented runs at tau * delta instead of tau * kappa_U * delta");
  sw_cmd->add_option("--threads", sw.threads, "Worker threads (default: DEFLACT_THREADS or 1)");
  sw_cmd->add_option("--out", sw.out, "Output CSV (default: stdout)");

  std::string inspect_path;
  auto* ins_cmd = app.add_subcommand("inspect", "Describe a problem, recycle space or RGRID file");
  ins_cmd->add_option("path", inspect_path, "Path")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*rec_cmd) return cmd_recycle(rec, out, err);
    if (*run_cmd) return cmd_run(run, out, err);
    if (*cmp_cmd) return cmd_compare(cmp, out);
    if (*sw_cmd) return cmd_sweep(sw, out);
    if (*ins_cmd) return cmd_inspect(inspect_path, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace deflact
