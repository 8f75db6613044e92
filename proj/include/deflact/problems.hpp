#pragma once

// Deterministic test problems: blurred images, diagonal and dense ill-posed
// systems, and a mildly nonlinear toy.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deflact/linops.hpp"
#include "deflact/nonlinear.hpp"

namespace deflact {

struct TestProblem {
  explicit TestProblem(LinearMap op_) : op(std::move(op_)) {}

  LinearMap op;
  std::optional<NonlinearMap> nl_op;  ///< set for nonlinear problems; op is then F'(0)
  Vector x_true;                      ///< empty when unknown
  Vector y_exact;                     ///< empty when unknown
  Vector y_delta;
  double delta = 0.0;      ///< absolute noise norm ||y_delta - y_exact||
  double delta_rel = 0.0;  ///< delta / ||y_exact|| (0 when y_exact is unknown or zero)
  std::string label;
  std::string kind;  ///< blur | diagonal | dense | toy
  std::optional<PsfGrid> psf;
  std::size_t rows = 0;  ///< image shape for blur problems, n x 1 otherwise
  std::size_t cols = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::string image;           ///< ground-truth image name for blur problems
  Vector singular_values;      ///< diagonal and dense problems
  Matrix dense;                ///< dense problems
  double epsilon = 0.0;        ///< toy problems
};

enum class ImageKind { geometric, starfield, file };

struct ImageSpec {
  ImageKind kind = ImageKind::geometric;
  std::size_t star_count = 40;
  std::filesystem::path path;  ///< for ImageKind::file
};

/// Concentric squares around (rows / 2, cols / 2). With band width
/// w = max(1, min(rows, cols) / 16) and Chebyshev distance d, ring = d / w;
/// the value is 1 for even rings, 0.25 for odd rings and 0 from ring 6 on.
Vector geometric_image(std::size_t rows, std::size_t cols);

/// `count` one-pixel stars at seeded positions with brightness log-uniform
/// on [1, 1000]. Colliding positions add.
Vector starfield_image(std::size_t rows, std::size_t cols, std::size_t count, std::uint64_t seed);

/// Uniform noise on [-1, 1], mean-centered, scaled to the given norm.
Vector uniform_noise(std::size_t n, double norm, std::uint64_t seed);
/// Standard normal direction scaled to the given norm.
Vector gaussian_noise(std::size_t n, double norm, std::uint64_t seed);

/// Periodic Gaussian blur (PSF grid the size of the image) of the chosen
/// ground truth, with ||n|| = delta_rel * ||y_exact||.
TestProblem make_blur_problem(std::size_t rows, std::size_t cols, double sigma, const ImageSpec& image,
                              double delta_rel, std::uint64_t seed);

/// diag(singular_values) with Gaussian-direction noise of norm delta.
TestProblem make_diagonal_problem(const Vector& singular_values, const Vector& x_true, double delta,
                                  std::uint64_t seed);

/// T = Q1 diag(singular_values) Q2^T with seeded orthogonal Q1, Q2 and a seeded
/// x_true; Gaussian-direction noise of norm delta.
TestProblem make_dense_problem(const Vector& singular_values, double delta, std::uint64_t seed);

/// F(x) = T x + epsilon (x .* x) with T = I + 0.3 G / sqrt(n), G seeded
/// standard normal; exact data from a seeded x_true.
TestProblem make_nonlinear_toy(std::size_t n, double epsilon, double delta, std::uint64_t seed);

/// Logarithmically spaced values from `first` down to `last`.
Vector logspace(double first, double last, std::size_t count);

/// Writes manifest.toml plus RGRID payloads.
void save_problem(const std::filesystem::path& dir, const TestProblem& problem);
/// Reads a problem directory written by save_problem.
TestProblem load_problem(const std::filesystem::path& dir);

/// key = value lines of the manifest, in a fixed order.
std::string manifest_text(const TestProblem& problem);

}  // namespace deflact
