#pragma once

// "RGRID v1" grid files: an ASCII header line `RGRID v1 <rows> <cols>\n`
// followed by rows*cols little-endian IEEE-754 doubles in row-major order.

#include <cstddef>
#include <filesystem>
#include <vector>

#include "deflact/linops.hpp"

namespace deflact {

struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  Vector as_vector() const;
  static Grid from_vector(const Vector& v, std::size_t rows, std::size_t cols);
};

void write_rgrid(const std::filesystem::path& path, const Grid& grid);
Grid read_rgrid(const std::filesystem::path& path);

void write_rgrid(const std::filesystem::path& path, const PsfGrid& psf);
/// Reads a PSF grid; the center is not stored and must be supplied.
PsfGrid read_psf(const std::filesystem::path& path, std::size_t center_row, std::size_t center_col);

}  // namespace deflact
