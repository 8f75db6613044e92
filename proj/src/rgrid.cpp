#include "deflact/rgrid.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace deflact {

namespace {

constexpr const char* kMagic = "RGRID";
constexpr const char* kVersion = "v1";
constexpr std::size_t kMaxHeader = 128;

std::uint64_t to_little_endian(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little) {
    return bits;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((bits >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return out;
  }
}

}  // namespace

Vector Grid::as_vector() const {
  Vector v(static_cast<Eigen::Index>(values.size()));
  std::copy(values.begin(), values.end(), v.data());
  return v;
}

Grid Grid::from_vector(const Vector& v, std::size_t rows, std::size_t cols) {
  if (rows * cols != static_cast<std::size_t>(v.size())) {
    throw DimensionError("Grid::from_vector: " + std::to_string(v.size()) + " values do not fill " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  Grid g;
  g.rows = rows;
  g.cols = cols;
  g.values.assign(v.data(), v.data() + v.size());
  return g;
}

void write_rgrid(const std::filesystem::path& path, const Grid& grid) {
  if (grid.rows * grid.cols != grid.values.size()) throw DimensionError("write_rgrid: shape/value count mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << kMagic << ' ' << kVersion << ' ' << grid.rows << ' ' << grid.cols << '\n';
  std::vector<char> buffer(grid.values.size() * 8);
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(grid.values[i]));
    std::memcpy(buffer.data() + 8 * i, &bits, 8);
  }
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

Grid read_rgrid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::string header;
  char ch = 0;
  while (in.get(ch) && ch != '\n') {
    header.push_back(ch);
    if (header.size() > kMaxHeader) throw FormatError("'" + path.string() + "': header too long");
  }
  if (ch != '\n') throw FormatError("'" + path.string() + "': missing header line");

  std::istringstream hs(header);
  std::string magic, version;
  long long rows = -1, cols = -1;
  hs >> magic >> version >> rows >> cols;
  std::string trailing;
  if (!hs || magic != kMagic || version != kVersion || rows <= 0 || cols <= 0 || (hs >> trailing)) {
    throw FormatError("'" + path.string() + "': expected header 'RGRID v1 <rows> <cols>', got '" + header + "'");
  }

  Grid g;
  g.rows = static_cast<std::size_t>(rows);
  g.cols = static_cast<std::size_t>(cols);
  const std::size_t count = g.rows * g.cols;
  std::vector<char> buffer(count * 8);
  in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (static_cast<std::size_t>(in.gcount()) != buffer.size()) {
    throw FormatError("'" + path.string() + "': truncated payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("'" + path.string() + "': trailing bytes");
  g.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, buffer.data() + 8 * i, 8);
    g.values[i] = std::bit_cast<double>(to_little_endian(bits));
  }
  return g;
}

void write_rgrid(const std::filesystem::path& path, const PsfGrid& psf) {
  Grid g;
  g.rows = psf.rows;
  g.cols = psf.cols;
  g.values.resize(psf.rows * psf.cols);
  for (std::size_t r = 0; r < psf.rows; ++r)
    for (std::size_t c = 0; c < psf.cols; ++c) g.values[r * psf.cols + c] = psf.at(r, c);
  write_rgrid(path, g);
}

PsfGrid read_psf(const std::filesystem::path& path, std::size_t center_row, std::size_t center_col) {
  const Grid g = read_rgrid(path);
  PsfGrid psf;
  psf.rows = g.rows;
  psf.cols = g.cols;
  psf.center_row = center_row;
  psf.center_col = center_col;
  psf.values.resize(static_cast<Eigen::Index>(g.rows), static_cast<Eigen::Index>(g.cols));
  for (std::size_t r = 0; r < g.rows; ++r)
    for (std::size_t c = 0; c < g.cols; ++c)
      psf.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = g.values[r * g.cols + c];
  validate(psf);
  return psf;
}

}  // namespace deflact
