#include "wbipm/matrix_market.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace wbipm::mm {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_comment(std::ofstream& out, const std::string& comment) {
  if (comment.empty()) return;
  std::istringstream lines(comment);
  std::string line;
  while (std::getline(lines, line)) out << '%' << line << '\n';
}

}  // namespace

void write_array(const std::filesystem::path& path, const Matrix& a,
                 const std::string& comment) {
  auto out = open_out(path);
  out << "%%MatrixMarket matrix array real general\n";
  write_comment(out, comment);
  out << a.rows() << ' ' << a.cols() << '\n';
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) out << fmt17(a(i, j)) << '\n';
  if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

void write_vector(const std::filesystem::path& path, const Vector& v,
                  const std::string& comment) {
  write_array(path, Matrix(v), comment);
}

void write_coordinate(const std::filesystem::path& path, const Matrix& a,
                      const std::string& comment) {
  auto out = open_out(path);
  Index nnz = 0;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) nnz += a(i, j) != 0.0;
  out << "%%MatrixMarket matrix coordinate real general\n";
  write_comment(out, comment);
  out << a.rows() << ' ' << a.cols() << ' ' << nnz << '\n';
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      if (a(i, j) != 0.0) out << i + 1 << ' ' << j + 1 << ' ' << fmt17(a(i, j)) << '\n';
  if (!out) throw ValidationError("write failed for '" + path.string() + "'");
}

Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%MatrixMarket" || lower(object) != "matrix")
    throw ParseError(path.string() + ": missing %%MatrixMarket matrix banner");
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  if (field != "real" && field != "integer" && field != "double")
    throw ParseError(path.string() + ": unsupported field '" + field + "'");
  if (symmetry != "general" && symmetry != "symmetric")
    throw ParseError(path.string() + ": unsupported symmetry '" + symmetry + "'");
  const bool symmetric = symmetry == "symmetric";

  do {
    if (!std::getline(in, line)) throw ParseError(path.string() + ": missing size line");
  } while (line.empty() || line[0] == '%');

  std::istringstream sizes(line);
  long rows = 0, cols = 0, nnz = 0;
  if (format == "array") {
    if (!(sizes >> rows >> cols)) throw ParseError(path.string() + ": bad size line");
  } else if (format == "coordinate") {
    if (!(sizes >> rows >> cols >> nnz)) throw ParseError(path.string() + ": bad size line");
  } else {
    throw ParseError(path.string() + ": unsupported format '" + format + "'");
  }
  if (rows <= 0 || cols <= 0 || nnz < 0) throw ParseError(path.string() + ": bad dimensions");

  Matrix a = Matrix::Zero(rows, cols);
  auto next_token = [&](auto& value) {
    while (!(in >> value)) {
      if (in.eof()) return false;
      in.clear();
      std::string skip;
      std::getline(in, skip);
      if (skip.empty() || skip[0] != '%') return false;
    }
    return true;
  };

  if (format == "array") {
    for (long j = 0; j < cols; ++j) {
      const long i0 = symmetric ? j : 0;
      for (long i = i0; i < rows; ++i) {
        double v;
        if (!next_token(v)) throw ParseError(path.string() + ": truncated array data");
        a(i, j) = v;
        if (symmetric) a(j, i) = v;
      }
    }
  } else {
    for (long e = 0; e < nnz; ++e) {
      long i, j;
      double v;
      if (!next_token(i) || !next_token(j) || !next_token(v))
        throw ParseError(path.string() + ": truncated coordinate data");
      if (i < 1 || i > rows || j < 1 || j > cols)
        throw ParseError(path.string() + ": entry index out of range");
      a(i - 1, j - 1) += v;
      if (symmetric && i != j) a(j - 1, i - 1) += v;
    }
  }
  if (!a.allFinite()) throw ParseError(path.string() + ": non-finite entry");
  return a;
}

Vector read_vector(const std::filesystem::path& path) {
  Matrix a = read_matrix(path);
  if (a.cols() != 1)
    throw ParseError(path.string() + ": expected a single column, got " +
                     std::to_string(a.cols()));
  return a.col(0);
}

}  // namespace wbipm::mm
