#pragma once

#include "wbipm/common.hpp"

#include <filesystem>
#include <string>

namespace wbipm::mm {

class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Writes a dense matrix in "array real general" format (column-major values,
// one per line, 17 significant digits so a read-back is bit-exact).
void write_array(const std::filesystem::path& path, const Matrix& a,
                 const std::string& comment = {});
void write_vector(const std::filesystem::path& path, const Vector& v,
                  const std::string& comment = {});

// Writes the nonzeros of a dense matrix in "coordinate real general" format.
void write_coordinate(const std::filesystem::path& path, const Matrix& a,
                      const std::string& comment = {});

// Reads either array or coordinate real/integer general files into a dense
// matrix. Symmetric coordinate files are expanded.
Matrix read_matrix(const std::filesystem::path& path);

// Reads a matrix with exactly one column.
Vector read_vector(const std::filesystem::path& path);

}  // namespace wbipm::mm
