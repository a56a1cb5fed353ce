#include "arhq/matrix.hpp"

#include <string>

#include "arhq/error.hpp"

namespace arhq {

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) {
    throw DataError(std::string(what) + ": contains non-finite entries");
  }
}

void require_shape(const Matrix& m, Index rows, Index cols, std::string_view what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

}  // namespace arhq
