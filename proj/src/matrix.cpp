#include "domainmix/matrix.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace domainmix {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace

Matrix Matrix::filled(int r, int c, double v) {
  Matrix m(r, c);
  for (double& x : m.data) x = v;
  return m;
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  Matrix m(r, c);
  int i = 0;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) {
      throw std::invalid_argument("from_rows: ragged rows");
    }
    int j = 0;
    for (const double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix Matrix::row_vector(const std::vector<double>& v) {
  Matrix m(1, static_cast<int>(v.size()));
  m.data = v;
  return m;
}

bool Matrix::all_finite() const {
  for (const double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Matrix::shape_str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

bool operator==(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: shape mismatch " + a.shape_str() + " x " + b.shape_str());
  }
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
      double* orow = &out.data[static_cast<size_t>(i) * out.cols];
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Matrix scale(const Matrix& m, double s) {
  Matrix out = m;
  for (double& v : out.data) v *= s;
  return out;
}

Matrix add_row_broadcast(const Matrix& x, const Matrix& b) {
  if (b.rows != 1 || b.cols != x.cols) {
    throw std::invalid_argument("add_row_broadcast: bias must be 1x" + std::to_string(x.cols) + ", got " + b.shape_str());
  }
  Matrix out = x;
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.cols; ++j) out(i, j) += b(0, j);
  }
  return out;
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) out(0, j) += m(i, j);
  }
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  }
  return m;
}

Matrix gather_rows(const Matrix& m, const std::vector<int>& row_indices) {
  Matrix out(static_cast<int>(row_indices.size()), m.cols);
  for (size_t i = 0; i < row_indices.size(); ++i) {
    const int r = row_indices[i];
    if (r < 0 || r >= m.rows) throw std::invalid_argument("gather_rows: row index out of range");
    std::memcpy(&out.data[i * m.cols], &m.data[static_cast<size_t>(r) * m.cols], sizeof(double) * m.cols);
  }
  return out;
}

double row_sq_distance(const Matrix& a, int i, const Matrix& b, int j) {
  if (a.cols != b.cols) throw std::invalid_argument("row_sq_distance: dimension mismatch");
  const double* pa = &a.data[static_cast<size_t>(i) * a.cols];
  const double* pb = &b.data[static_cast<size_t>(j) * b.cols];
  double s = 0.0;
  for (int k = 0; k < a.cols; ++k) {
    const double d = pa[k] - pb[k];
    s += d * d;
  }
  return s;
}

uint64_t content_hash(const Matrix& m) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_u64 = [&h](uint64_t v) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (v >> (8 * byte)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix_u64(static_cast<uint64_t>(m.rows));
  mix_u64(static_cast<uint64_t>(m.cols));
  for (const double v : m.data) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    mix_u64(bits);
  }
  return h;
}

}  // namespace domainmix
