#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace domainmix {

// Dense row-major matrix of 64-bit reals. The only tensor type in the
// project; vectors are 1xN or Nx1 matrices.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0) {}

  static Matrix zeros(int r, int c) { return Matrix(r, c); }
  static Matrix filled(int r, int c, double v);
  static Matrix identity(int n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(const std::vector<double>& v);

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
  bool all_finite() const;

  std::string shape_str() const;
};

bool operator==(const Matrix& a, const Matrix& b);

// a (RxK) times b (KxC). Throws std::invalid_argument on shape mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);
// Adds a 1xC row vector to every row of x.
Matrix add_row_broadcast(const Matrix& x, const Matrix& b);
// Column sums as a 1xC matrix.
Matrix column_sums(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);

double max_abs_diff(const Matrix& a, const Matrix& b);

// Gathers the given rows of m into a new matrix, in index order.
Matrix gather_rows(const Matrix& m, const std::vector<int>& row_indices);

// Squared Euclidean distance between row i of a and row j of b.
double row_sq_distance(const Matrix& a, int i, const Matrix& b, int j);

// FNV-1a over the raw bytes of the entries; used for freeze-contract checks.
uint64_t content_hash(const Matrix& m);

}  // namespace domainmix
