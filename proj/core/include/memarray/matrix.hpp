#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mema {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vec data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix zeros_like(const Matrix& m) { return Matrix(m.rows_, m.cols_); }
  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  Vec row_copy(std::size_t r) const;

  Vec& data() { return data_; }
  const Vec& data() const { return data_; }

  void fill(double v);
  void set_zero() { fill(0.0); }

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  bool all_finite() const;
  double squared_norm() const;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

std::string shape_str(const Matrix& m);
void require_same_shape(const Matrix& a, const Matrix& b, const char* where);

// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// c += a^T * b
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& c);
// c = a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// y = x * W for a single row vector x.
Vec vec_mat(std::span<const double> x, const Matrix& w);
// y += x * W
void vec_mat_acc(std::span<const double> x, const Matrix& w, std::span<double> y);
// y += W * x, i.e. x * W^T, the backward of vec_mat.
void mat_vec_t_acc(const Matrix& w, std::span<const double> x, std::span<double> y);
// W += a^T b for row vectors a, b.
void outer_acc(std::span<const double> a, std::span<const double> b, Matrix& w);

void axpy(double alpha, std::span<const double> x, std::span<double> y);
double dot(std::span<const double> a, std::span<const double> b);

// Concatenates row vectors.
Vec concat(std::span<const double> a, std::span<const double> b);

}  // namespace mema
