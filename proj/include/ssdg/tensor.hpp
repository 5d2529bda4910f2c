#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ssdg {

// Dense row-major matrix of doubles. Vectors are 1×n rows.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor2(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2 row_vector(std::span<const double> values);
  static Tensor2 identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols_, cols_); }

  Tensor2 row_copy(std::size_t r) const;
  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain (untaped) kernels shared by the autodiff ops and value-only paths so
// both produce bit-identical results.
Tensor2 matmul_values(const Tensor2& a, const Tensor2& b);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
// Throws DegenerateInputError on a zero-norm argument.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
// Row-wise softmax with max subtraction.
Tensor2 softmax_values(const Tensor2& x);
// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> v);
double max_abs_diff(const Tensor2& a, const Tensor2& b);

}  // namespace ssdg
