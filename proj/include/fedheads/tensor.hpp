#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace fedheads {

// Dense row-major matrix of doubles. All simulator math runs on 2-d
// tensors; row vectors are 1xN. Values are immutable once an op has
// produced them, which keeps replays bit-reproducible.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor identity(std::size_t n);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  std::string shape_str() const;

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  bool same_shape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  void fill(double v);
  // this += s * other; shapes must match
  void add_scaled(const Tensor& other, double s);
  void scale_inplace(double s);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Value-level kernels, shared by the tape ops and by plain forward code.
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T without materializing the transpose
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor softmax_rows_value(const Tensor& x);

}  // namespace fedheads
