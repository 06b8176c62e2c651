#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gtcs {

// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols), d_(static_cast<std::size_t>(rows) * cols, 0.0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double* row(int i) { return d_.data() + static_cast<std::size_t>(i) * cols_; }
  const double* row(int i) const { return d_.data() + static_cast<std::size_t>(i) * cols_; }

  double& operator()(int i, int j) { return d_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return d_[static_cast<std::size_t>(i) * cols_ + j]; }

  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }

  Mat transposed() const {
    Mat t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Mat select_rows(std::span<const int> idx) const {
    Mat out(static_cast<int>(idx.size()), cols_);
    for (int k = 0; k < out.rows(); ++k) {
      const double* src = row(idx[k]);
      double* dst = out.row(k);
      for (int j = 0; j < cols_; ++j) dst[j] = src[j];
    }
    return out;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> d_;
};

// Binary matrix stored as bytes (pooling designs).
class BinMat {
 public:
  BinMat() = default;
  BinMat(int rows, int cols) : rows_(rows), cols_(cols), d_(static_cast<std::size_t>(rows) * cols, 0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  std::uint8_t* row(int i) { return d_.data() + static_cast<std::size_t>(i) * cols_; }
  const std::uint8_t* row(int i) const { return d_.data() + static_cast<std::size_t>(i) * cols_; }

  std::uint8_t& operator()(int i, int j) { return d_[static_cast<std::size_t>(i) * cols_ + j]; }
  std::uint8_t operator()(int i, int j) const { return d_[static_cast<std::size_t>(i) * cols_ + j]; }

  bool operator==(const BinMat& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && d_ == o.d_;
  }

  Mat to_real() const {
    Mat out(rows_, cols_);
    for (int i = 0; i < rows_; ++i) {
      const std::uint8_t* src = row(i);
      double* dst = out.row(i);
      for (int j = 0; j < cols_; ++j) dst[j] = static_cast<double>(src[j]);
    }
    return out;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> d_;
};

inline std::vector<double> matvec(const Mat& A, std::span<const double> x);

inline double dot_row(std::span<const std::uint8_t> row, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j)
    if (row[j]) s += x[j];
  return s;
}

inline std::vector<double> matvec(const BinMat& B, std::span<const double> x) {
  std::vector<double> out(B.rows());
  for (int i = 0; i < B.rows(); ++i) out[i] = dot_row({B.row(i), static_cast<std::size_t>(B.cols())}, x);
  return out;
}

}  // namespace gtcs
