#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsvqa/errors.hpp"

namespace fsvqa {

/// Dense row-major n-d array with an explicit shape.
///
/// Storage scalar is a template parameter; activations coming off disk are
/// `Tensor<float>`. All reductions over tensors accumulate in double.
template <typename Scalar>
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;
  using RowsMap = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty()) {
      throw ShapeError("tensor shape must have at least one dimension");
    }
    for (auto d : shape_) {
      if (d == 0) {
        throw ShapeError("tensor shape entries must be positive, got " + shape_string());
      }
    }
    if (data_.size() != element_count(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string());
    }
  }

  static Tensor zeros(Shape shape) {
    auto n = element_count(shape);
    return Tensor(std::move(shape), std::vector<Scalar>(n, Scalar(0)));
  }

  static std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t last_dim() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<const Scalar> data() const noexcept { return data_; }
  std::span<Scalar> mutable_data() noexcept { return data_; }

  /// View as (product of leading dims) x (last dim).
  RowsMap rows_view() const {
    auto cols = static_cast<Eigen::Index>(last_dim());
    auto rows = cols == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(data_.size()) / cols;
    return RowsMap(data_.data(), rows, cols);
  }

  bool all_finite() const {
    for (auto v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_string() const {
    std::string out = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(shape_[i]);
    }
    return out + "]";
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

using EmbeddingTensor = Tensor<float>;
using EmbeddingVector = Eigen::VectorXd;

inline constexpr double kDefaultEps = 1e-6;

/// Per-dimension statistics of a test population.
struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  Eigen::Index dim() const noexcept { return mean.size(); }
};

/// Mean over every axis but the last. A rank-1 tensor comes back unchanged.
template <typename Scalar>
EmbeddingVector mean_pool_except_last(const Tensor<Scalar>& t) {
  if (t.empty()) {
    throw ShapeError("cannot pool an empty tensor");
  }
  auto rows = t.rows_view();
  EmbeddingVector acc = EmbeddingVector::Zero(rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    acc += rows.row(r).transpose().template cast<double>();
  }
  return acc / static_cast<double>(rows.rows());
}

template <typename A, typename B>
double euclidean_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("distance between vectors of dim " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  return std::sqrt((a.template cast<double>() - b.template cast<double>()).squaredNorm());
}

/// `a` followed by `b`.
EmbeddingVector concat(const EmbeddingVector& a, const EmbeddingVector& b);

/// Population mean and standard deviation per dimension. One vector per row.
NormStats zscore_fit(const Eigen::MatrixXd& rows);
NormStats zscore_fit(std::span<const EmbeddingVector> vs);

/// (v - mean) / max(std, eps), per dimension.
EmbeddingVector zscore_apply(const EmbeddingVector& v, const NormStats& s, double eps = kDefaultEps);

/// Row-wise zscore_apply.
Eigen::MatrixXd zscore_apply_rows(const Eigen::MatrixXd& rows, const NormStats& s, double eps = kDefaultEps);

}  // namespace fsvqa
