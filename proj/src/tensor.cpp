#include "fsvqa/tensor.hpp"

namespace fsvqa {

EmbeddingVector concat(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() == 0 || b.size() == 0) {
    throw ShapeError("concat requires two non-empty vectors");
  }
  EmbeddingVector out(a.size() + b.size());
  out << a, b;
  return out;
}

NormStats zscore_fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0 || rows.cols() == 0) {
    throw ShapeError("zscore_fit needs at least one non-empty vector");
  }
  NormStats s;
  s.mean = rows.colwise().mean().transpose();
  Eigen::MatrixXd centered = rows.rowwise() - s.mean.transpose();
  s.std = (centered.array().square().colwise().sum() / static_cast<double>(rows.rows())).sqrt().transpose();
  return s;
}

NormStats zscore_fit(std::span<const EmbeddingVector> vs) {
  if (vs.empty()) {
    throw ShapeError("zscore_fit needs at least one vector");
  }
  const auto dim = vs.front().size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(vs.size()), dim);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (vs[i].size() != dim) {
      throw ShapeError("zscore_fit: mixed dims " + std::to_string(dim) + " and " + std::to_string(vs[i].size()));
    }
    rows.row(static_cast<Eigen::Index>(i)) = vs[i].transpose();
  }
  return zscore_fit(rows);
}

EmbeddingVector zscore_apply(const EmbeddingVector& v, const NormStats& s, double eps) {
  if (v.size() != s.dim()) {
    throw ShapeError("zscore_apply: vector dim " + std::to_string(v.size()) + " vs stats dim " +
                     std::to_string(s.dim()));
  }
  return ((v - s.mean).array() / s.std.array().max(eps)).matrix();
}

Eigen::MatrixXd zscore_apply_rows(const Eigen::MatrixXd& rows, const NormStats& s, double eps) {
  if (rows.cols() != s.dim()) {
    throw ShapeError("zscore_apply: row dim " + std::to_string(rows.cols()) + " vs stats dim " +
                     std::to_string(s.dim()));
  }
  Eigen::RowVectorXd denom = s.std.array().max(eps).matrix().transpose();
  return ((rows.rowwise() - s.mean.transpose()).array().rowwise() / denom.array()).matrix();
}

}  // namespace fsvqa
