#pragma once

#include <scraps/encoder.hpp>

namespace scraps {

// L = T A^T; row i is phonetic item i, column j acoustic item j. Temperature
// is carried along and applied only when normalizing.
template <typename S>
struct ScoreMatrix {
  Mat<S> logits;
  double temperature = 1.0;

  Eigen::Index rows() const { return logits.rows(); }
  Eigen::Index cols() const { return logits.cols(); }
};

enum class Axis {
  kColumns,  // each column sums to one (normalize over k = 1..N)
  kRows,     // each row sums to one (normalize over k = 1..M)
};

template <typename S>
struct ProbMatrix {
  Mat<S> values;
  Axis axis = Axis::kColumns;
};

template <typename S>
ScoreMatrix<S> score_matrix(const Mat<S>& phonetic, const Mat<S>& acoustic, double temperature = 1.0) {
  if (phonetic.cols() != acoustic.cols())
    throw ConfigError("score_matrix: embedding sizes differ (" + std::to_string(phonetic.cols()) + " vs " +
                      std::to_string(acoustic.cols()) + ")");
  if (!(temperature > 0.0)) throw ConfigError("score_matrix: temperature must be > 0");
  return {phonetic * acoustic.transpose(), temperature};
}

template <typename S>
ScoreMatrix<S> score_matrix(const EmbeddingBatch<S>& phonetic, const EmbeddingBatch<S>& acoustic,
                            double temperature = 1.0) {
  return score_matrix(phonetic.rows, acoustic.rows, temperature);
}

namespace detail {

// Stable log-softmax along rows of x.
template <typename S>
Mat<S> log_softmax_rows(const Mat<S>& x) {
  Mat<S> out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S m = x.row(r).maxCoeff();
    const S lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  return out;
}

}  // namespace detail

template <typename S>
ProbMatrix<S> normalize_scores(const ScoreMatrix<S>& L, Axis axis) {
  if (!L.logits.allFinite()) throw ConfigError("normalize_scores: non-finite logits");
  if (!(L.temperature > 0.0)) throw ConfigError("normalize_scores: temperature must be > 0");
  const Mat<S> scaled = L.logits / static_cast<S>(L.temperature);
  ProbMatrix<S> p;
  p.axis = axis;
  if (axis == Axis::kRows) {
    p.values = detail::log_softmax_rows(scaled).array().exp();
  } else {
    const Mat<S> t = scaled.transpose();
    p.values = detail::log_softmax_rows(t).transpose().array().exp();
  }
  return p;
}

template <typename S>
struct LossResult {
  S loss = 0;
  Mat<S> grad;  // dloss/dlogits (unscaled logits)
};

// Symmetric cross-entropy with matching pairs on the diagonal, negated and
// averaged over both directions: -(1/2B) [sum_i log P1(i,i) + sum_i log P2(i,i)].
template <typename S>
LossResult<S> contrastive_loss_with_grad(const ScoreMatrix<S>& L) {
  if (L.rows() != L.cols())
    throw ConfigError("contrastive_loss: score matrix must be square, got " + std::to_string(L.rows()) + "x" +
                      std::to_string(L.cols()));
  if (L.rows() == 0) throw ConfigError("contrastive_loss: empty score matrix");
  if (!L.logits.allFinite()) throw ConfigError("contrastive_loss: non-finite logits");
  const auto B = L.rows();
  const S inv_t = static_cast<S>(1.0 / L.temperature);
  const Mat<S> scaled = L.logits * inv_t;
  const Mat<S> log_p2 = detail::log_softmax_rows(scaled);                           // rows
  const Mat<S> log_p1 = detail::log_softmax_rows<S>(scaled.transpose()).transpose();  // columns
  LossResult<S> r;
  r.loss = -(log_p1.diagonal().sum() + log_p2.diagonal().sum()) / static_cast<S>(2 * B);
  // d/dz of -log softmax is (p - onehot); both directions, scaled by 1/(2B T).
  Mat<S> g = log_p1.array().exp() + log_p2.array().exp();
  g.diagonal().array() -= S(2);
  r.grad = g * (inv_t / static_cast<S>(2 * B));
  return r;
}

template <typename S>
S contrastive_loss(const ScoreMatrix<S>& L) {
  return contrastive_loss_with_grad(L).loss;
}

}  // namespace scraps
