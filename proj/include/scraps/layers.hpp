#pragma once

#include <scraps/common.hpp>

#include <functional>
#include <string>
#include <vector>

// Building blocks with hand-written backward passes. Sequence batches are
// (batch * max_len) x width matrices; row b * max_len + t holds position t of
// sample b. Positions t >= lengths[b] are padding: attention never reads them
// as keys, and the integrator carries its state through them unchanged.

namespace scraps::nn {

template <typename S>
using ParamVisitor = std::function<void(const std::string&, Mat<S>&)>;

// ---------------------------------------------------------------------------
// Initialization

template <typename S>
void xavier_uniform(Mat<S>& w, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  w.resize(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(rng.uniform(-limit, limit));
}

template <typename S>
void normal_init(Mat<S>& w, Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  w.resize(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<S>(rng.normal() * stddev);
}

// ---------------------------------------------------------------------------
// Linear: y = x W + b

template <typename S>
struct Linear {
  Mat<S> weight;  // in x out
  Mat<S> bias;    // 1 x out

  void init(int in, int out, Rng& rng) {
    xavier_uniform(weight, in, out, rng);
    bias = Mat<S>::Zero(1, out);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }

  Mat<S> forward(const Mat<S>& x) const {
    Mat<S> y = x * weight;
    y.rowwise() += bias.row(0);
    return y;
  }

  // Accumulates parameter gradients into `grad`; returns dL/dx.
  Mat<S> backward(const Mat<S>& dy, const Mat<S>& x, Linear& grad) const {
    grad.weight.noalias() += x.transpose() * dy;
    grad.bias.row(0) += dy.colwise().sum();
    return dy * weight.transpose();
  }
};

// ---------------------------------------------------------------------------
// Row-wise layer normalization.

template <typename S>
struct LayerNorm {
  static constexpr double kEps = 1e-5;
  Mat<S> gamma;  // 1 x d
  Mat<S> beta;   // 1 x d

  struct Cache {
    Mat<S> xhat;
    Eigen::Matrix<S, Eigen::Dynamic, 1> rstd;
  };

  void init(int d) {
    gamma = Mat<S>::Ones(1, d);
    beta = Mat<S>::Zero(1, d);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    f(prefix + ".gamma", gamma);
    f(prefix + ".beta", beta);
  }

  Mat<S> forward(const Mat<S>& x, Cache& cache) const {
    const auto d = static_cast<S>(x.cols());
    cache.xhat.resize(x.rows(), x.cols());
    cache.rstd.resize(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const S mean = x.row(r).sum() / d;
      const S var = (x.row(r).array() - mean).square().sum() / d;
      const S rstd = S(1) / std::sqrt(var + static_cast<S>(kEps));
      cache.rstd[r] = rstd;
      cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
    }
    Mat<S> y = cache.xhat.array().rowwise() * gamma.row(0).array();
    y.rowwise() += beta.row(0);
    return y;
  }

  Mat<S> backward(const Mat<S>& dy, const Cache& cache, LayerNorm& grad) const {
    grad.gamma.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    grad.beta.row(0) += dy.colwise().sum();
    const auto d = static_cast<S>(dy.cols());
    Mat<S> dxhat = dy.array().rowwise() * gamma.row(0).array();
    Mat<S> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const S m1 = dxhat.row(r).sum() / d;
      const S m2 = dxhat.row(r).dot(cache.xhat.row(r)) / d;
      dx.row(r) = cache.rstd[r] * (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2);
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Inverted dropout. An empty mask means "inactive".

template <typename S>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng) {
  if (rng == nullptr || rate <= 0.0) return {};
  Mat<S> mask(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < rate ? S(0) : keep;
  return mask;
}

template <typename S>
Mat<S> apply_mask(const Mat<S>& x, const Mat<S>& mask) {
  if (mask.size() == 0) return x;
  return x.cwiseProduct(mask);
}

// ---------------------------------------------------------------------------
// Layout of a padded sequence batch.

struct SeqLayout {
  int batch = 0;
  int max_len = 0;
  std::vector<int> lengths;

  Eigen::Index rows() const { return static_cast<Eigen::Index>(batch) * max_len; }
  Eigen::Index row(int b, int t) const { return static_cast<Eigen::Index>(b) * max_len + t; }
};

// Sinusoidal positional encoding, max_len x d.
template <typename S>
Mat<S> positional_encoding(int max_len, int d) {
  Mat<S> pe(max_len, d);
  for (int pos = 0; pos < max_len; ++pos)
    for (int i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d);
      pe(pos, i) = static_cast<S>(i % 2 == 0 ? std::sin(pos * rate) : std::cos(pos * rate));
    }
  return pe;
}

template <typename S>
void add_positional_encoding(Mat<S>& x, const SeqLayout& layout) {
  const Mat<S> pe = positional_encoding<S>(layout.max_len, static_cast<int>(x.cols()));
  for (int b = 0; b < layout.batch; ++b) x.middleRows(layout.row(b, 0), layout.max_len) += pe;
}

// ---------------------------------------------------------------------------
// Multi-head self-attention restricted to the real positions of each sample.
// Outputs at padded positions are zero.

template <typename S>
struct SelfAttention {
  Linear<S> qkv;  // d -> 3d
  Linear<S> out;  // d -> d
  int heads = 1;

  struct Cache {
    Mat<S> input;
    Mat<S> qkv;
    Mat<S> context;
    std::vector<Mat<S>> probs;  // batch * heads, each len x len
  };

  void init(int d, int n_heads, Rng& rng) {
    heads = n_heads;
    qkv.init(d, 3 * d, rng);
    out.init(d, d, rng);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    qkv.visit(prefix + ".qkv", f);
    out.visit(prefix + ".out", f);
  }

  Mat<S> forward(const Mat<S>& x, const SeqLayout& layout, Cache& cache) const {
    const int d = static_cast<int>(x.cols());
    const int dh = d / heads;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    cache.input = x;
    cache.qkv = qkv.forward(x);
    cache.context = Mat<S>::Zero(x.rows(), d);
    cache.probs.assign(static_cast<std::size_t>(layout.batch) * heads, Mat<S>());
    for (int b = 0; b < layout.batch; ++b) {
      const int n = layout.lengths[b];
      const auto r0 = layout.row(b, 0);
      for (int h = 0; h < heads; ++h) {
        const auto q = cache.qkv.block(r0, h * dh, n, dh);
        const auto k = cache.qkv.block(r0, d + h * dh, n, dh);
        const auto v = cache.qkv.block(r0, 2 * d + h * dh, n, dh);
        Mat<S> p = (q * k.transpose()) * scale;
        for (int i = 0; i < n; ++i) {
          const S m = p.row(i).maxCoeff();
          p.row(i) = (p.row(i).array() - m).exp();
          p.row(i) /= p.row(i).sum();
        }
        cache.context.block(r0, h * dh, n, dh).noalias() = p * v;
        cache.probs[static_cast<std::size_t>(b) * heads + h] = std::move(p);
      }
    }
    return out.forward(cache.context);
  }

  Mat<S> backward(const Mat<S>& dy, const SeqLayout& layout, const Cache& cache, SelfAttention& grad) const {
    const int d = static_cast<int>(dy.cols());
    const int dh = d / heads;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    const Mat<S> dcontext = out.backward(dy, cache.context, grad.out);
    Mat<S> dqkv = Mat<S>::Zero(dy.rows(), 3 * d);
    for (int b = 0; b < layout.batch; ++b) {
      const int n = layout.lengths[b];
      const auto r0 = layout.row(b, 0);
      for (int h = 0; h < heads; ++h) {
        const Mat<S>& p = cache.probs[static_cast<std::size_t>(b) * heads + h];
        const auto q = cache.qkv.block(r0, h * dh, n, dh);
        const auto k = cache.qkv.block(r0, d + h * dh, n, dh);
        const auto v = cache.qkv.block(r0, 2 * d + h * dh, n, dh);
        const auto dctx = dcontext.block(r0, h * dh, n, dh);
        const Mat<S> dp = dctx * v.transpose();
        dqkv.block(r0, 2 * d + h * dh, n, dh).noalias() = p.transpose() * dctx;
        Mat<S> ds(n, n);
        for (int i = 0; i < n; ++i) {
          const S dot = dp.row(i).dot(p.row(i));
          ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
        }
        ds *= scale;
        dqkv.block(r0, h * dh, n, dh).noalias() = ds * k;
        dqkv.block(r0, d + h * dh, n, dh).noalias() = ds.transpose() * q;
      }
    }
    return qkv.backward(dqkv, cache.input, grad.qkv);
  }
};

// ---------------------------------------------------------------------------
// Position-wise feed-forward: Linear -> ReLU -> Linear.

template <typename S>
struct FeedForward {
  Linear<S> fc1;
  Linear<S> fc2;

  struct Cache {
    Mat<S> input;
    Mat<S> hidden;  // post-activation
  };

  void init(int d, int d_ff, Rng& rng) {
    fc1.init(d, d_ff, rng);
    fc2.init(d_ff, d, rng);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    fc1.visit(prefix + ".fc1", f);
    fc2.visit(prefix + ".fc2", f);
  }

  Mat<S> forward(const Mat<S>& x, Cache& cache) const {
    cache.input = x;
    cache.hidden = fc1.forward(x).cwiseMax(S(0));
    return fc2.forward(cache.hidden);
  }

  Mat<S> backward(const Mat<S>& dy, const Cache& cache, FeedForward& grad) const {
    Mat<S> dh = fc2.backward(dy, cache.hidden, grad.fc2);
    dh = (cache.hidden.array() > S(0)).select(dh, S(0));
    return fc1.backward(dh, cache.input, grad.fc1);
  }
};

// ---------------------------------------------------------------------------
// Pre-norm transformer block:
//   x1 = x + drop(attn(ln1(x)));  y = x1 + drop(ffn(ln2(x1)))

template <typename S>
struct TransformerBlock {
  LayerNorm<S> ln1, ln2;
  SelfAttention<S> attn;
  FeedForward<S> ffn;

  struct Cache {
    typename LayerNorm<S>::Cache ln1, ln2;
    typename SelfAttention<S>::Cache attn;
    typename FeedForward<S>::Cache ffn;
    Mat<S> drop1, drop2;
  };

  void init(int d, int heads, int d_ff, Rng& rng) {
    ln1.init(d);
    attn.init(d, heads, rng);
    ln2.init(d);
    ffn.init(d, d_ff, rng);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    ln1.visit(prefix + ".ln1", f);
    attn.visit(prefix + ".attn", f);
    ln2.visit(prefix + ".ln2", f);
    ffn.visit(prefix + ".ffn", f);
  }

  Mat<S> forward(const Mat<S>& x, const SeqLayout& layout, double dropout, Rng* rng, Cache& c) const {
    Mat<S> a = attn.forward(ln1.forward(x, c.ln1), layout, c.attn);
    c.drop1 = dropout_mask<S>(a.rows(), a.cols(), dropout, rng);
    Mat<S> x1 = x + apply_mask(a, c.drop1);
    Mat<S> f = ffn.forward(ln2.forward(x1, c.ln2), c.ffn);
    c.drop2 = dropout_mask<S>(f.rows(), f.cols(), dropout, rng);
    return x1 + apply_mask(f, c.drop2);
  }

  Mat<S> backward(const Mat<S>& dy, const SeqLayout& layout, const Cache& c, TransformerBlock& g) const {
    Mat<S> dx1 = dy + ln2.backward(ffn.backward(apply_mask(dy, c.drop2), c.ffn, g.ffn), c.ln2, g.ln2);
    return dx1 + ln1.backward(attn.backward(apply_mask(dx1, c.drop1), layout, c.attn, g.attn), c.ln1, g.ln1);
  }
};

// Stack of blocks followed by a final layer norm.
template <typename S>
struct Transformer {
  std::vector<TransformerBlock<S>> blocks;
  LayerNorm<S> final_norm;

  struct Cache {
    std::vector<typename TransformerBlock<S>::Cache> blocks;
    typename LayerNorm<S>::Cache final_norm;
  };

  void init(int layers, int d, int heads, int d_ff, Rng& rng) {
    blocks.resize(static_cast<std::size_t>(layers));
    for (auto& b : blocks) b.init(d, heads, d_ff, rng);
    final_norm.init(d);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + ".layers." + std::to_string(i), f);
    final_norm.visit(prefix + ".final_norm", f);
  }

  Mat<S> forward(Mat<S> x, const SeqLayout& layout, double dropout, Rng* rng, Cache& c) const {
    c.blocks.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) x = blocks[i].forward(x, layout, dropout, rng, c.blocks[i]);
    return final_norm.forward(x, c.final_norm);
  }

  Mat<S> backward(const Mat<S>& dy, const SeqLayout& layout, const Cache& c, Transformer& g) const {
    Mat<S> dx = final_norm.backward(dy, c.final_norm, g.final_norm);
    for (std::size_t i = blocks.size(); i-- > 0;) dx = blocks[i].backward(dx, layout, c.blocks[i], g.blocks[i]);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Single-layer LSTM run over a padded batch with masked updates; returns the
// hidden state after each sample's last real position. Gate order: i, f, g, o.

template <typename S>
struct Lstm {
  Mat<S> w_input;      // in x 4H
  Mat<S> w_recurrent;  // H x 4H
  Mat<S> bias;         // 1 x 4H

  struct Cache {
    Mat<S> input;
    std::vector<Mat<S>> gates;   // per step, B x 4H (post-activation)
    std::vector<Mat<S>> h_prev;  // per step, B x H
    std::vector<Mat<S>> c_prev;
    std::vector<Mat<S>> c_tanh;
  };

  int hidden() const { return static_cast<int>(w_recurrent.rows()); }

  void init(int in, int hidden_size, Rng& rng) {
    xavier_uniform(w_input, in, 4 * hidden_size, rng);
    xavier_uniform(w_recurrent, hidden_size, 4 * hidden_size, rng);
    bias = Mat<S>::Zero(1, 4 * hidden_size);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& f) {
    f(prefix + ".w_input", w_input);
    f(prefix + ".w_recurrent", w_recurrent);
    f(prefix + ".bias", bias);
  }

  static S sigmoid(S x) { return S(1) / (S(1) + std::exp(-x)); }

  Mat<S> forward(const Mat<S>& x, const SeqLayout& layout, Cache& c) const {
    const int H = hidden();
    const int B = layout.batch;
    c.input = x;
    Mat<S> gx = x * w_input;
    gx.rowwise() += bias.row(0);
    c.gates.assign(static_cast<std::size_t>(layout.max_len), Mat<S>());
    c.h_prev.assign(c.gates.size(), Mat<S>());
    c.c_prev.assign(c.gates.size(), Mat<S>());
    c.c_tanh.assign(c.gates.size(), Mat<S>());
    Mat<S> h = Mat<S>::Zero(B, H);
    Mat<S> cell = Mat<S>::Zero(B, H);
    using Strided = Eigen::Map<const Mat<S>, 0, Eigen::OuterStride<>>;
    for (int t = 0; t < layout.max_len; ++t) {
      const Strided gx_t(gx.data() + static_cast<Eigen::Index>(t) * 4 * H, B, 4 * H,
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(layout.max_len) * 4 * H));
      Mat<S> gates = gx_t;
      gates.noalias() += h * w_recurrent;
      gates.leftCols(2 * H) = gates.leftCols(2 * H).unaryExpr([](S v) { return sigmoid(v); });
      gates.middleCols(2 * H, H) = gates.middleCols(2 * H, H).array().tanh();
      gates.rightCols(H) = gates.rightCols(H).unaryExpr([](S v) { return sigmoid(v); });
      c.h_prev[t] = h;
      c.c_prev[t] = cell;
      Mat<S> c_new = gates.middleCols(H, H).cwiseProduct(cell) + gates.leftCols(H).cwiseProduct(gates.middleCols(2 * H, H));
      Mat<S> c_tanh = c_new.array().tanh();
      Mat<S> h_new = gates.rightCols(H).cwiseProduct(c_tanh);
      for (int b = 0; b < B; ++b) {
        if (t < layout.lengths[b]) {
          h.row(b) = h_new.row(b);
          cell.row(b) = c_new.row(b);
        }
      }
      c.gates[t] = std::move(gates);
      c.c_tanh[t] = std::move(c_tanh);
    }
    return h;
  }

  Mat<S> backward(const Mat<S>& dh_out, const SeqLayout& layout, const Cache& c, Lstm& g) const {
    const int H = hidden();
    const int B = layout.batch;
    Mat<S> dgx = Mat<S>::Zero(layout.rows(), 4 * H);
    Mat<S> dh = dh_out;
    Mat<S> dc = Mat<S>::Zero(B, H);
    Mat<S> dgates(B, 4 * H);
    for (int t = layout.max_len - 1; t >= 0; --t) {
      const Mat<S>& gates = c.gates[t];
      const auto i = gates.leftCols(H).array();
      const auto f = gates.middleCols(H, H).array();
      const auto gg = gates.middleCols(2 * H, H).array();
      const auto o = gates.rightCols(H).array();
      const auto ct = c.c_tanh[t].array();
      Mat<S> dc_t = dc.array() + dh.array() * o * (S(1) - ct.square());
      dgates.leftCols(H) = (dc_t.array() * gg * i * (S(1) - i)).matrix();
      dgates.middleCols(H, H) = (dc_t.array() * c.c_prev[t].array() * f * (S(1) - f)).matrix();
      dgates.middleCols(2 * H, H) = (dc_t.array() * i * (S(1) - gg.square())).matrix();
      dgates.rightCols(H) = (dh.array() * ct * o * (S(1) - o)).matrix();
      Mat<S> dc_prev = dc_t.array() * f;
      for (int b = 0; b < B; ++b) {
        if (t >= layout.lengths[b]) {
          dgates.row(b).setZero();
          dc_prev.row(b) = dc.row(b);
        }
      }
      g.w_recurrent.noalias() += c.h_prev[t].transpose() * dgates;
      Mat<S> dh_prev = dgates * w_recurrent.transpose();
      for (int b = 0; b < B; ++b) {
        if (t >= layout.lengths[b]) {
          dh_prev.row(b) = dh.row(b);
        } else {
          dgx.row(layout.row(b, t)) = dgates.row(b);
        }
      }
      dh = std::move(dh_prev);
      dc = std::move(dc_prev);
    }
    g.w_input.noalias() += c.input.transpose() * dgx;
    g.bias.row(0) += dgx.colwise().sum();
    return dgx * w_input.transpose();
  }
};

}  // namespace scraps::nn
