#pragma once

// Small post-LayerNorm transformer encoder with a sentence-classification
// head over the [CLS] position. Forward and backward passes are written out
// by hand; parameters are double precision.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "finrex/common.hpp"
#include "finrex/random.hpp"

namespace finrex {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;  // AdamW first moment
  Matrix v;  // AdamW second moment
  bool decay = true;

  Param(std::string n, Matrix init, bool wd)
      : name(std::move(n)),
        value(std::move(init)),
        grad(Matrix::Zero(value.rows(), value.cols())),
        m(grad),
        v(grad),
        decay(wd) {}
};

struct EncoderShape {
  int vocab_size = 0;
  int max_positions = 128;
  int num_segments = 3;
  int layers = 2;
  int heads = 4;
  int dim = 64;
  int ffn_dim = 256;
  int num_labels = 2;
  double dropout = 0.1;

  json to_json() const {
    return {{"vocab_size", vocab_size}, {"max_positions", max_positions},
            {"num_segments", num_segments}, {"layers", layers}, {"heads", heads},
            {"dim", dim}, {"ffn_dim", ffn_dim}, {"num_labels", num_labels},
            {"dropout", dropout}};
  }
  static EncoderShape from_json(const json& j) {
    EncoderShape s;
    s.vocab_size = j.at("vocab_size");
    s.max_positions = j.at("max_positions");
    s.num_segments = j.at("num_segments");
    s.layers = j.at("layers");
    s.heads = j.at("heads");
    s.dim = j.at("dim");
    s.ffn_dim = j.at("ffn_dim");
    s.num_labels = j.at("num_labels");
    s.dropout = j.at("dropout");
    return s;
  }
};

namespace detail {

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

inline Matrix layer_norm(const Matrix& x, const Param& gain, const Param& bias,
                         LayerNormCache& cache, double eps = 1e-12) {
  const auto d = static_cast<double>(x.cols());
  cache.xhat.resize(x.rows(), x.cols());
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / d;
    const RowVector centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / d;
    cache.inv_std(r) = 1.0 / std::sqrt(var + eps);
    cache.xhat.row(r) = centered * cache.inv_std(r);
  }
  Matrix y = cache.xhat.array().rowwise() * gain.value.row(0).array();
  y.rowwise() += bias.value.row(0);
  return y;
}

inline Matrix layer_norm_backward(const Matrix& dy, Param& gain, Param& bias,
                                  const LayerNormCache& cache) {
  gain.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  bias.grad.row(0) += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * gain.value.row(0).array();
  const auto d = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_dxhat = dxhat.row(r).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(r).dot(cache.xhat.row(r)) / d;
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_dxhat - cache.xhat.row(r).array() * mean_dxhat_xhat)
                    .matrix();
  }
  return dx;
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

// Inverted dropout mask (entries 0 or 1/(1-p)); empty when inactive.
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng* rng) {
  if (!rng || p <= 0.0) return {};
  Matrix mask(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) mask(r, c) = rng->uniform() < p ? 0.0 : keep;
  return mask;
}

inline Matrix apply_mask(const Matrix& x, const Matrix& mask) {
  return mask.size() == 0 ? x : Matrix(x.cwiseProduct(mask));
}

inline void softmax_rows(Matrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
}

}  // namespace detail

inline RowVector softmax(const RowVector& logits) {
  const double mx = logits.maxCoeff();
  RowVector p = (logits.array() - mx).exp();
  return p / p.sum();
}

class TinyEncoder {
 public:
  struct LayerParams {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo, ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };

  struct LayerCache {
    Matrix x_in, q, k, v, ctx, attn_out, mask1, h1, f_pre, f_act, f_out, mask2;
    std::vector<Matrix> attn;
    detail::LayerNormCache ln1, ln2;
  };

  struct ForwardCache {
    std::vector<int> ids, segments;
    Matrix mask_emb;
    detail::LayerNormCache ln_emb;
    std::vector<LayerCache> layers;
    Matrix final_hidden;
    RowVector cls, cls_dropped, mask_h1, pooled, pooled_dropped, mask_h2;
    RowVector logits;
  };

  TinyEncoder() = default;

  // BERT-style init: N(0, 0.02) weights, zero biases, unit LayerNorm gains.
  // Rows listed in `mean_init_rows` (registered tag tokens) are then set to
  // the mean of the remaining word-embedding rows.
  TinyEncoder(const EncoderShape& shape, std::uint64_t seed,
              const std::vector<int>& mean_init_rows = {})
      : shape_(shape) {
    if (shape.dim % shape.heads != 0) throw Error("dim must be divisible by heads");
    Rng rng(seed);
    auto normal = [&](int r, int c) {
      Matrix m(r, c);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.normal(0.0, 0.02);
      return m;
    };
    const int d = shape.dim;
    word_ = add("emb.word", normal(shape.vocab_size, d), true);
    pos_ = add("emb.position", normal(shape.max_positions, d), true);
    seg_ = add("emb.segment", normal(shape.num_segments, d), true);
    ln_emb_g_ = add("emb.ln.gain", Matrix::Ones(1, d), false);
    ln_emb_b_ = add("emb.ln.bias", Matrix::Zero(1, d), false);
    for (int l = 0; l < shape.layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      LayerParams lp{};
      lp.wq = add(p + "attn.wq", normal(d, d), true);
      lp.bq = add(p + "attn.bq", Matrix::Zero(1, d), false);
      lp.wk = add(p + "attn.wk", normal(d, d), true);
      lp.bk = add(p + "attn.bk", Matrix::Zero(1, d), false);
      lp.wv = add(p + "attn.wv", normal(d, d), true);
      lp.bv = add(p + "attn.bv", Matrix::Zero(1, d), false);
      lp.wo = add(p + "attn.wo", normal(d, d), true);
      lp.bo = add(p + "attn.bo", Matrix::Zero(1, d), false);
      lp.ln1_g = add(p + "ln1.gain", Matrix::Ones(1, d), false);
      lp.ln1_b = add(p + "ln1.bias", Matrix::Zero(1, d), false);
      lp.w1 = add(p + "ffn.w1", normal(d, shape.ffn_dim), true);
      lp.b1 = add(p + "ffn.b1", Matrix::Zero(1, shape.ffn_dim), false);
      lp.w2 = add(p + "ffn.w2", normal(shape.ffn_dim, d), true);
      lp.b2 = add(p + "ffn.b2", Matrix::Zero(1, d), false);
      lp.ln2_g = add(p + "ln2.gain", Matrix::Ones(1, d), false);
      lp.ln2_b = add(p + "ln2.bias", Matrix::Zero(1, d), false);
      layers_.push_back(lp);
    }
    head_dense_w_ = add("head.dense.w", normal(d, d), true);
    head_dense_b_ = add("head.dense.b", Matrix::Zero(1, d), false);
    head_out_w_ = add("head.out.w", normal(d, shape.num_labels), true);
    head_out_b_ = add("head.out.b", Matrix::Zero(1, shape.num_labels), false);

    if (!mean_init_rows.empty()) {
      std::vector<bool> special(static_cast<std::size_t>(shape.vocab_size), false);
      for (int r : mean_init_rows) special.at(static_cast<std::size_t>(r)) = true;
      RowVector mean = RowVector::Zero(d);
      int count = 0;
      Matrix& w = params_[word_].value;
      for (int r = 0; r < shape.vocab_size; ++r)
        if (!special[static_cast<std::size_t>(r)]) mean += w.row(r), ++count;
      if (count > 0) mean /= count;
      for (int r : mean_init_rows) w.row(r) = mean;
    }
  }

  const EncoderShape& shape() const { return shape_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  // Indices of the classification-head parameters.
  std::vector<std::size_t> head_params() const {
    return {head_dense_w_, head_dense_b_, head_out_w_, head_out_b_};
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  // `rng` non-null enables dropout (training mode).
  RowVector forward(const std::vector<int>& ids, const std::vector<int>& segments,
                    ForwardCache& c, Rng* rng) const {
    const auto L = static_cast<Eigen::Index>(ids.size());
    if (L == 0) throw Error("empty input sequence");
    if (L > shape_.max_positions) throw Error("sequence longer than max_positions");
    const double p = shape_.dropout;
    c.ids = ids;
    c.segments = segments;
    Matrix x(L, shape_.dim);
    for (Eigen::Index i = 0; i < L; ++i)
      x.row(i) = P(word_).row(ids[static_cast<std::size_t>(i)]) + P(pos_).row(i) +
                 P(seg_).row(segments[static_cast<std::size_t>(i)]);
    x = detail::layer_norm(x, params_[ln_emb_g_], params_[ln_emb_b_], c.ln_emb);
    c.mask_emb = detail::dropout_mask(L, shape_.dim, p, rng);
    x = detail::apply_mask(x, c.mask_emb);

    c.layers.assign(layers_.size(), {});
    const int dk = shape_.dim / shape_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& lp = layers_[l];
      auto& lc = c.layers[l];
      lc.x_in = x;
      lc.q = affine(x, lp.wq, lp.bq);
      lc.k = affine(x, lp.wk, lp.bk);
      lc.v = affine(x, lp.wv, lp.bv);
      lc.ctx.resize(L, shape_.dim);
      lc.attn.resize(static_cast<std::size_t>(shape_.heads));
      for (int h = 0; h < shape_.heads; ++h) {
        Matrix s = lc.q.middleCols(h * dk, dk) * lc.k.middleCols(h * dk, dk).transpose() * scale;
        detail::softmax_rows(s);
        lc.ctx.middleCols(h * dk, dk) = s * lc.v.middleCols(h * dk, dk);
        lc.attn[static_cast<std::size_t>(h)] = std::move(s);
      }
      lc.attn_out = affine(lc.ctx, lp.wo, lp.bo);
      lc.mask1 = detail::dropout_mask(L, shape_.dim, p, rng);
      lc.h1 = detail::layer_norm(x + detail::apply_mask(lc.attn_out, lc.mask1), params_[lp.ln1_g],
                                 params_[lp.ln1_b], lc.ln1);
      lc.f_pre = affine(lc.h1, lp.w1, lp.b1);
      lc.f_act = lc.f_pre.unaryExpr([](double v) { return detail::gelu(v); });
      lc.f_out = affine(lc.f_act, lp.w2, lp.b2);
      lc.mask2 = detail::dropout_mask(L, shape_.dim, p, rng);
      x = detail::layer_norm(lc.h1 + detail::apply_mask(lc.f_out, lc.mask2), params_[lp.ln2_g],
                             params_[lp.ln2_b], lc.ln2);
    }
    c.final_hidden = x;

    c.cls = x.row(0);
    c.mask_h1 = rng ? RowVector(detail::dropout_mask(1, shape_.dim, p, rng)) : RowVector();
    c.cls_dropped = c.mask_h1.size() ? RowVector(c.cls.cwiseProduct(c.mask_h1)) : c.cls;
    c.pooled = (c.cls_dropped * P(head_dense_w_) + P(head_dense_b_)).array().tanh();
    c.mask_h2 = rng ? RowVector(detail::dropout_mask(1, shape_.dim, p, rng)) : RowVector();
    c.pooled_dropped = c.mask_h2.size() ? RowVector(c.pooled.cwiseProduct(c.mask_h2)) : c.pooled;
    c.logits = c.pooled_dropped * P(head_out_w_) + P(head_out_b_);
    return c.logits;
  }

  // Accumulates parameter gradients for d(loss)/d(logits).
  void backward(const ForwardCache& c, const RowVector& dlogits) {
    G(head_out_w_) += c.pooled_dropped.transpose() * dlogits;
    G(head_out_b_) += dlogits;
    RowVector dpooled = dlogits * P(head_out_w_).transpose();
    if (c.mask_h2.size()) dpooled = dpooled.cwiseProduct(c.mask_h2);
    const RowVector dpre = dpooled.array() * (1.0 - c.pooled.array().square());
    G(head_dense_w_) += c.cls_dropped.transpose() * dpre;
    G(head_dense_b_) += dpre;
    RowVector dcls = dpre * P(head_dense_w_).transpose();
    if (c.mask_h1.size()) dcls = dcls.cwiseProduct(c.mask_h1);

    const auto L = static_cast<Eigen::Index>(c.ids.size());
    Matrix dx = Matrix::Zero(L, shape_.dim);
    dx.row(0) = dcls;

    const int dk = shape_.dim / shape_.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& lp = layers_[li];
      const auto& lc = c.layers[li];
      // out = LN2(h1 + drop(f_out))
      const Matrix dr2 = detail::layer_norm_backward(dx, params_[lp.ln2_g], params_[lp.ln2_b], lc.ln2);
      Matrix dh1 = dr2;
      const Matrix df_out = detail::apply_mask(dr2, lc.mask2);
      G(lp.w2) += lc.f_act.transpose() * df_out;
      G(lp.b2) += df_out.colwise().sum();
      const Matrix dact = df_out * P(lp.w2).transpose();
      const Matrix dfpre =
          dact.cwiseProduct(lc.f_pre.unaryExpr([](double v) { return detail::gelu_grad(v); }));
      G(lp.w1) += lc.h1.transpose() * dfpre;
      G(lp.b1) += dfpre.colwise().sum();
      dh1 += dfpre * P(lp.w1).transpose();
      // h1 = LN1(x_in + drop(attn_out))
      const Matrix dr1 = detail::layer_norm_backward(dh1, params_[lp.ln1_g], params_[lp.ln1_b], lc.ln1);
      Matrix dx_in = dr1;
      const Matrix dattn_out = detail::apply_mask(dr1, lc.mask1);
      G(lp.wo) += lc.ctx.transpose() * dattn_out;
      G(lp.bo) += dattn_out.colwise().sum();
      const Matrix dctx = dattn_out * P(lp.wo).transpose();
      Matrix dq(L, shape_.dim), dk_m(L, shape_.dim), dv(L, shape_.dim);
      for (int h = 0; h < shape_.heads; ++h) {
        const Matrix& a = lc.attn[static_cast<std::size_t>(h)];
        const auto dctx_h = dctx.middleCols(h * dk, dk);
        const Matrix da = dctx_h * lc.v.middleCols(h * dk, dk).transpose();
        dv.middleCols(h * dk, dk) = a.transpose() * dctx_h;
        const Eigen::VectorXd row_dot = (da.array() * a.array()).rowwise().sum();
        const Matrix ds = (a.array() * (da.array().colwise() - row_dot.array())).matrix() * scale;
        dq.middleCols(h * dk, dk) = ds * lc.k.middleCols(h * dk, dk);
        dk_m.middleCols(h * dk, dk) = ds.transpose() * lc.q.middleCols(h * dk, dk);
      }
      G(lp.wq) += lc.x_in.transpose() * dq;
      G(lp.bq) += dq.colwise().sum();
      G(lp.wk) += lc.x_in.transpose() * dk_m;
      G(lp.bk) += dk_m.colwise().sum();
      G(lp.wv) += lc.x_in.transpose() * dv;
      G(lp.bv) += dv.colwise().sum();
      dx_in += dq * P(lp.wq).transpose() + dk_m * P(lp.wk).transpose() + dv * P(lp.wv).transpose();
      dx = std::move(dx_in);
    }

    dx = detail::apply_mask(dx, c.mask_emb);
    const Matrix de = detail::layer_norm_backward(dx, params_[ln_emb_g_], params_[ln_emb_b_], c.ln_emb);
    for (Eigen::Index i = 0; i < L; ++i) {
      G(word_).row(c.ids[static_cast<std::size_t>(i)]) += de.row(i);
      G(pos_).row(i) += de.row(i);
      G(seg_).row(c.segments[static_cast<std::size_t>(i)]) += de.row(i);
    }
  }

  void save(const std::filesystem::path& path) const {
    std::string blob = "FINREXW1";
    auto put = [&](const void* data, std::size_t n) {
      blob.append(static_cast<const char*>(data), n);
    };
    const std::uint64_t count = params_.size();
    put(&count, sizeof count);
    for (const auto& p : params_) {
      const std::uint64_t name_len = p.name.size();
      const std::int64_t rows = p.value.rows(), cols = p.value.cols();
      put(&name_len, sizeof name_len);
      put(p.name.data(), p.name.size());
      put(&rows, sizeof rows);
      put(&cols, sizeof cols);
      put(p.value.data(), sizeof(double) * static_cast<std::size_t>(rows * cols));
    }
    write_file(path, blob);
  }

  // Loads weights saved from a model of the same shape.
  void load(const std::filesystem::path& path) {
    const std::string blob = read_file(path);
    std::size_t off = 0;
    auto get = [&](void* data, std::size_t n) {
      if (off + n > blob.size()) throw Error("truncated weights file " + path.string());
      std::memcpy(data, blob.data() + off, n);
      off += n;
    };
    char magic[8];
    get(magic, 8);
    if (std::string(magic, 8) != "FINREXW1") throw Error("not a weights file: " + path.string());
    std::uint64_t count = 0;
    get(&count, sizeof count);
    if (count != params_.size()) throw Error("weights file parameter count mismatch");
    for (auto& p : params_) {
      std::uint64_t name_len = 0;
      get(&name_len, sizeof name_len);
      std::string name(name_len, '\0');
      get(name.data(), name_len);
      std::int64_t rows = 0, cols = 0;
      get(&rows, sizeof rows);
      get(&cols, sizeof cols);
      if (name != p.name || rows != p.value.rows() || cols != p.value.cols())
        throw Error("weights file layout mismatch at parameter " + p.name);
      get(p.value.data(), sizeof(double) * static_cast<std::size_t>(rows * cols));
    }
  }

 private:
  std::size_t add(std::string name, Matrix init, bool decay) {
    params_.emplace_back(std::move(name), std::move(init), decay);
    return params_.size() - 1;
  }
  const Matrix& P(std::size_t i) const { return params_[i].value; }
  Matrix& G(std::size_t i) { return params_[i].grad; }

  Matrix affine(const Matrix& x, std::size_t w, std::size_t b) const {
    Matrix y = x * P(w);
    y.rowwise() += P(b).row(0);
    return y;
  }

  EncoderShape shape_;
  std::vector<Param> params_;
  std::vector<LayerParams> layers_;
  std::size_t word_ = 0, pos_ = 0, seg_ = 0, ln_emb_g_ = 0, ln_emb_b_ = 0;
  std::size_t head_dense_w_ = 0, head_dense_b_ = 0, head_out_w_ = 0, head_out_b_ = 0;
};

// Mean softmax cross-entropy over a batch, with gradients accumulated into
// the model. Returns the mean loss.
inline double cross_entropy_step(TinyEncoder& model,
                                 const std::vector<std::pair<std::vector<int>, std::vector<int>>>& inputs,
                                 const std::vector<int>& labels, Rng* dropout_rng,
                                 bool accumulate_grad = true) {
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  TinyEncoder::ForwardCache cache;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const RowVector logits = model.forward(inputs[i].first, inputs[i].second, cache, dropout_rng);
    const RowVector p = softmax(logits);
    loss -= std::log(std::max(p(labels[i]), 1e-300)) * inv_n;
    if (!std::isfinite(logits.sum())) loss = std::numeric_limits<double>::quiet_NaN();
    if (accumulate_grad) {
      RowVector dlogits = p;
      dlogits(labels[i]) -= 1.0;
      model.backward(cache, dlogits * inv_n);
    }
  }
  return loss;
}

struct AdamWSettings {
  double learning_rate = 2e-5;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Decoupled weight decay, applied only to parameters flagged for decay
// (biases and LayerNorm parameters are exempt).
class AdamW {
 public:
  explicit AdamW(AdamWSettings s) : s_(s) {}

  void step(std::vector<Param>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    for (auto& p : params) {
      p.m = s_.beta1 * p.m + (1.0 - s_.beta1) * p.grad;
      p.v = s_.beta2 * p.v + (1.0 - s_.beta2) * p.grad.cwiseProduct(p.grad);
      if (p.decay) p.value -= s_.learning_rate * s_.weight_decay * p.value;
      p.value.array() -= s_.learning_rate * (p.m.array() / bc1) /
                         ((p.v.array() / bc2).sqrt() + s_.eps);
    }
  }

  long steps() const { return t_; }

 private:
  AdamWSettings s_;
  long t_ = 0;
};

}  // namespace finrex
