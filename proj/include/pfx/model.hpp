#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "pfx/common.hpp"
#include "pfx/vocab.hpp"

namespace pfx {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ModelConfig {
  int32_t vocab_size = 0;
  int32_t d_model = 64;
  int32_t num_layers = 2;
  int32_t num_heads = 4;
  int32_t num_labels = 2;
  int32_t max_len = 64;

  int32_t d_ff() const { return 4 * d_model; }
  int32_t head_dim() const { return d_model / num_heads; }

  void validate() const {
    require(vocab_size >= 16, Errc::config, "vocab_size must be >= 16");
    require(d_model > 0 && num_layers > 0 && num_heads > 0, Errc::config, "model dims must be positive");
    require(d_model % num_heads == 0, Errc::config, "d_model must be divisible by num_heads");
    require(num_labels >= 2, Errc::config, "need at least two labels");
    require(max_len >= 2, Errc::config, "max_len must be >= 2");
  }

  bool operator==(const ModelConfig& o) const {
    return vocab_size == o.vocab_size && d_model == o.d_model && num_layers == o.num_layers &&
           num_heads == o.num_heads && num_labels == o.num_labels && max_len == o.max_len;
  }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <class Real>
struct Block {
  std::vector<Real> ln1_g, ln1_b, ln2_g, ln2_b;
  Mat<Real> wq, wk, wv, wo;               // [d, d], y = W x
  std::vector<Real> bq, bk, bv, bo;
  Mat<Real> w1;                           // [d_ff, d]
  std::vector<Real> b1;
  Mat<Real> w2;                           // [d, d_ff]
  std::vector<Real> b2;
};

// A text classifier: token + position embeddings, pre-norm transformer
// blocks, a final layer norm, and a linear head read off the CLS position.
// The encoder up to the CLS feature is phi, the head is g.
template <class Real>
struct Classifier {
  ModelConfig cfg;
  Mat<Real> tok_emb;   // [V, d]
  Mat<Real> pos_emb;   // [max_len, d]
  std::vector<Block<Real>> blocks;
  std::vector<Real> lnf_g, lnf_b;
  Mat<Real> head_w;    // [num_labels, d]
  std::vector<Real> head_b;

  void allocate(const ModelConfig& c) {
    c.validate();
    cfg = c;
    const int32_t d = c.d_model, f = c.d_ff();
    tok_emb.resize(c.vocab_size, d);
    pos_emb.resize(c.max_len, d);
    blocks.assign(static_cast<size_t>(c.num_layers), Block<Real>{});
    for (auto& b : blocks) {
      b.ln1_g.assign(d, Real(0));
      b.ln1_b.assign(d, Real(0));
      b.ln2_g.assign(d, Real(0));
      b.ln2_b.assign(d, Real(0));
      b.wq.resize(d, d);
      b.wk.resize(d, d);
      b.wv.resize(d, d);
      b.wo.resize(d, d);
      b.bq.assign(d, Real(0));
      b.bk.assign(d, Real(0));
      b.bv.assign(d, Real(0));
      b.bo.assign(d, Real(0));
      b.w1.resize(f, d);
      b.b1.assign(f, Real(0));
      b.w2.resize(d, f);
      b.b2.assign(d, Real(0));
    }
    lnf_g.assign(d, Real(0));
    lnf_b.assign(d, Real(0));
    head_w.resize(c.num_labels, d);
    head_b.assign(c.num_labels, Real(0));
  }

  void zero() {
    auto refs = tensor_refs(*this);
    for (auto& r : refs) std::fill(r.data, r.data + r.size, Real(0));
  }
};

// Flat view of every parameter tensor, in the fixed order that defines the
// checkpoint layout and the serialized digest.
template <class Real>
struct TensorRef {
  std::string name;
  Real* data;
  size_t size;
  std::vector<uint32_t> dims;
};

template <class Real>
std::vector<TensorRef<Real>> tensor_refs(Classifier<Real>& m) {
  std::vector<TensorRef<Real>> out;
  auto add_mat = [&out](const std::string& name, Mat<Real>& t) {
    out.push_back({name, t.data.data(), t.data.size(),
                   {static_cast<uint32_t>(t.rows), static_cast<uint32_t>(t.cols)}});
  };
  auto add_vec = [&out](const std::string& name, std::vector<Real>& v) {
    out.push_back({name, v.data(), v.size(), {static_cast<uint32_t>(v.size())}});
  };
  add_mat("embed/tokens", m.tok_emb);
  add_mat("embed/pos", m.pos_emb);
  for (size_t l = 0; l < m.blocks.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + "/";
    Block<Real>& b = m.blocks[l];
    add_vec(p + "ln1/gamma", b.ln1_g);
    add_vec(p + "ln1/beta", b.ln1_b);
    add_mat(p + "attn/wq", b.wq);
    add_vec(p + "attn/bq", b.bq);
    add_mat(p + "attn/wk", b.wk);
    add_vec(p + "attn/bk", b.bk);
    add_mat(p + "attn/wv", b.wv);
    add_vec(p + "attn/bv", b.bv);
    add_mat(p + "attn/wo", b.wo);
    add_vec(p + "attn/bo", b.bo);
    add_vec(p + "ln2/gamma", b.ln2_g);
    add_vec(p + "ln2/beta", b.ln2_b);
    add_mat(p + "ffn/w1", b.w1);
    add_vec(p + "ffn/b1", b.b1);
    add_mat(p + "ffn/w2", b.w2);
    add_vec(p + "ffn/b2", b.b2);
  }
  add_vec("final_ln/gamma", m.lnf_g);
  add_vec("final_ln/beta", m.lnf_b);
  add_mat("head/w", m.head_w);
  add_vec("head/b", m.head_b);
  return out;
}

template <class Real>
Classifier<Real> init_classifier(const ModelConfig& cfg, uint64_t seed) {
  Classifier<Real> m;
  m.allocate(cfg);
  Rng rng(derive_seed(seed, "init"));
  const Real std_dev = Real(0.02);
  auto fill_normal = [&](Real* p, size_t n) {
    for (size_t i = 0; i < n; ++i) p[i] = std_dev * Real(rng.normal());
  };
  auto fill_ones = [](std::vector<Real>& v) { std::fill(v.begin(), v.end(), Real(1)); };

  fill_normal(m.tok_emb.data.data(), m.tok_emb.size());
  fill_normal(m.pos_emb.data.data(), m.pos_emb.size());
  for (auto& b : m.blocks) {
    fill_ones(b.ln1_g);
    fill_ones(b.ln2_g);
    fill_normal(b.wq.data.data(), b.wq.size());
    fill_normal(b.wk.data.data(), b.wk.size());
    fill_normal(b.wv.data.data(), b.wv.size());
    fill_normal(b.wo.data.data(), b.wo.size());
    fill_normal(b.w1.data.data(), b.w1.size());
    fill_normal(b.w2.data.data(), b.w2.size());
  }
  fill_ones(m.lnf_g);
  fill_normal(m.head_w.data.data(), m.head_w.size());
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace detail {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <class Real>
inline Real gelu(Real x) {
  const Real inner = Real(kGeluC) * (x + Real(kGeluA) * x * x * x);
  return Real(0.5) * x * (Real(1) + std::tanh(inner));
}

template <class Real>
inline Real gelu_grad(Real x) {
  const Real inner = Real(kGeluC) * (x + Real(kGeluA) * x * x * x);
  const Real t = std::tanh(inner);
  const Real dinner = Real(kGeluC) * (Real(1) + Real(3) * Real(kGeluA) * x * x);
  return Real(0.5) * (Real(1) + t) + Real(0.5) * x * (Real(1) - t * t) * dinner;
}

// y = W x + b, W is [out, in] row-major.
template <class Real>
inline void linear_fwd(const Mat<Real>& w, const std::vector<Real>& b, const Real* x, Real* y) {
  const int32_t out = w.rows, in = w.cols;
  for (int32_t o = 0; o < out; ++o) {
    const Real* wr = w.row(o);
    Real s = b[static_cast<size_t>(o)];
    for (int32_t i = 0; i < in; ++i) s += wr[i] * x[i];
    y[o] = s;
  }
}

// Accumulates dx; optionally accumulates dw/db.
template <class Real>
inline void linear_bwd(const Mat<Real>& w, const Real* x, const Real* dy, Real* dx,
                       Mat<Real>* dw, std::vector<Real>* db) {
  const int32_t out = w.rows, in = w.cols;
  for (int32_t o = 0; o < out; ++o) {
    const Real g = dy[o];
    if (g == Real(0)) continue;
    const Real* wr = w.row(o);
    for (int32_t i = 0; i < in; ++i) dx[i] += wr[i] * g;
    if (dw) {
      Real* dwr = dw->row(o);
      for (int32_t i = 0; i < in; ++i) dwr[i] += x[i] * g;
    }
    if (db) (*db)[static_cast<size_t>(o)] += g;
  }
}

template <class Real>
inline void layer_norm_fwd(const Real* x, const std::vector<Real>& g, const std::vector<Real>& b,
                           int32_t d, Real* out, Real* mean, Real* rstd) {
  Real mu = Real(0);
  for (int32_t i = 0; i < d; ++i) mu += x[i];
  mu /= Real(d);
  Real var = Real(0);
  for (int32_t i = 0; i < d; ++i) {
    const Real c = x[i] - mu;
    var += c * c;
  }
  var /= Real(d);
  const Real rs = Real(1) / std::sqrt(var + Real(kLnEps));
  for (int32_t i = 0; i < d; ++i) {
    out[i] = g[static_cast<size_t>(i)] * ((x[i] - mu) * rs) + b[static_cast<size_t>(i)];
  }
  *mean = mu;
  *rstd = rs;
}

// Accumulates dx (+=); optionally accumulates dgamma/dbeta.
template <class Real>
inline void layer_norm_bwd(const Real* dout, const Real* x, const std::vector<Real>& g, Real mean,
                           Real rstd, int32_t d, Real* dx, std::vector<Real>* dg,
                           std::vector<Real>* db) {
  Real sum_dxhat = Real(0), sum_dxhat_xhat = Real(0);
  for (int32_t i = 0; i < d; ++i) {
    const Real xhat = (x[i] - mean) * rstd;
    const Real dxhat = dout[i] * g[static_cast<size_t>(i)];
    sum_dxhat += dxhat;
    sum_dxhat_xhat += dxhat * xhat;
    if (dg) (*dg)[static_cast<size_t>(i)] += dout[i] * xhat;
    if (db) (*db)[static_cast<size_t>(i)] += dout[i];
  }
  const Real inv_d = Real(1) / Real(d);
  for (int32_t i = 0; i < d; ++i) {
    const Real xhat = (x[i] - mean) * rstd;
    const Real dxhat = dout[i] * g[static_cast<size_t>(i)];
    dx[i] += rstd * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
  }
}

template <class Real>
inline void softmax_inplace(Real* x, int32_t n) {
  Real mx = x[0];
  for (int32_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  Real z = Real(0);
  for (int32_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - mx);
    z += x[i];
  }
  const Real inv = Real(1) / z;
  for (int32_t i = 0; i < n; ++i) x[i] *= inv;
}

}  // namespace detail

template <class Real>
struct LayerCache {
  Mat<Real> x_in;       // [L, d] block input
  Mat<Real> ln1_out;    // [L, d]
  std::vector<Real> ln1_mean, ln1_rstd;
  Mat<Real> q, k, v;    // [L, d]
  std::vector<Real> att;  // [H, L, L] attention weights
  Mat<Real> ctx;        // [L, d] concatenated head outputs
  Mat<Real> x_attn;     // [L, d] after attention residual
  Mat<Real> ln2_out;    // [L, d]
  std::vector<Real> ln2_mean, ln2_rstd;
  Mat<Real> h_pre;      // [L, d_ff] pre-activation
  Mat<Real> h_act;      // [L, d_ff]
  Mat<Real> x_out;      // [L, d]
};

template <class Real>
struct ForwardCache {
  int32_t len = 0;          // total positions
  int32_t prefix_rows = 0;  // injected soft rows (positions 1..prefix_rows)
  TokenSeq ids;             // token ids (CLS + body)
  Mat<Real> x0;             // [L, d] embeddings + positions
  std::vector<LayerCache<Real>> layers;
  std::vector<Real> feature;  // [d] final-norm output at CLS
  Real lnf_mean = Real(0), lnf_rstd = Real(0);
  std::vector<Real> logits;   // [num_labels]
};

// Runs the encoder and head over [CLS] + prefix rows + body tokens. The
// prefix occupies positions 1..k so the CLS read-out stays at position 0,
// and positional encodings are assigned over the concatenated sequence.
template <class Real>
void forward_embeddings(const Classifier<Real>& m, const Mat<Real>& prefix, const TokenSeq& seq,
                        ForwardCache<Real>& c) {
  const ModelConfig& cfg = m.cfg;
  const int32_t d = cfg.d_model, f = cfg.d_ff();
  const int32_t heads = cfg.num_heads, hd = cfg.head_dim();
  const int32_t k = prefix.rows;
  require(seq.size() >= 1, Errc::shape, "sequence must contain CLS");
  if (k > 0) {
    require(prefix.cols == d, Errc::shape, "prefix width does not match d_model");
  }
  const int32_t L = static_cast<int32_t>(seq.size()) + k;
  require(L <= cfg.max_len, Errc::length, "prefix + sequence exceeds max_len");
  for (int32_t id : seq) {
    require(id >= 0 && id < cfg.vocab_size, Errc::shape, "token id out of vocabulary range");
  }

  c.len = L;
  c.prefix_rows = k;
  c.ids = seq;
  c.x0.resize(L, d);
  c.layers.resize(static_cast<size_t>(cfg.num_layers));
  c.feature.assign(static_cast<size_t>(d), Real(0));
  c.logits.assign(static_cast<size_t>(cfg.num_labels), Real(0));

  // position p: p==0 -> CLS token, 1..k -> prefix rows, k+1.. -> body tokens
  for (int32_t p = 0; p < L; ++p) {
    const Real* src;
    if (p == 0) {
      src = m.tok_emb.row(seq[0]);
    } else if (p <= k) {
      src = prefix.row(p - 1);
    } else {
      src = m.tok_emb.row(seq[static_cast<size_t>(p - k)]);
    }
    const Real* pos = m.pos_emb.row(p);
    Real* dst = c.x0.row(p);
    for (int32_t i = 0; i < d; ++i) dst[i] = src[i] + pos[i];
  }

  const Real scale = Real(1) / std::sqrt(Real(hd));
  const Mat<Real>* x_cur = &c.x0;
  for (int32_t l = 0; l < cfg.num_layers; ++l) {
    LayerCache<Real>& lc = c.layers[static_cast<size_t>(l)];
    const Block<Real>& b = m.blocks[static_cast<size_t>(l)];
    lc.x_in = *x_cur;
    lc.ln1_out.resize(L, d);
    lc.ln1_mean.assign(static_cast<size_t>(L), Real(0));
    lc.ln1_rstd.assign(static_cast<size_t>(L), Real(0));
    lc.q.resize(L, d);
    lc.k.resize(L, d);
    lc.v.resize(L, d);
    lc.att.assign(static_cast<size_t>(heads) * L * L, Real(0));
    lc.ctx.resize(L, d);
    lc.x_attn.resize(L, d);
    lc.ln2_out.resize(L, d);
    lc.ln2_mean.assign(static_cast<size_t>(L), Real(0));
    lc.ln2_rstd.assign(static_cast<size_t>(L), Real(0));
    lc.h_pre.resize(L, f);
    lc.h_act.resize(L, f);
    lc.x_out.resize(L, d);

    for (int32_t p = 0; p < L; ++p) {
      detail::layer_norm_fwd(lc.x_in.row(p), b.ln1_g, b.ln1_b, d, lc.ln1_out.row(p),
                             &lc.ln1_mean[static_cast<size_t>(p)], &lc.ln1_rstd[static_cast<size_t>(p)]);
      detail::linear_fwd(b.wq, b.bq, lc.ln1_out.row(p), lc.q.row(p));
      detail::linear_fwd(b.wk, b.bk, lc.ln1_out.row(p), lc.k.row(p));
      detail::linear_fwd(b.wv, b.bv, lc.ln1_out.row(p), lc.v.row(p));
    }

    // full bidirectional attention per head
    for (int32_t h = 0; h < heads; ++h) {
      const int32_t off = h * hd;
      for (int32_t i = 0; i < L; ++i) {
        Real* arow = lc.att.data() + (static_cast<size_t>(h) * L + i) * L;
        const Real* qi = lc.q.row(i) + off;
        for (int32_t j = 0; j < L; ++j) {
          const Real* kj = lc.k.row(j) + off;
          Real s = Real(0);
          for (int32_t t = 0; t < hd; ++t) s += qi[t] * kj[t];
          arow[j] = s * scale;
        }
        detail::softmax_inplace(arow, L);
        Real* out = lc.ctx.row(i) + off;
        for (int32_t t = 0; t < hd; ++t) out[t] = Real(0);
        for (int32_t j = 0; j < L; ++j) {
          const Real a = arow[j];
          const Real* vj = lc.v.row(j) + off;
          for (int32_t t = 0; t < hd; ++t) out[t] += a * vj[t];
        }
      }
    }

    for (int32_t p = 0; p < L; ++p) {
      Real* xa = lc.x_attn.row(p);
      detail::linear_fwd(b.wo, b.bo, lc.ctx.row(p), xa);
      const Real* xin = lc.x_in.row(p);
      for (int32_t i = 0; i < d; ++i) xa[i] += xin[i];

      detail::layer_norm_fwd(xa, b.ln2_g, b.ln2_b, d, lc.ln2_out.row(p),
                             &lc.ln2_mean[static_cast<size_t>(p)], &lc.ln2_rstd[static_cast<size_t>(p)]);
      detail::linear_fwd(b.w1, b.b1, lc.ln2_out.row(p), lc.h_pre.row(p));
      Real* ha = lc.h_act.row(p);
      const Real* hp = lc.h_pre.row(p);
      for (int32_t i = 0; i < f; ++i) ha[i] = detail::gelu(hp[i]);
      Real* xo = lc.x_out.row(p);
      detail::linear_fwd(b.w2, b.b2, ha, xo);
      for (int32_t i = 0; i < d; ++i) xo[i] += xa[i];
    }
    x_cur = &lc.x_out;
  }

  // final norm + head only read the CLS position
  detail::layer_norm_fwd(x_cur->row(0), m.lnf_g, m.lnf_b, d, c.feature.data(), &c.lnf_mean,
                         &c.lnf_rstd);
  detail::linear_fwd(m.head_w, m.head_b, c.feature.data(), c.logits.data());
}

template <class Real>
void forward_tokens(const Classifier<Real>& m, const TokenSeq& seq, ForwardCache<Real>& c) {
  static const Mat<Real> empty;
  forward_embeddings(m, empty, seq, c);
}

// Backward pass from d(loss)/d(logits) and/or d(loss)/d(feature at CLS).
// Accumulates into param_grads (same layout as the model; may be null when
// only input gradients are wanted) and into dprefix rows (may be null).
template <class Real>
void backward(const Classifier<Real>& m, const ForwardCache<Real>& c, const Real* dlogits,
              const Real* dfeature, Classifier<Real>* param_grads, Mat<Real>* dprefix) {
  const ModelConfig& cfg = m.cfg;
  const int32_t d = cfg.d_model, f = cfg.d_ff();
  const int32_t heads = cfg.num_heads, hd = cfg.head_dim();
  const int32_t L = c.len, k = c.prefix_rows;
  if (dprefix && k > 0) {
    require(dprefix->rows == k && dprefix->cols == d, Errc::shape, "dprefix shape mismatch");
  }

  std::vector<Real> dfeat(static_cast<size_t>(d), Real(0));
  if (dlogits) {
    for (int32_t o = 0; o < cfg.num_labels; ++o) {
      const Real g = dlogits[o];
      if (g == Real(0)) continue;
      const Real* wr = m.head_w.row(o);
      for (int32_t i = 0; i < d; ++i) dfeat[static_cast<size_t>(i)] += wr[i] * g;
      if (param_grads) {
        Real* dwr = param_grads->head_w.row(o);
        for (int32_t i = 0; i < d; ++i) dwr[i] += c.feature[static_cast<size_t>(i)] * g;
        param_grads->head_b[static_cast<size_t>(o)] += g;
      }
    }
  }
  if (dfeature) {
    for (int32_t i = 0; i < d; ++i) dfeat[static_cast<size_t>(i)] += dfeature[i];
  }

  // dX flowing between blocks
  Mat<Real> dx(L, d);
  const Mat<Real>& x_last = cfg.num_layers > 0 ? c.layers.back().x_out : c.x0;
  detail::layer_norm_bwd(dfeat.data(), x_last.row(0), m.lnf_g, c.lnf_mean, c.lnf_rstd, d, dx.row(0),
                         param_grads ? &param_grads->lnf_g : nullptr,
                         param_grads ? &param_grads->lnf_b : nullptr);

  const Real scale = Real(1) / std::sqrt(Real(hd));
  std::vector<Real> dctx(static_cast<size_t>(L) * d);
  std::vector<Real> dln2(static_cast<size_t>(d));
  std::vector<Real> dh(static_cast<size_t>(f));
  std::vector<Real> dq(static_cast<size_t>(L) * d), dk(static_cast<size_t>(L) * d),
      dv(static_cast<size_t>(L) * d), dln1(static_cast<size_t>(L) * d);

  for (int32_t l = cfg.num_layers - 1; l >= 0; --l) {
    const LayerCache<Real>& lc = c.layers[static_cast<size_t>(l)];
    const Block<Real>& b = m.blocks[static_cast<size_t>(l)];
    Block<Real>* gb = param_grads ? &param_grads->blocks[static_cast<size_t>(l)] : nullptr;

    // FFN sub-block: x_out = x_attn + W2 gelu(W1 ln2(x_attn) + b1) + b2
    for (int32_t p = 0; p < L; ++p) {
      const Real* dxo = dx.row(p);
      std::fill(dln2.begin(), dln2.end(), Real(0));
      const Real* hp = lc.h_pre.row(p);
      // back through w2
      for (int32_t i = 0; i < f; ++i) dh[static_cast<size_t>(i)] = Real(0);
      detail::linear_bwd(b.w2, lc.h_act.row(p), dxo, dh.data(), gb ? &gb->w2 : nullptr,
                         gb ? &gb->b2 : nullptr);
      for (int32_t i = 0; i < f; ++i) dh[static_cast<size_t>(i)] *= detail::gelu_grad(hp[i]);
      detail::linear_bwd(b.w1, lc.ln2_out.row(p), dh.data(), dln2.data(), gb ? &gb->w1 : nullptr,
                         gb ? &gb->b1 : nullptr);
      // residual: dx_attn = dx_out + ln2 backward contribution
      detail::layer_norm_bwd(dln2.data(), lc.x_attn.row(p), b.ln2_g,
                             lc.ln2_mean[static_cast<size_t>(p)], lc.ln2_rstd[static_cast<size_t>(p)],
                             d, dx.row(p), gb ? &gb->ln2_g : nullptr, gb ? &gb->ln2_b : nullptr);
      // dx.row(p) now holds d(x_attn) = d(x_out) + d(through ln2 path)
    }

    // Attention sub-block: x_attn = x_in + Wo ctx + bo
    std::fill(dctx.begin(), dctx.end(), Real(0));
    for (int32_t p = 0; p < L; ++p) {
      detail::linear_bwd(b.wo, lc.ctx.row(p), dx.row(p), dctx.data() + static_cast<size_t>(p) * d,
                         gb ? &gb->wo : nullptr, gb ? &gb->bo : nullptr);
    }

    std::fill(dq.begin(), dq.end(), Real(0));
    std::fill(dk.begin(), dk.end(), Real(0));
    std::fill(dv.begin(), dv.end(), Real(0));
    std::vector<Real> da(static_cast<size_t>(L));
    for (int32_t h = 0; h < heads; ++h) {
      const int32_t off = h * hd;
      for (int32_t i = 0; i < L; ++i) {
        const Real* arow = lc.att.data() + (static_cast<size_t>(h) * L + i) * L;
        const Real* dctx_i = dctx.data() + static_cast<size_t>(i) * d + off;
        // d(att) and dV
        Real dot = Real(0);
        for (int32_t j = 0; j < L; ++j) {
          const Real* vj = lc.v.row(j) + off;
          Real s = Real(0);
          for (int32_t t = 0; t < hd; ++t) s += dctx_i[t] * vj[t];
          da[static_cast<size_t>(j)] = s;
          Real* dvj = dv.data() + static_cast<size_t>(j) * d + off;
          const Real a = arow[j];
          for (int32_t t = 0; t < hd; ++t) dvj[t] += a * dctx_i[t];
          dot += arow[j] * s;
        }
        // softmax backward, then scores -> q, k
        const Real* qi = lc.q.row(i) + off;
        Real* dqi = dq.data() + static_cast<size_t>(i) * d + off;
        for (int32_t j = 0; j < L; ++j) {
          const Real ds = arow[j] * (da[static_cast<size_t>(j)] - dot) * scale;
          if (ds == Real(0)) continue;
          const Real* kj = lc.k.row(j) + off;
          Real* dkj = dk.data() + static_cast<size_t>(j) * d + off;
          for (int32_t t = 0; t < hd; ++t) {
            dqi[t] += ds * kj[t];
            dkj[t] += ds * qi[t];
          }
        }
      }
    }

    // q/k/v projections and first layer norm; residual adds dx_in
    std::fill(dln1.begin(), dln1.end(), Real(0));
    for (int32_t p = 0; p < L; ++p) {
      Real* dl = dln1.data() + static_cast<size_t>(p) * d;
      detail::linear_bwd(b.wq, lc.ln1_out.row(p), dq.data() + static_cast<size_t>(p) * d, dl,
                         gb ? &gb->wq : nullptr, gb ? &gb->bq : nullptr);
      detail::linear_bwd(b.wk, lc.ln1_out.row(p), dk.data() + static_cast<size_t>(p) * d, dl,
                         gb ? &gb->wk : nullptr, gb ? &gb->bk : nullptr);
      detail::linear_bwd(b.wv, lc.ln1_out.row(p), dv.data() + static_cast<size_t>(p) * d, dl,
                         gb ? &gb->wv : nullptr, gb ? &gb->bv : nullptr);
      detail::layer_norm_bwd(dl, lc.x_in.row(p), b.ln1_g, lc.ln1_mean[static_cast<size_t>(p)],
                             lc.ln1_rstd[static_cast<size_t>(p)], d, dx.row(p),
                             gb ? &gb->ln1_g : nullptr, gb ? &gb->ln1_b : nullptr);
      // dx.row(p) now holds d(x_in) for this block
    }
  }

  // input embeddings: CLS + prefix rows + body tokens
  for (int32_t p = 0; p < L; ++p) {
    const Real* g = dx.row(p);
    if (param_grads) {
      Real* dpos = param_grads->pos_emb.row(p);
      for (int32_t i = 0; i < d; ++i) dpos[i] += g[i];
    }
    if (p == 0) {
      if (param_grads) {
        Real* dtok = param_grads->tok_emb.row(c.ids[0]);
        for (int32_t i = 0; i < d; ++i) dtok[i] += g[i];
      }
    } else if (p <= k) {
      if (dprefix) {
        Real* dp = dprefix->row(p - 1);
        for (int32_t i = 0; i < d; ++i) dp[i] += g[i];
      }
    } else {
      if (param_grads) {
        Real* dtok = param_grads->tok_emb.row(c.ids[static_cast<size_t>(p - k)]);
        for (int32_t i = 0; i < d; ++i) dtok[i] += g[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Loss helpers
// ---------------------------------------------------------------------------

// Cross entropy of logits against label; fills dlogits = softmax - onehot.
template <class Real>
Real cross_entropy(const std::vector<Real>& logits, int32_t label, std::vector<Real>* dlogits) {
  const int32_t n = static_cast<int32_t>(logits.size());
  require(label >= 0 && label < n, Errc::shape, "label out of range");
  Real mx = logits[0];
  for (int32_t i = 1; i < n; ++i) mx = std::max(mx, logits[static_cast<size_t>(i)]);
  Real z = Real(0);
  std::vector<Real> p(static_cast<size_t>(n));
  for (int32_t i = 0; i < n; ++i) {
    p[static_cast<size_t>(i)] = std::exp(logits[static_cast<size_t>(i)] - mx);
    z += p[static_cast<size_t>(i)];
  }
  const Real loss = -(logits[static_cast<size_t>(label)] - mx - std::log(z));
  if (dlogits) {
    dlogits->assign(static_cast<size_t>(n), Real(0));
    for (int32_t i = 0; i < n; ++i) (*dlogits)[static_cast<size_t>(i)] = p[static_cast<size_t>(i)] / z;
    (*dlogits)[static_cast<size_t>(label)] -= Real(1);
  }
  return loss;
}

template <class Real>
int32_t argmax_label(const std::vector<Real>& logits) {
  int32_t best = 0;
  for (int32_t i = 1; i < static_cast<int32_t>(logits.size()); ++i) {
    if (logits[static_cast<size_t>(i)] > logits[static_cast<size_t>(best)]) best = i;
  }
  return best;
}

// Convenience read-only handle: the victim itself (prefix == nullptr) or the
// prompt-fixed forward f(prefix + x).
template <class Real>
struct Predictor {
  const Classifier<Real>* model = nullptr;
  const Mat<Real>* prefix = nullptr;

  std::vector<Real> logits(const TokenSeq& seq) const {
    ForwardCache<Real> c;
    if (prefix && prefix->rows > 0) {
      forward_embeddings(*model, *prefix, seq, c);
    } else {
      forward_tokens(*model, seq, c);
    }
    return c.logits;
  }

  int32_t predict(const TokenSeq& seq) const { return argmax_label(logits(seq)); }
};

}  // namespace pfx
