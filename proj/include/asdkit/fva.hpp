#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "asdkit/align.hpp"
#include "asdkit/datamodel.hpp"
#include "asdkit/error.hpp"
#include "asdkit/parallel.hpp"
#include "asdkit/rng.hpp"

namespace asdkit {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

// Parameters of the face-voice scoring head: two modality projections onto a
// shared dimension d, one pre-norm self-attention encoder layer used to
// aggregate each identity's frame sequence, and the cross-attention
// projections that score utterance-identity matches at temperature 1/sqrt(d).
//
// Key projections carry no bias: a key bias shifts every logit in a softmax
// row by the same amount and can never influence the output.
struct HeadParams {
  int d_s = 0;
  int d_f = 0;
  int d = 0;
  int heads = 0;
  double ln_eps = 1e-5;

  MatrixXd audio_w, audio_b;               // d_s x d, 1 x d
  MatrixXd face_w, face_b;                 // d_f x d, 1 x d
  MatrixXd enc_wq, enc_wk, enc_wv, enc_wo; // d x d, per-head column blocks
  MatrixXd enc_bq, enc_bv, enc_bo;         // 1 x d
  MatrixXd ln1_g, ln1_b, ln2_g, ln2_b;     // 1 x d
  MatrixXd ffn_w1, ffn_b1, ffn_w2, ffn_b2; // d x 4d, 1 x 4d, 4d x d, 1 x d
  MatrixXd xattn_wq, xattn_bq, xattn_wk;   // d x d, 1 x d, d x d

  std::vector<std::pair<std::string, MatrixXd*>> tensors() {
    return {{"audio_w", &audio_w},   {"audio_b", &audio_b}, {"face_w", &face_w},
            {"face_b", &face_b},     {"enc_wq", &enc_wq},   {"enc_wk", &enc_wk},
            {"enc_wv", &enc_wv},     {"enc_wo", &enc_wo},   {"enc_bq", &enc_bq},
            {"enc_bv", &enc_bv},     {"enc_bo", &enc_bo},   {"ln1_g", &ln1_g},
            {"ln1_b", &ln1_b},       {"ln2_g", &ln2_g},     {"ln2_b", &ln2_b},
            {"ffn_w1", &ffn_w1},     {"ffn_b1", &ffn_b1},   {"ffn_w2", &ffn_w2},
            {"ffn_b2", &ffn_b2},     {"xattn_wq", &xattn_wq}, {"xattn_bq", &xattn_bq},
            {"xattn_wk", &xattn_wk}};
  }

  std::vector<std::pair<std::string, const MatrixXd*>> tensors() const {
    auto mutable_list = const_cast<HeadParams*>(this)->tensors();
    std::vector<std::pair<std::string, const MatrixXd*>> out;
    out.reserve(mutable_list.size());
    for (auto& [name, ptr] : mutable_list) out.emplace_back(name, ptr);
    return out;
  }

  void check_shapes() const {
    if (d < 1 || heads < 1 || d % heads != 0)
      throw InvalidConfig("head count must divide the shared dimension d");
    if (d_s < 1 || d_f < 1) throw InvalidConfig("embedding dimensions must be >= 1");
  }
};

inline HeadParams zeros_like(const HeadParams& p) {
  HeadParams z = p;
  for (auto& [name, t] : z.tensors()) {
    (void)name;
    t->setZero();
  }
  return z;
}

// Xavier-style init, deterministic in the seed; layer norms start at
// identity, biases at zero.
inline std::pair<int, int> head_tensor_shape(int d_s, int d_f, int d, const std::string& name) {
  const int h = 4 * d;
  if (name == "audio_w") return {d_s, d};
  if (name == "face_w") return {d_f, d};
  if (name == "ffn_w1") return {d, h};
  if (name == "ffn_b1") return {1, h};
  if (name == "ffn_w2") return {h, d};
  if (name.rfind("enc_w", 0) == 0 || name.rfind("xattn_w", 0) == 0) return {d, d};
  return {1, d};
}

inline HeadParams init_head_params(int d_s, int d_f, int d, int heads, std::uint64_t seed) {
  HeadParams p;
  p.d_s = d_s;
  p.d_f = d_f;
  p.d = d;
  p.heads = heads;
  p.check_shapes();
  Rng rng = Rng::derive(seed, 0x48454144ULL);  // "HEAD"
  for (auto& [name, t] : p.tensors()) {
    const auto [rows, cols] = head_tensor_shape(d_s, d_f, d, name);
    t->resize(rows, cols);
    const bool is_weight = name.find("_w") != std::string::npos;
    if (is_weight) {
      const double scale = std::sqrt(2.0 / static_cast<double>(rows + cols));
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) (*t)(r, c) = scale * rng.normal();
    } else if (name == "ln1_g" || name == "ln2_g") {
      t->setOnes();
    } else {
      t->setZero();
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Batches

// One clip's scoring batch: utterance embeddings against every visible
// identity's frame matrix. Identities are kept sorted by person_id and frame
// rows in a value-canonical order, so results cannot depend on input order.
struct MatchBatch {
  std::string clip_id;
  std::vector<std::string> utt_ids;     // N_u
  MatrixXd audio;                       // N_u x d_s
  std::vector<std::string> person_ids;  // |S_c|, ascending
  std::vector<MatrixXd> video;          // per identity: T x d_f
};

namespace detail {

inline MatrixXd canonicalize_rows(MatrixXd x) {
  std::vector<int> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&x](int a, int b) {
    for (int c = 0; c < x.cols(); ++c) {
      if (x(a, c) != x(b, c)) return x(a, c) < x(b, c);
    }
    return false;
  });
  MatrixXd out(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) out.row(i) = x.row(order[static_cast<std::size_t>(i)]);
  return out;
}

inline MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  MatrixXd m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

}  // namespace detail

inline MatchBatch build_match_batch(const BundleIndex& index, const std::string& clip_id,
                                    const std::vector<const Utterance*>& utterances) {
  MatchBatch b;
  b.clip_id = clip_id;
  if (utterances.empty()) throw DimensionMismatch("batch for clip " + clip_id + " has no utterances");

  auto fit = index.face_embeddings_by_clip.find(clip_id);
  if (fit == index.face_embeddings_by_clip.end() || fit->second.empty())
    throw NoVisibleIdentity("clip " + clip_id + " has no visible identities with face embeddings");
  std::vector<const FaceEmbeddingTrack*> faces = fit->second;
  std::sort(faces.begin(), faces.end(),
            [](const FaceEmbeddingTrack* a, const FaceEmbeddingTrack* b) {
              return a->person_id < b->person_id;
            });
  for (const auto* f : faces) {
    b.person_ids.push_back(f->person_id);
    b.video.push_back(detail::to_matrix(f->frames));
  }

  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Utterance* u = utterances[i];
    auto eit = index.utt_embedding_by_id.find(u->utt_id);
    if (eit == index.utt_embedding_by_id.end())
      throw DanglingReference("utterance " + u->utt_id + " has no embedding");
    const auto& vec = eit->second->vector;
    if (i == 0) b.audio.resize(static_cast<int>(utterances.size()), static_cast<int>(vec.size()));
    if (static_cast<int>(vec.size()) != b.audio.cols())
      throw DimensionMismatch("utterance " + u->utt_id + " embedding dimension differs");
    for (int c = 0; c < b.audio.cols(); ++c) b.audio(static_cast<int>(i), c) = vec[static_cast<std::size_t>(c)];
    b.utt_ids.push_back(u->utt_id);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace detail {

struct LayerNormCache {
  MatrixXd xhat;
  Eigen::VectorXd rstd;
};

inline MatrixXd layer_norm(const MatrixXd& x, const MatrixXd& gamma, const MatrixXd& beta,
                           double eps, LayerNormCache* cache) {
  const int n = static_cast<int>(x.cols());
  MatrixXd out(x.rows(), x.cols());
  MatrixXd xhat(x.rows(), x.cols());
  Eigen::VectorXd rstd(x.rows());
  for (int i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().sum() / n;
    const double r = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = ((x.row(i).array() - mean) * r).matrix();
    out.row(i) = xhat.row(i).cwiseProduct(gamma.row(0)) + beta.row(0);
    rstd(i) = r;
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return out;
}

inline void layer_norm_backward(const MatrixXd& dy, const LayerNormCache& c, const MatrixXd& gamma,
                                MatrixXd& dgamma, MatrixXd& dbeta, MatrixXd& dx_accum) {
  const int n = static_cast<int>(dy.cols());
  for (int i = 0; i < dy.rows(); ++i) {
    dbeta.row(0) += dy.row(i);
    dgamma.row(0) += dy.row(i).cwiseProduct(c.xhat.row(i));
    const RowVectorXd dxhat = dy.row(i).cwiseProduct(gamma.row(0));
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(c.xhat.row(i)).mean();
    dx_accum.row(i) +=
        c.rstd(i) * (dxhat.array() - m1 - c.xhat.row(i).array() * m2).matrix();
  }
  (void)n;
}

// Row softmax. The normalizer sums the exponentials in ascending value
// order, which makes the result bitwise independent of column order (needed
// for exact permutation equivariance/invariance).
inline MatrixXd softmax_rows(const MatrixXd& s) {
  MatrixXd out(s.rows(), s.cols());
  std::vector<double> terms(static_cast<std::size_t>(s.cols()));
  for (int i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    out.row(i) = (s.row(i).array() - mx).exp().matrix();
    for (int c = 0; c < s.cols(); ++c) terms[static_cast<std::size_t>(c)] = out(i, c);
    std::sort(terms.begin(), terms.end());
    double denom = 0.0;
    for (double t : terms) denom += t;
    out.row(i) /= denom;
  }
  return out;
}

// d(softmax)/dlogits applied to upstream da, rowwise:
// ds = a .* (da - rowsum(a .* da)).
inline MatrixXd softmax_rows_backward(const MatrixXd& a, const MatrixXd& da) {
  MatrixXd ds(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const double dot = a.row(i).cwiseProduct(da.row(i)).sum();
    ds.row(i) = (a.row(i).array() * (da.row(i).array() - dot)).matrix();
  }
  return ds;
}

inline double gelu_scalar(double z) { return 0.5 * z * (1.0 + std::erf(z * M_SQRT1_2)); }

inline double gelu_grad_scalar(double z) {
  const double cdf = 0.5 * (1.0 + std::erf(z * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
  return cdf + z * pdf;
}

struct EncoderCache {
  MatrixXd x;   // raw frames, canonical order, T x d_f
  MatrixXd xp;  // projected frames, T x d
  LayerNormCache ln1;
  MatrixXd n1, q, k, v;
  std::vector<MatrixXd> attn;  // per head, T x T
  MatrixXd o, m, r1;
  LayerNormCache ln2;
  MatrixXd n2, z1, g;
  RowVectorXd agg;
};

// Quality-aware aggregation of one identity's frame matrix: pre-norm
// self-attention layer followed by mean pooling over frames. Frames are
// brought into a value-canonical order first; with no positional encodings
// the operator is frame-order-free, and the canonical order makes that hold
// bitwise.
inline RowVectorXd encode_identity(const HeadParams& p, const MatrixXd& x_raw,
                                   EncoderCache* cache) {
  if (x_raw.cols() != p.d_f)
    throw DimensionMismatch("face embedding dimension " + std::to_string(x_raw.cols()) +
                            " does not match head d_f " + std::to_string(p.d_f));
  const MatrixXd x = canonicalize_rows(x_raw);
  const int T = static_cast<int>(x.rows());
  const int dh = p.d / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  MatrixXd xp = (x * p.face_w).rowwise() + p.face_b.row(0);
  LayerNormCache ln1;
  MatrixXd n1 = layer_norm(xp, p.ln1_g, p.ln1_b, p.ln_eps, &ln1);
  MatrixXd q = (n1 * p.enc_wq).rowwise() + p.enc_bq.row(0);
  MatrixXd k = n1 * p.enc_wk;
  MatrixXd v = (n1 * p.enc_wv).rowwise() + p.enc_bv.row(0);

  MatrixXd o(T, p.d);
  std::vector<MatrixXd> attn(static_cast<std::size_t>(p.heads));
  for (int h = 0; h < p.heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = k.middleCols(h * dh, dh);
    const auto vh = v.middleCols(h * dh, dh);
    MatrixXd s = scale * (qh * kh.transpose());
    MatrixXd a = softmax_rows(s);
    o.middleCols(h * dh, dh) = a * vh;
    attn[static_cast<std::size_t>(h)] = std::move(a);
  }
  MatrixXd m = (o * p.enc_wo).rowwise() + p.enc_bo.row(0);
  MatrixXd r1 = xp + m;

  LayerNormCache ln2;
  MatrixXd n2 = layer_norm(r1, p.ln2_g, p.ln2_b, p.ln_eps, &ln2);
  MatrixXd z1 = (n2 * p.ffn_w1).rowwise() + p.ffn_b1.row(0);
  MatrixXd g = z1.unaryExpr([](double z) { return gelu_scalar(z); });
  MatrixXd f = (g * p.ffn_w2).rowwise() + p.ffn_b2.row(0);
  MatrixXd r2 = r1 + f;

  RowVectorXd agg = r2.colwise().mean();
  if (cache) {
    cache->x = x;
    cache->xp = std::move(xp);
    cache->ln1 = std::move(ln1);
    cache->n1 = std::move(n1);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attn = std::move(attn);
    cache->o = std::move(o);
    cache->m = std::move(m);
    cache->r1 = std::move(r1);
    cache->ln2 = std::move(ln2);
    cache->n2 = std::move(n2);
    cache->z1 = std::move(z1);
    cache->g = std::move(g);
    cache->agg = agg;
  }
  return agg;
}

inline void encode_identity_backward(const HeadParams& p, const EncoderCache& c,
                                     const RowVectorXd& dagg, HeadParams& grads) {
  const int T = static_cast<int>(c.x.rows());
  const int dh = p.d / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Mean pool: every frame row receives dagg / T.
  MatrixXd dr2 = MatrixXd::Ones(T, 1) * (dagg / static_cast<double>(T));

  // FFN branch.
  const MatrixXd& df = dr2;
  grads.ffn_w2 += c.g.transpose() * df;
  grads.ffn_b2.row(0) += df.colwise().sum();
  MatrixXd dg = df * p.ffn_w2.transpose();
  MatrixXd dz1 = dg.cwiseProduct(c.z1.unaryExpr([](double z) { return gelu_grad_scalar(z); }));
  grads.ffn_w1 += c.n2.transpose() * dz1;
  grads.ffn_b1.row(0) += dz1.colwise().sum();
  MatrixXd dn2 = dz1 * p.ffn_w1.transpose();

  MatrixXd dr1 = dr2;  // residual
  layer_norm_backward(dn2, c.ln2, p.ln2_g, grads.ln2_g, grads.ln2_b, dr1);

  // Attention branch.
  const MatrixXd& dm = dr1;
  grads.enc_wo += c.o.transpose() * dm;
  grads.enc_bo.row(0) += dm.colwise().sum();
  MatrixXd do_ = dm * p.enc_wo.transpose();

  MatrixXd dq(T, p.d), dk(T, p.d), dv(T, p.d);
  for (int h = 0; h < p.heads; ++h) {
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    const MatrixXd& a = c.attn[static_cast<std::size_t>(h)];
    const auto doh = do_.middleCols(h * dh, dh);
    MatrixXd da = doh * vh.transpose();
    dv.middleCols(h * dh, dh) = a.transpose() * doh;
    MatrixXd ds = softmax_rows_backward(a, da);
    dq.middleCols(h * dh, dh) = scale * (ds * kh);
    dk.middleCols(h * dh, dh) = scale * (ds.transpose() * qh);
  }
  grads.enc_wq += c.n1.transpose() * dq;
  grads.enc_bq.row(0) += dq.colwise().sum();
  grads.enc_wk += c.n1.transpose() * dk;
  grads.enc_wv += c.n1.transpose() * dv;
  grads.enc_bv.row(0) += dv.colwise().sum();
  MatrixXd dn1 = dq * p.enc_wq.transpose() + dk * p.enc_wk.transpose() + dv * p.enc_wv.transpose();

  MatrixXd dxp = dr1;  // residual around the attention block
  layer_norm_backward(dn1, c.ln1, p.ln1_g, grads.ln1_g, grads.ln1_b, dxp);

  grads.face_w += c.x.transpose() * dxp;
  grads.face_b.row(0) += dxp.colwise().sum();
}

struct ForwardCache {
  std::vector<EncoderCache> encoders;  // per identity
  MatrixXd xagg;                       // S x d
  MatrixXd up;                         // N x d
  MatrixXd qx;                         // N x d
  MatrixXd kx;                         // S x d
  MatrixXd probs;                      // N x S
};

inline MatrixXd forward_probs(const HeadParams& p, const MatchBatch& b, ForwardCache* cache) {
  p.check_shapes();
  if (b.audio.rows() < 1) throw DimensionMismatch("batch needs at least one utterance");
  if (b.video.empty()) throw DimensionMismatch("batch needs at least one identity");
  if (b.audio.cols() != p.d_s)
    throw DimensionMismatch("utterance embedding dimension " + std::to_string(b.audio.cols()) +
                            " does not match head d_s " + std::to_string(p.d_s));

  const int S = static_cast<int>(b.video.size());
  MatrixXd xagg(S, p.d);
  std::vector<EncoderCache> encoders(cache ? static_cast<std::size_t>(S) : 0);
  for (int s = 0; s < S; ++s)
    xagg.row(s) = encode_identity(p, b.video[static_cast<std::size_t>(s)],
                                  cache ? &encoders[static_cast<std::size_t>(s)] : nullptr);

  MatrixXd up = (b.audio * p.audio_w).rowwise() + p.audio_b.row(0);
  MatrixXd qx = (up * p.xattn_wq).rowwise() + p.xattn_bq.row(0);
  MatrixXd kx = xagg * p.xattn_wk;
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.d));
  MatrixXd logits = scale * (qx * kx.transpose());
  MatrixXd probs = softmax_rows(logits);

  if (cache) {
    cache->encoders = std::move(encoders);
    cache->xagg = std::move(xagg);
    cache->up = std::move(up);
    cache->qx = std::move(qx);
    cache->kx = std::move(kx);
    cache->probs = probs;
  }
  return probs;
}

}  // namespace detail

// Aggregates each identity's frame sequence into one quality-aware
// embedding; row s depends only on identity s's frames.
inline MatrixXd aggregate_faces(const HeadParams& p, const std::vector<MatrixXd>& video) {
  p.check_shapes();
  if (video.empty()) throw DimensionMismatch("no identities to aggregate");
  MatrixXd out(static_cast<int>(video.size()), p.d);
  for (std::size_t s = 0; s < video.size(); ++s) {
    if (video[s].rows() < 1) throw DimensionMismatch("identity with no frames");
    out.row(static_cast<int>(s)) = detail::encode_identity(p, video[s], nullptr);
  }
  return out;
}

// Scaled dot-product cross-attention match probabilities; each row is a
// softmax over the clip's visible identities.
inline MatrixXd match_probs(const HeadParams& p, const MatchBatch& b) {
  return detail::forward_probs(p, b, nullptr);
}

// Mean cross-entropy of match_probs rows against the target identity
// columns. Gradients are accumulated into `grads` for every tensor.
inline double fva_loss_and_grads(const HeadParams& p, const MatchBatch& b,
                                 const std::vector<int>& targets, HeadParams& grads) {
  detail::ForwardCache cache;
  const MatrixXd probs = detail::forward_probs(p, b, &cache);
  const int N = static_cast<int>(probs.rows());
  const int S = static_cast<int>(probs.cols());
  if (static_cast<int>(targets.size()) != N)
    throw DimensionMismatch("one target identity per utterance required");

  double loss = 0.0;
  MatrixXd dlogits = probs;
  for (int i = 0; i < N; ++i) {
    const int y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= S) throw NoVisibleIdentity("target identity index out of range");
    loss -= std::log(std::max(probs(i, y), 1e-300));
    dlogits(i, y) -= 1.0;
  }
  loss /= N;
  dlogits /= static_cast<double>(N);

  const double scale = 1.0 / std::sqrt(static_cast<double>(p.d));
  MatrixXd dqx = scale * (dlogits * cache.kx);
  MatrixXd dkx = scale * (dlogits.transpose() * cache.qx);
  grads.xattn_wq += cache.up.transpose() * dqx;
  grads.xattn_bq.row(0) += dqx.colwise().sum();
  grads.xattn_wk += cache.xagg.transpose() * dkx;
  MatrixXd dup = dqx * p.xattn_wq.transpose();
  grads.audio_w += b.audio.transpose() * dup;
  grads.audio_b.row(0) += dup.colwise().sum();

  MatrixXd dxagg = dkx * p.xattn_wk.transpose();
  for (int s = 0; s < S; ++s)
    detail::encode_identity_backward(p, cache.encoders[static_cast<std::size_t>(s)], dxagg.row(s),
                                     grads);
  return loss;
}

// Forward-only loss, used by finite-difference checks.
inline double fva_loss(const HeadParams& p, const MatchBatch& b, const std::vector<int>& targets) {
  const MatrixXd probs = detail::forward_probs(p, b, nullptr);
  double loss = 0.0;
  for (int i = 0; i < probs.rows(); ++i)
    loss -= std::log(std::max(probs(i, targets[static_cast<std::size_t>(i)]), 1e-300));
  return loss / probs.rows();
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double lr = 1e-5;
  double decay_factor = 0.2;
  int decay_every = 5;
  int epochs = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool freeze_projections = false;  // keep the pretrained-branch stand-ins fixed
  bool train_ffn = true;
};

struct TrainResult {
  HeadParams params;
  std::vector<double> epoch_loss;
};

namespace detail {

struct TrainBatch {
  MatchBatch batch;
  std::vector<int> targets;
};

// One batch per (clip, identity): all utterances hinted to that identity
// against every visible identity of the clip.
inline std::vector<TrainBatch> build_train_batches(const Bundle& bundle) {
  BundleIndex index(bundle);
  std::vector<TrainBatch> out;
  for (const auto& clip : bundle.clips) {
    auto uit = index.utterances_by_clip.find(clip.clip_id);
    if (uit == index.utterances_by_clip.end()) continue;
    std::map<std::string, std::vector<const Utterance*>> by_person;
    for (const Utterance* u : uit->second) {
      if (!u->speaker_hint)
        throw MissingLabel("training utterance " + u->utt_id + " has no speaker_hint");
      by_person[*u->speaker_hint].push_back(u);
    }
    for (const auto& [person, utts] : by_person) {
      TrainBatch tb;
      tb.batch = build_match_batch(index, clip.clip_id, utts);
      const auto it = std::find(tb.batch.person_ids.begin(), tb.batch.person_ids.end(), person);
      if (it == tb.batch.person_ids.end())
        throw NoVisibleIdentity("speaker_hint " + person + " is not visible in clip " +
                                clip.clip_id);
      const int target = static_cast<int>(it - tb.batch.person_ids.begin());
      tb.targets.assign(utts.size(), target);
      out.push_back(std::move(tb));
    }
  }
  return out;
}

}  // namespace detail

// Adam with stepwise-decayed learning rate. Batches run in a fixed
// (clip_id, person_id) order so training is deterministic.
inline TrainResult train_head(const HeadParams& init, const Bundle& bundle,
                              const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw InvalidConfig("epochs must be >= 0");
  if (cfg.decay_every < 1) throw InvalidConfig("decay_every must be >= 1");
  if (!(cfg.lr > 0.0)) throw InvalidConfig("lr must be > 0");
  init.check_shapes();
  TrainResult result;
  result.params = init;
  if (cfg.epochs == 0) return result;

  auto batches = detail::build_train_batches(bundle);
  if (batches.empty()) throw MissingLabel("no training utterances with speaker hints");

  HeadParams m = zeros_like(init);
  HeadParams v = zeros_like(init);
  auto frozen = [&cfg](const std::string& name) {
    if (cfg.freeze_projections && (name.rfind("audio_", 0) == 0 || name.rfind("face_", 0) == 0))
      return true;
    if (!cfg.train_ffn && name.rfind("ffn_", 0) == 0) return true;
    return false;
  };

  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.lr * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
    double weighted_loss = 0.0;
    std::int64_t n_utts = 0;
    for (const auto& tb : batches) {
      HeadParams grads = zeros_like(result.params);
      const double loss = fva_loss_and_grads(result.params, tb.batch, tb.targets, grads);
      weighted_loss += loss * static_cast<double>(tb.targets.size());
      n_utts += static_cast<std::int64_t>(tb.targets.size());
      ++step;

      auto pt = result.params.tensors();
      auto mt = m.tensors();
      auto vt = v.tensors();
      auto gt = grads.tensors();
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < pt.size(); ++i) {
        if (frozen(pt[i].first)) continue;
        MatrixXd& theta = *pt[i].second;
        MatrixXd& mi = *mt[i].second;
        MatrixXd& vi = *vt[i].second;
        const MatrixXd& gi = *gt[i].second;
        mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * gi;
        vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * gi.cwiseProduct(gi);
        const MatrixXd mhat = mi / bc1;
        const MatrixXd vhat = vi / bc2;
        theta -= lr * (mhat.array() / (vhat.array().sqrt() + cfg.adam_eps)).matrix();
      }
    }
    if (!std::isfinite(weighted_loss))
      throw InvalidConfig("training diverged: non-finite loss at epoch " + std::to_string(epoch));
    result.epoch_loss.push_back(weighted_loss / static_cast<double>(n_utts));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Clip scoring

// All (utterance, identity) match probabilities of a clip, row-normalized.
inline std::vector<Match> score_clip(const HeadParams& p, const BundleIndex& index,
                                     const std::string& clip_id) {
  auto uit = index.utterances_by_clip.find(clip_id);
  if (uit == index.utterances_by_clip.end() || uit->second.empty()) return {};
  std::vector<const Utterance*> utts = uit->second;
  std::sort(utts.begin(), utts.end(),
            [](const Utterance* a, const Utterance* b) { return a->utt_id < b->utt_id; });
  const MatchBatch batch = build_match_batch(index, clip_id, utts);
  const MatrixXd probs = match_probs(p, batch);
  std::vector<Match> out;
  out.reserve(static_cast<std::size_t>(probs.rows() * probs.cols()));
  for (int i = 0; i < probs.rows(); ++i)
    for (int s = 0; s < probs.cols(); ++s)
      out.push_back(Match{batch.utt_ids[static_cast<std::size_t>(i)],
                          batch.person_ids[static_cast<std::size_t>(s)], probs(i, s)});
  return out;
}

inline std::vector<Match> score_all_clips(const HeadParams& p, const Bundle& bundle,
                                          unsigned threads = 1) {
  BundleIndex index(bundle);
  std::vector<std::vector<Match>> per_clip(bundle.clips.size());
  parallel_for(bundle.clips.size(), threads, [&](std::size_t i) {
    per_clip[i] = score_clip(p, index, bundle.clips[i].clip_id);
  });
  std::vector<Match> out;
  for (auto& v : per_clip)
    for (auto& m : v) out.push_back(std::move(m));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: "FVAH" magic, u16 version, dimension header, then named
// tensors as little-endian 64-bit floats.

namespace detail {

inline void put_u16(std::ostream& out, std::uint16_t x) {
  unsigned char b[2] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32f(std::ostream& out, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint16_t take_u16(std::istream& in, const std::string& ctx) {
  unsigned char b[2];
  if (!in.read(reinterpret_cast<char*>(b), 2)) throw ParseError(ctx + ": truncated");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t take_u32f(std::istream& in, const std::string& ctx) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError(ctx + ": truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double take_f64(std::istream& in, const std::string& ctx) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ParseError(ctx + ": truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline void save_head_params(const std::filesystem::path& path, const HeadParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("FVAH", 4);
  detail::put_u16(out, 1);  // version
  detail::put_u16(out, static_cast<std::uint16_t>(p.heads));
  detail::put_u32f(out, static_cast<std::uint32_t>(p.d_s));
  detail::put_u32f(out, static_cast<std::uint32_t>(p.d_f));
  detail::put_u32f(out, static_cast<std::uint32_t>(p.d));
  detail::put_f64(out, p.ln_eps);
  const auto ts = p.tensors();
  detail::put_u32f(out, static_cast<std::uint32_t>(ts.size()));
  for (const auto& [name, t] : ts) {
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32f(out, static_cast<std::uint32_t>(t->rows()));
    detail::put_u32f(out, static_cast<std::uint32_t>(t->cols()));
    for (int r = 0; r < t->rows(); ++r)
      for (int c = 0; c < t->cols(); ++c) detail::put_f64(out, (*t)(r, c));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline HeadParams load_head_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string ctx = path.string();
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FVAH", 4) != 0)
    throw ParseError(ctx + ": bad magic");
  const std::uint16_t version = detail::take_u16(in, ctx);
  if (version != 1) throw ParseError(ctx + ": unsupported version " + std::to_string(version));
  HeadParams p;
  p.heads = detail::take_u16(in, ctx);
  p.d_s = static_cast<int>(detail::take_u32f(in, ctx));
  p.d_f = static_cast<int>(detail::take_u32f(in, ctx));
  p.d = static_cast<int>(detail::take_u32f(in, ctx));
  p.ln_eps = detail::take_f64(in, ctx);
  p.check_shapes();
  const std::uint32_t n_tensors = detail::take_u32f(in, ctx);
  std::map<std::string, MatrixXd> loaded;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::uint16_t name_len = detail::take_u16(in, ctx);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw ParseError(ctx + ": truncated tensor name");
    const std::uint32_t rows = detail::take_u32f(in, ctx);
    const std::uint32_t cols = detail::take_u32f(in, ctx);
    MatrixXd t(static_cast<int>(rows), static_cast<int>(cols));
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c)
        t(static_cast<int>(r), static_cast<int>(c)) = detail::take_f64(in, ctx);
    loaded.emplace(std::move(name), std::move(t));
  }
  for (auto& [name, t] : p.tensors()) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw ParseError(ctx + ": missing tensor " + name);
    const auto [rows, cols] = head_tensor_shape(p.d_s, p.d_f, p.d, name);
    if (it->second.rows() != rows || it->second.cols() != cols)
      throw ParseError(ctx + ": tensor " + name + " has unexpected shape");
    *t = std::move(it->second);
  }
  return p;
}

}  // namespace asdkit
