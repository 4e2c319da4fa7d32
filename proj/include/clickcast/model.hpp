#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "clickcast/calibration.hpp"
#include "clickcast/encoding.hpp"
#include "clickcast/evaluation.hpp"

namespace clickcast {

using Eigen::MatrixXd;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ModelConfig {
  int seq_len = 40;
  int event_dim = 0;     // filled from the encoder config when 0
  int metadata_dim = 0;  // likewise
  int gru_units = 32;
  std::vector<int> mlp_layer_sizes = {16, 16};
  int n_classes = 2;
  double dropout_rate = 0.0;
  double l2_lambda = 0.0;
  double pos_weight = 1.0;
  AdamConfig adam;
  int epochs = 6;
  int batch_size = 64;
  uint64_t seed = 42;

  void validate() const {
    if (seq_len <= 0 || event_dim <= 0 || metadata_dim <= 0 || gru_units <= 0 || epochs <= 0 ||
        batch_size <= 0)
      throw ConfigError("model dimensions and schedule must be positive");
    if (n_classes != 2) throw ConfigError("binary classifier only");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0,1)");
    if (pos_weight < 1.0) throw ConfigError("pos_weight must be >= 1");
    for (int s : mlp_layer_sizes)
      if (s <= 0) throw ConfigError("mlp layer sizes must be positive");
  }

  int merged_dim() const {
    return gru_units + (mlp_layer_sizes.empty() ? metadata_dim : mlp_layer_sizes.back());
  }
};

inline json model_config_to_json(const ModelConfig& c) {
  return json{{"seqLen", c.seq_len},
              {"eventDim", c.event_dim},
              {"metadataDim", c.metadata_dim},
              {"gruUnits", c.gru_units},
              {"mlpLayerSizes", c.mlp_layer_sizes},
              {"nClasses", c.n_classes},
              {"dropoutRate", c.dropout_rate},
              {"l2Lambda", c.l2_lambda},
              {"posWeight", c.pos_weight},
              {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
              {"epochs", c.epochs},
              {"batchSize", c.batch_size},
              {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.seq_len = j.at("seqLen").get<int>();
  c.event_dim = j.at("eventDim").get<int>();
  c.metadata_dim = j.at("metadataDim").get<int>();
  c.gru_units = j.at("gruUnits").get<int>();
  c.mlp_layer_sizes = j.at("mlpLayerSizes").get<std::vector<int>>();
  c.n_classes = j.at("nClasses").get<int>();
  c.dropout_rate = j.at("dropoutRate").get<double>();
  c.l2_lambda = j.at("l2Lambda").get<double>();
  c.pos_weight = j.at("posWeight").get<double>();
  c.adam.lr = j.at("adam").at("lr").get<double>();
  c.adam.beta1 = j.at("adam").at("beta1").get<double>();
  c.adam.beta2 = j.at("adam").at("beta2").get<double>();
  c.adam.eps = j.at("adam").at("eps").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batchSize").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

struct ParamRef {
  std::string name;
  MatrixXd* matrix;
  bool is_weight;  // participates in the L2 penalty; biases do not
};

struct ParamRefConst {
  std::string name;
  const MatrixXd* matrix;
  bool is_weight;
};

// GRU gates (input, recurrent, bias for update/reset/candidate), the
// metadata MLP stack, and the output projection over the merged
// representation. Biases are stored as n x 1 matrices.
struct ModelParams {
  MatrixXd wz, uz, bz;
  MatrixXd wr, ur, br;
  MatrixXd wh, uh, bh;
  std::vector<MatrixXd> mlp_w, mlp_b;
  MatrixXd out_w, out_b;

  std::vector<ParamRef> entries() {
    std::vector<ParamRef> v = {{"gru.wz", &wz, true}, {"gru.uz", &uz, true}, {"gru.bz", &bz, false},
                               {"gru.wr", &wr, true}, {"gru.ur", &ur, true}, {"gru.br", &br, false},
                               {"gru.wh", &wh, true}, {"gru.uh", &uh, true}, {"gru.bh", &bh, false}};
    for (size_t l = 0; l < mlp_w.size(); ++l) {
      v.push_back({"mlp" + std::to_string(l) + ".w", &mlp_w[l], true});
      v.push_back({"mlp" + std::to_string(l) + ".b", &mlp_b[l], false});
    }
    v.push_back({"out.w", &out_w, true});
    v.push_back({"out.b", &out_b, false});
    return v;
  }

  std::vector<ParamRefConst> entries() const {
    auto mutable_entries = const_cast<ModelParams*>(this)->entries();
    std::vector<ParamRefConst> v;
    v.reserve(mutable_entries.size());
    for (const auto& e : mutable_entries) v.push_back({e.name, e.matrix, e.is_weight});
    return v;
  }

  bool all_finite() const {
    for (const auto& e : entries())
      if (!e.matrix->allFinite()) return false;
    return true;
  }
};

namespace detail {

inline MatrixXd glorot_uniform(int rows, int cols, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(-limit, limit);
  return m;
}

inline MatrixXd sigmoid(const MatrixXd& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

}  // namespace detail

inline ModelParams init_params(const ModelConfig& config, Rng& rng) {
  ModelParams p;
  int u = config.gru_units;
  int e = config.event_dim;
  p.wz = detail::glorot_uniform(u, e, rng);
  p.uz = detail::glorot_uniform(u, u, rng);
  p.bz = MatrixXd::Zero(u, 1);
  p.wr = detail::glorot_uniform(u, e, rng);
  p.ur = detail::glorot_uniform(u, u, rng);
  p.br = MatrixXd::Zero(u, 1);
  p.wh = detail::glorot_uniform(u, e, rng);
  p.uh = detail::glorot_uniform(u, u, rng);
  p.bh = MatrixXd::Zero(u, 1);
  int in = config.metadata_dim;
  for (int size : config.mlp_layer_sizes) {
    p.mlp_w.push_back(detail::glorot_uniform(size, in, rng));
    p.mlp_b.push_back(MatrixXd::Zero(size, 1));
    in = size;
  }
  p.out_w = detail::glorot_uniform(config.n_classes, config.merged_dim(), rng);
  p.out_b = MatrixXd::Zero(config.n_classes, 1);
  return p;
}

inline ModelParams zeros_like(const ModelParams& other) {
  ModelParams g = other;
  for (auto& e : g.entries()) e.matrix->setZero();
  return g;
}

// Compact training representation: the per-event vectors are bit vectors
// by construction, so only the set indices are stored.
struct EncodedExample {
  std::vector<std::vector<uint32_t>> sequence_bits;
  std::vector<double> metadata;
  int label = 0;
};

inline EncodedExample compress_encoded(const EncodedInstance& enc, int label) {
  EncodedExample ex;
  ex.sequence_bits.reserve(enc.sequence.size());
  for (const auto& v : enc.sequence) {
    std::vector<uint32_t> bits;
    for (size_t i = 0; i < v.size(); ++i) {
      if (v[i] == 1.0) {
        bits.push_back(static_cast<uint32_t>(i));
      } else if (v[i] != 0.0) {
        throw EncodingError("sequence vector is not a bit vector");
      }
    }
    ex.sequence_bits.push_back(std::move(bits));
  }
  ex.metadata = enc.metadata;
  ex.label = label;
  return ex;
}

struct Batch {
  std::vector<MatrixXd> x;  // seq_len matrices, event_dim x batch
  MatrixXd metadata;        // metadata_dim x batch
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
};

inline Batch make_batch(const std::vector<EncodedExample>& examples, const std::vector<size_t>& indices,
                        const ModelConfig& config) {
  Batch b;
  int n = static_cast<int>(indices.size());
  b.x.assign(static_cast<size_t>(config.seq_len), MatrixXd::Zero(config.event_dim, n));
  b.metadata = MatrixXd::Zero(config.metadata_dim, n);
  b.labels.reserve(indices.size());
  for (int col = 0; col < n; ++col) {
    const auto& ex = examples[indices[static_cast<size_t>(col)]];
    if (static_cast<int>(ex.sequence_bits.size()) != config.seq_len)
      throw ModelError("example sequence length does not match seq_len");
    if (static_cast<int>(ex.metadata.size()) != config.metadata_dim)
      throw ModelError("example metadata dimension mismatch");
    for (int t = 0; t < config.seq_len; ++t)
      for (uint32_t bit : ex.sequence_bits[static_cast<size_t>(t)]) {
        if (bit >= static_cast<uint32_t>(config.event_dim))
          throw ModelError("encoded bit outside event dimension");
        b.x[static_cast<size_t>(t)](static_cast<int>(bit), col) = 1.0;
      }
    for (int i = 0; i < config.metadata_dim; ++i)
      b.metadata(i, col) = ex.metadata[static_cast<size_t>(i)];
    b.labels.push_back(ex.label);
  }
  return b;
}

enum class Mode { train, infer };

struct ForwardCache {
  std::vector<MatrixXd> z, r, c;  // per timestep, units x batch
  std::vector<MatrixXd> h;        // seq_len + 1 entries, h[0] = 0
  std::vector<MatrixXd> mlp_in;   // input to each mlp layer
  std::vector<MatrixXd> mlp_relu; // post-relu, pre-dropout
  std::vector<MatrixXd> mlp_mask; // empty when dropout is off
  MatrixXd mlp_out;
  MatrixXd merged;                // post-dropout merged representation
  MatrixXd merged_mask;
  MatrixXd logits;                // n_classes x batch
  MatrixXd probs;
};

namespace detail {

inline MatrixXd dropout_mask(int rows, int cols, double rate, Rng& rng) {
  MatrixXd m(rows, cols);
  double scale = 1.0 / (1.0 - rate);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform() < rate ? 0.0 : scale;
  return m;
}

inline MatrixXd softmax_columns(const MatrixXd& logits) {
  MatrixXd probs(logits.rows(), logits.cols());
  for (int c = 0; c < logits.cols(); ++c) {
    double m = logits.col(c).maxCoeff();
    Eigen::VectorXd e = (logits.col(c).array() - m).exp();
    probs.col(c) = e / e.sum();
  }
  return probs;
}

}  // namespace detail

// GRU over the sequence from a zero hidden state, ReLU MLP over the
// metadata, concatenation, linear projection, softmax. Inverted dropout
// on the MLP hidden activations and the merged representation in train
// mode only.
inline ForwardCache batch_forward(const Batch& batch, const ModelParams& p, const ModelConfig& config,
                                  Mode mode, Rng* rng) {
  int n = batch.size();
  int units = config.gru_units;
  bool drop = mode == Mode::train && config.dropout_rate > 0.0;
  if (drop && rng == nullptr) throw ModelError("train-mode forward with dropout needs an rng");

  ForwardCache cache;
  cache.h.push_back(MatrixXd::Zero(units, n));
  for (int t = 0; t < config.seq_len; ++t) {
    const MatrixXd& x = batch.x[static_cast<size_t>(t)];
    const MatrixXd& h_prev = cache.h.back();
    MatrixXd z = detail::sigmoid(((p.wz * x + p.uz * h_prev).colwise() + p.bz.col(0)));
    MatrixXd r = detail::sigmoid(((p.wr * x + p.ur * h_prev).colwise() + p.br.col(0)));
    MatrixXd g = r.cwiseProduct(h_prev);
    MatrixXd c = ((p.wh * x + p.uh * g).colwise() + p.bh.col(0)).array().tanh().matrix();
    MatrixXd h = (1.0 - z.array()).matrix().cwiseProduct(h_prev) + z.cwiseProduct(c);
    cache.z.push_back(std::move(z));
    cache.r.push_back(std::move(r));
    cache.c.push_back(std::move(c));
    cache.h.push_back(std::move(h));
  }

  MatrixXd a = batch.metadata;
  for (size_t l = 0; l < p.mlp_w.size(); ++l) {
    cache.mlp_in.push_back(a);
    MatrixXd relu = ((p.mlp_w[l] * a).colwise() + p.mlp_b[l].col(0)).cwiseMax(0.0);
    cache.mlp_relu.push_back(relu);
    if (drop) {
      MatrixXd mask = detail::dropout_mask(static_cast<int>(relu.rows()), n, config.dropout_rate, *rng);
      a = relu.cwiseProduct(mask);
      cache.mlp_mask.push_back(std::move(mask));
    } else {
      a = std::move(relu);
    }
  }
  cache.mlp_out = a;

  MatrixXd merged(config.merged_dim(), n);
  merged.topRows(units) = cache.h.back();
  merged.bottomRows(cache.mlp_out.rows()) = cache.mlp_out;
  if (drop) {
    cache.merged_mask = detail::dropout_mask(config.merged_dim(), n, config.dropout_rate, *rng);
    merged = merged.cwiseProduct(cache.merged_mask);
  }
  cache.merged = std::move(merged);

  cache.logits = (p.out_w * cache.merged).colwise() + p.out_b.col(0);
  if (!cache.logits.allFinite()) throw NumericError("non-finite activation in forward pass");
  cache.probs = detail::softmax_columns(cache.logits);
  return cache;
}

struct ForwardResult {
  Logits2 logits;
  Probs2 probs;
};

// Single-instance inference, the serving-side entry point.
inline ForwardResult forward(const EncodedInstance& enc, const ModelParams& p, const ModelConfig& config) {
  if (static_cast<int>(enc.sequence.size()) != config.seq_len)
    throw ModelError("sequence length does not match seq_len");
  Batch b;
  b.x.reserve(enc.sequence.size());
  for (const auto& v : enc.sequence) {
    if (static_cast<int>(v.size()) != config.event_dim) throw ModelError("event vector dimension mismatch");
    b.x.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<int>(v.size())));
  }
  if (static_cast<int>(enc.metadata.size()) != config.metadata_dim)
    throw ModelError("metadata dimension mismatch");
  b.metadata = Eigen::Map<const Eigen::VectorXd>(enc.metadata.data(), static_cast<int>(enc.metadata.size()));
  b.labels = {0};
  auto cache = batch_forward(b, p, config, Mode::infer, nullptr);
  return ForwardResult{{cache.logits(0, 0), cache.logits(1, 0)}, {cache.probs(0, 0), cache.probs(1, 0)}};
}

inline constexpr double kProbEpsilon = 1e-12;

// loss = -pos_weight * 1[label=1] * ln p1 - 1[label=0] * ln p0
inline double weighted_cross_entropy(const Probs2& probs, int label, double pos_weight) {
  if (label != 0 && label != 1) throw ModelError("label must be 0 or 1");
  double p = std::max(probs[static_cast<size_t>(label)], kProbEpsilon);
  double w = label == 1 ? pos_weight : 1.0;
  return -w * std::log(p);
}

// Mean weighted cross-entropy plus the L2 penalty over weight matrices.
inline double batch_loss_from_cache(const ForwardCache& cache, const Batch& batch,
                                    const ModelParams& p, const ModelConfig& config) {
  double total = 0.0;
  for (int i = 0; i < batch.size(); ++i) {
    Probs2 probs{cache.probs(0, i), cache.probs(1, i)};
    total += weighted_cross_entropy(probs, batch.labels[static_cast<size_t>(i)], config.pos_weight);
  }
  double loss = total / static_cast<double>(batch.size());
  if (config.l2_lambda > 0.0) {
    for (const auto& e : p.entries())
      if (e.is_weight) loss += config.l2_lambda * e.matrix->squaredNorm();
  }
  return loss;
}

inline double batch_loss(const Batch& batch, const ModelParams& p, const ModelConfig& config) {
  auto cache = batch_forward(batch, p, config, Mode::infer, nullptr);
  return batch_loss_from_cache(cache, batch, p, config);
}

// Exact gradients of batch_loss via backpropagation through time.
inline ModelParams backward(const Batch& batch, const ForwardCache& cache, const ModelParams& p,
                            const ModelConfig& config) {
  int n = batch.size();
  int units = config.gru_units;
  ModelParams g = zeros_like(p);

  // d(mean loss)/d(logits); the probability clamp region is flat.
  MatrixXd dlogits(config.n_classes, n);
  double inv_n = 1.0 / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    int label = batch.labels[static_cast<size_t>(i)];
    double w = (label == 1 ? config.pos_weight : 1.0) * inv_n;
    double p_true = cache.probs(label, i);
    if (p_true <= kProbEpsilon) w = 0.0;
    dlogits(0, i) = w * (cache.probs(0, i) - (label == 0 ? 1.0 : 0.0));
    dlogits(1, i) = w * (cache.probs(1, i) - (label == 1 ? 1.0 : 0.0));
  }

  g.out_w = dlogits * cache.merged.transpose();
  g.out_b = dlogits.rowwise().sum();

  MatrixXd dmerged = p.out_w.transpose() * dlogits;
  if (cache.merged_mask.size() > 0) dmerged = dmerged.cwiseProduct(cache.merged_mask);

  MatrixXd dh = dmerged.topRows(units);
  MatrixXd da = dmerged.bottomRows(cache.mlp_out.rows());

  for (size_t l = p.mlp_w.size(); l-- > 0;) {
    if (!cache.mlp_mask.empty()) da = da.cwiseProduct(cache.mlp_mask[l]);
    MatrixXd dpre =
        da.cwiseProduct((cache.mlp_relu[l].array() > 0.0).cast<double>().matrix());
    g.mlp_w[l] = dpre * cache.mlp_in[l].transpose();
    g.mlp_b[l] = dpre.rowwise().sum();
    da = p.mlp_w[l].transpose() * dpre;
  }

  for (int t = config.seq_len - 1; t >= 0; --t) {
    const MatrixXd& z = cache.z[static_cast<size_t>(t)];
    const MatrixXd& r = cache.r[static_cast<size_t>(t)];
    const MatrixXd& c = cache.c[static_cast<size_t>(t)];
    const MatrixXd& h_prev = cache.h[static_cast<size_t>(t)];
    const MatrixXd& x = batch.x[static_cast<size_t>(t)];

    MatrixXd dz = dh.cwiseProduct(c - h_prev);
    MatrixXd dzpre = dz.cwiseProduct(z).cwiseProduct((1.0 - z.array()).matrix());
    MatrixXd dc = dh.cwiseProduct(z);
    MatrixXd dcpre = dc.cwiseProduct((1.0 - c.array().square()).matrix());

    MatrixXd dh_prev = dh.cwiseProduct((1.0 - z.array()).matrix());
    MatrixXd dg = p.uh.transpose() * dcpre;
    MatrixXd dr = dg.cwiseProduct(h_prev);
    dh_prev += dg.cwiseProduct(r);
    MatrixXd drpre = dr.cwiseProduct(r).cwiseProduct((1.0 - r.array()).matrix());
    dh_prev += p.uz.transpose() * dzpre + p.ur.transpose() * drpre;

    MatrixXd gate_input = r.cwiseProduct(h_prev);
    g.wz += dzpre * x.transpose();
    g.uz += dzpre * h_prev.transpose();
    g.bz += dzpre.rowwise().sum();
    g.wr += drpre * x.transpose();
    g.ur += drpre * h_prev.transpose();
    g.br += drpre.rowwise().sum();
    g.wh += dcpre * x.transpose();
    g.uh += dcpre * gate_input.transpose();
    g.bh += dcpre.rowwise().sum();

    dh = std::move(dh_prev);
  }

  if (config.l2_lambda > 0.0) {
    auto grads = g.entries();
    auto params = p.entries();
    for (size_t i = 0; i < grads.size(); ++i)
      if (grads[i].is_weight) *grads[i].matrix += 2.0 * config.l2_lambda * *params[i].matrix;
  }
  return g;
}

struct AdamState {
  ModelParams m, v;

  static AdamState like(const ModelParams& p) { return AdamState{zeros_like(p), zeros_like(p)}; }
};

// Standard Adam with bias-corrected moments; t starts at 1.
inline void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
                      const AdamConfig& hyper, int64_t t) {
  if (t < 1) throw ModelError("adam step index starts at 1");
  double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  auto ps = params.entries();
  auto gs = grads.entries();
  auto ms = state.m.entries();
  auto vs = state.v.entries();
  for (size_t i = 0; i < ps.size(); ++i) {
    MatrixXd& m = *ms[i].matrix;
    MatrixXd& v = *vs[i].matrix;
    const MatrixXd& g = *gs[i].matrix;
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseProduct(g);
    MatrixXd m_hat = m / bc1;
    MatrixXd v_hat = v / bc2;
    *ps[i].matrix -=
        hyper.lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + hyper.eps).matrix());
  }
}

struct TrainingStats {
  double val_auc = 0.0;
  double val_ece = 0.0;
  std::vector<double> loss_curve;
  int best_epoch = -1;
  int64_t train_pos = 0, train_neg = 0;
  int64_t batch_pos_seen = 0, batch_neg_seen = 0;  // across all epochs; no down-sampling
  double holdout_ece_before = 0.0, holdout_ece_after = 0.0;
};

inline json training_stats_to_json(const TrainingStats& s) {
  return json{{"valAuc", s.val_auc},
              {"valEce", s.val_ece},
              {"lossCurve", s.loss_curve},
              {"bestEpoch", s.best_epoch},
              {"trainPos", s.train_pos},
              {"trainNeg", s.train_neg},
              {"batchPosSeen", s.batch_pos_seen},
              {"batchNegSeen", s.batch_neg_seen},
              {"holdoutEceBefore", s.holdout_ece_before},
              {"holdoutEceAfter", s.holdout_ece_after}};
}

inline TrainingStats training_stats_from_json(const json& j) {
  TrainingStats s;
  s.val_auc = j.value("valAuc", 0.0);
  s.val_ece = j.value("valEce", 0.0);
  s.loss_curve = j.value("lossCurve", std::vector<double>{});
  s.best_epoch = j.value("bestEpoch", -1);
  s.train_pos = j.value("trainPos", int64_t{0});
  s.train_neg = j.value("trainNeg", int64_t{0});
  s.batch_pos_seen = j.value("batchPosSeen", int64_t{0});
  s.batch_neg_seen = j.value("batchNegSeen", int64_t{0});
  s.holdout_ece_before = j.value("holdoutEceBefore", 0.0);
  s.holdout_ece_after = j.value("holdoutEceAfter", 0.0);
  return s;
}

struct TrainedModel {
  ModelParams params;
  ModelConfig config;
  EncoderConfig encoder;
  std::optional<MatrixScaling> calibration;
  TrainingStats stats;
  std::string family_id;
  std::string version_id;
};

struct SplitIndices {
  std::vector<size_t> train;
  std::vector<size_t> validation;
};

// Stratified 80/20 split; every class keeps at least one validation
// example. Deterministic given the seed.
inline SplitIndices stratified_split(const std::vector<int>& labels, uint64_t seed,
                                     double val_fraction = 0.2) {
  std::vector<size_t> pos, neg;
  for (size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  Rng rng(seed);
  SplitIndices out;
  for (auto* cls : {&neg, &pos}) {
    rng.shuffle(*cls);
    size_t n_val = std::max<size_t>(cls->empty() ? 0 : 1,
                                    static_cast<size_t>(std::llround(val_fraction * cls->size())));
    n_val = std::min(n_val, cls->size());
    out.validation.insert(out.validation.end(), cls->begin(), cls->begin() + static_cast<ptrdiff_t>(n_val));
    out.train.insert(out.train.end(), cls->begin() + static_cast<ptrdiff_t>(n_val), cls->end());
  }
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

inline std::vector<double> predict_positive_probs(const std::vector<EncodedExample>& examples,
                                                  const std::vector<size_t>& indices,
                                                  const ModelParams& p, const ModelConfig& config,
                                                  int chunk = 256) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(chunk)) {
    size_t end = std::min(indices.size(), start + static_cast<size_t>(chunk));
    std::vector<size_t> slice(indices.begin() + static_cast<ptrdiff_t>(start),
                              indices.begin() + static_cast<ptrdiff_t>(end));
    Batch b = make_batch(examples, slice, config);
    auto cache = batch_forward(b, p, config, Mode::infer, nullptr);
    for (int i = 0; i < b.size(); ++i) out.push_back(cache.probs(1, i));
  }
  return out;
}

inline std::vector<Logits2> predict_logits(const std::vector<EncodedExample>& examples,
                                           const std::vector<size_t>& indices, const ModelParams& p,
                                           const ModelConfig& config, int chunk = 256) {
  std::vector<Logits2> out;
  out.reserve(indices.size());
  for (size_t start = 0; start < indices.size(); start += static_cast<size_t>(chunk)) {
    size_t end = std::min(indices.size(), start + static_cast<size_t>(chunk));
    std::vector<size_t> slice(indices.begin() + static_cast<ptrdiff_t>(start),
                              indices.begin() + static_cast<ptrdiff_t>(end));
    Batch b = make_batch(examples, slice, config);
    auto cache = batch_forward(b, p, config, Mode::infer, nullptr);
    for (int i = 0; i < b.size(); ++i) out.push_back(Logits2{cache.logits(0, i), cache.logits(1, i)});
  }
  return out;
}

// Mini-batch training with per-epoch shuffling; keeps the parameters from
// the epoch with the best validation AUC.
inline TrainedModel train(const std::vector<EncodedExample>& examples, ModelConfig config,
                          const EncoderConfig& encoder) {
  if (examples.empty()) throw TrainingError("no training examples");
  if (config.event_dim == 0) config.event_dim = encoder.event_dim();
  if (config.metadata_dim == 0) config.metadata_dim = encoder.metadata_dim();
  config.validate();

  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const auto& ex : examples) labels.push_back(ex.label);

  auto split = stratified_split(labels, derive_seed(config.seed, 0xa11ce));
  TrainingStats stats;
  for (size_t i : split.train) (labels[i] == 1 ? stats.train_pos : stats.train_neg) += 1;
  if (stats.train_pos == 0 || stats.train_neg == 0)
    throw TrainingError("training split contains a single class");

  std::vector<int> val_labels;
  val_labels.reserve(split.validation.size());
  for (size_t i : split.validation) val_labels.push_back(labels[i]);

  Rng init_rng(derive_seed(config.seed, 0x1417));
  Rng dropout_rng(derive_seed(config.seed, 0xd209));
  Rng shuffle_rng(derive_seed(config.seed, 0x54f1e));

  ModelParams params = init_params(config, init_rng);
  AdamState adam = AdamState::like(params);
  int64_t step = 0;

  ModelParams best_params = params;
  double best_auc = -1.0;

  std::vector<size_t> order = split.train;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      std::vector<size_t> batch_idx(order.begin() + static_cast<ptrdiff_t>(start),
                                    order.begin() + static_cast<ptrdiff_t>(end));
      Batch batch = make_batch(examples, batch_idx, config);
      for (int lbl : batch.labels) (lbl == 1 ? stats.batch_pos_seen : stats.batch_neg_seen) += 1;
      auto cache = batch_forward(batch, params, config, Mode::train, &dropout_rng);
      loss_sum += batch_loss_from_cache(cache, batch, params, config) * batch.size();
      ModelParams grads = backward(batch, cache, params, config);
      adam_step(params, grads, adam, config.adam, ++step);
    }
    stats.loss_curve.push_back(loss_sum / static_cast<double>(order.size()));

    auto val_probs = predict_positive_probs(examples, split.validation, params, config);
    double val_auc = auc(val_probs, val_labels);
    if (val_auc > best_auc) {
      best_auc = val_auc;
      best_params = params;
      stats.best_epoch = epoch;
    }
  }

  stats.val_auc = best_auc;
  auto best_val_probs = predict_positive_probs(examples, split.validation, best_params, config);
  stats.val_ece = ece(best_val_probs, val_labels, 10);

  TrainedModel model;
  model.params = std::move(best_params);
  model.config = config;
  model.encoder = encoder;
  model.stats = std::move(stats);
  if (!model.params.all_finite()) throw NumericError("trained parameters are not finite");
  return model;
}

struct HyperGrid {
  std::vector<double> l2_lambda = {0.0, 1e-4, 1e-3};
  std::vector<double> dropout_rate = {0.0, 0.2, 0.5};
  std::vector<int> gru_units = {16, 32, 64};

  size_t size() const { return l2_lambda.size() * dropout_rate.size() * gru_units.size(); }
};

struct GridPoint {
  size_t index = 0;
  double l2_lambda = 0.0;
  double dropout_rate = 0.0;
  int gru_units = 0;
};

inline std::vector<GridPoint> enumerate_grid(const HyperGrid& grid) {
  if (grid.l2_lambda.empty() || grid.dropout_rate.empty() || grid.gru_units.empty())
    throw SearchError("empty hyperparameter grid");
  std::vector<GridPoint> points;
  size_t index = 0;
  for (double l2 : grid.l2_lambda)
    for (double d : grid.dropout_rate)
      for (int u : grid.gru_units) points.push_back(GridPoint{index++, l2, d, u});
  return points;
}

// One model per grid point, each deterministically seeded from the base
// seed and its index. Best validation AUC wins; ties prefer fewer GRU
// units, then the earlier point. Individual failures only void their
// point.
inline TrainedModel hyperparameter_search(const std::vector<EncodedExample>& examples,
                                          const ModelConfig& base, const HyperGrid& grid,
                                          const EncoderConfig& encoder, int n_threads = 1) {
  auto points = enumerate_grid(grid);
  std::vector<std::optional<TrainedModel>> results(points.size());
  std::vector<std::string> errors(points.size());

  auto run_point = [&](size_t i) {
    ModelConfig cfg = base;
    cfg.l2_lambda = points[i].l2_lambda;
    cfg.dropout_rate = points[i].dropout_rate;
    cfg.gru_units = points[i].gru_units;
    cfg.seed = derive_seed(base.seed, points[i].index);
    try {
      results[i] = train(examples, cfg, encoder);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  };

  if (n_threads <= 1 || points.size() == 1) {
    for (size_t i = 0; i < points.size(); ++i) run_point(i);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      for (size_t i = next.fetch_add(1); i < points.size(); i = next.fetch_add(1)) run_point(i);
    };
    std::vector<std::thread> threads;
    int workers = std::min<int>(n_threads, static_cast<int>(points.size()));
    threads.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  ptrdiff_t best = -1;
  for (size_t i = 0; i < points.size(); ++i) {
    if (!results[i]) continue;
    if (best < 0) {
      best = static_cast<ptrdiff_t>(i);
      continue;
    }
    const auto& cur = *results[i];
    const auto& champ = *results[static_cast<size_t>(best)];
    if (cur.stats.val_auc > champ.stats.val_auc ||
        (cur.stats.val_auc == champ.stats.val_auc && cur.config.gru_units < champ.config.gru_units)) {
      best = static_cast<ptrdiff_t>(i);
    }
  }
  if (best < 0) {
    std::string detail;
    for (const auto& e : errors)
      if (!e.empty()) detail = e;
    throw SearchError("all grid points failed: " + detail);
  }
  return std::move(*results[static_cast<size_t>(best)]);
}

}  // namespace clickcast
