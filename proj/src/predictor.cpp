#include "frz/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "frz/container.hpp"
#include "frz/errors.hpp"
#include "frz/rng.hpp"

namespace frz {

namespace {

std::array<int, 4> mlp_dims(const PredictorDims& d, bool head) {
  if (head) return {d.feat, d.z_hidden, d.z_hidden, 2};
  return {d.input, d.hidden, d.hidden, d.feat};
}

Mlp init_mlp(const std::array<int, 4>& dims, Rng rng) {
  Mlp m;
  for (int l = 0; l < 3; ++l) {
    m.w[l] = Tensor::zeros({dims[l], dims[l + 1]});
    m.b[l] = Tensor::zeros({dims[l + 1]});
    double bound = std::sqrt(6.0 / double(dims[l]));
    Rng layer = rng.stream(std::uint64_t(l));
    for (auto& x : m.w[l].v) x = float(layer.uniform(-bound, bound));
  }
  return m;
}

// rows (n x in) -> out (n x dims[3]); optionally keeps the two hidden
// activations (post-ReLU) for the backward pass.
void mlp_forward(const Mlp& m, const float* x, int n, std::vector<float>* h1, std::vector<float>* h2,
                 std::vector<float>& out) {
  const int d0 = m.w[0].shape[0], d1 = m.w[0].shape[1], d2 = m.w[1].shape[1], d3 = m.w[2].shape[1];
  std::vector<float> a(std::size_t(n) * d1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d1; ++j) a[std::size_t(i) * d1 + j] = m.b[0].v[j];
  matmul_acc(x, m.w[0].data(), a.data(), n, d0, d1);
  for (auto& v : a) v = v > 0.0f ? v : 0.0f;

  std::vector<float> c(std::size_t(n) * d2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d2; ++j) c[std::size_t(i) * d2 + j] = m.b[1].v[j];
  matmul_acc(a.data(), m.w[1].data(), c.data(), n, d1, d2);
  for (auto& v : c) v = v > 0.0f ? v : 0.0f;

  out.assign(std::size_t(n) * d3, 0.0f);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d3; ++j) out[std::size_t(i) * d3 + j] = m.b[2].v[j];
  matmul_acc(c.data(), m.w[2].data(), out.data(), n, d2, d3);

  if (h1) *h1 = std::move(a);
  if (h2) *h2 = std::move(c);
}

// Accumulates gradients for a block of rows previously run through
// mlp_forward with kept hiddens.
void mlp_backward(const Mlp& m, const float* x, const std::vector<float>& h1, const std::vector<float>& h2,
                  const std::vector<float>& dout, int n, MlpGrads& g) {
  const int d0 = m.w[0].shape[0], d1 = m.w[0].shape[1], d2 = m.w[1].shape[1], d3 = m.w[2].shape[1];

  // layer 3: out = h2 * W3 + b3
  {
    std::vector<float> h2t(std::size_t(d2) * n);
    transpose(h2.data(), h2t.data(), n, d2);
    matmul_acc(h2t.data(), dout.data(), g.w[2].data(), d2, n, d3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d3; ++j) g.b[2].v[j] += dout[std::size_t(i) * d3 + j];
  }
  std::vector<float> dh2(std::size_t(n) * d2, 0.0f);
  {
    std::vector<float> w3t(std::size_t(d3) * d2);
    transpose(m.w[2].data(), w3t.data(), d2, d3);
    matmul_acc(dout.data(), w3t.data(), dh2.data(), n, d3, d2);
  }
  for (std::size_t i = 0; i < dh2.size(); ++i)
    if (h2[i] <= 0.0f) dh2[i] = 0.0f;

  // layer 2
  {
    std::vector<float> h1t(std::size_t(d1) * n);
    transpose(h1.data(), h1t.data(), n, d1);
    matmul_acc(h1t.data(), dh2.data(), g.w[1].data(), d1, n, d2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d2; ++j) g.b[1].v[j] += dh2[std::size_t(i) * d2 + j];
  }
  std::vector<float> dh1(std::size_t(n) * d1, 0.0f);
  {
    std::vector<float> w2t(std::size_t(d2) * d1);
    transpose(m.w[1].data(), w2t.data(), d1, d2);
    matmul_acc(dh2.data(), w2t.data(), dh1.data(), n, d2, d1);
  }
  for (std::size_t i = 0; i < dh1.size(); ++i)
    if (h1[i] <= 0.0f) dh1[i] = 0.0f;

  // layer 1
  {
    std::vector<float> xt(std::size_t(d0) * n);
    transpose(x, xt.data(), n, d0);
    matmul_acc(xt.data(), dh1.data(), g.w[0].data(), d0, n, d1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d1; ++j) g.b[0].v[j] += dh1[std::size_t(i) * d1 + j];
  }
}

MlpGrads zero_grads(const Mlp& m) {
  MlpGrads g;
  for (int l = 0; l < 3; ++l) {
    g.w[l] = Tensor::zeros(m.w[l].shape);
    g.b[l] = Tensor::zeros(m.b[l].shape);
  }
  return g;
}

// Per-sequence standardization: every coordinate is centered across the
// window and the residuals are scaled by the window's overall value spread.
// A layer that has stopped moving maps near zero whatever its raw weight
// scale, so the convergence pattern survives the jump between architectures.
std::vector<float> standardized_rows(const Sequence& seq, int input_dim) {
  const std::size_t s = seq.size();
  std::vector<float> rows(s * std::size_t(input_dim));
  std::vector<double> coord_mean(std::size_t(input_dim), 0.0);
  double value_mean = 0.0;
  for (const auto& snap : seq)
    for (std::size_t d = 0; d < snap.size(); ++d) {
      coord_mean[d] += snap[d];
      value_mean += snap[d];
    }
  for (auto& m : coord_mean) m /= double(s);
  value_mean /= double(s) * input_dim;
  double value_var = 0.0;
  for (const auto& snap : seq)
    for (float v : snap) value_var += (v - value_mean) * (v - value_mean);
  double sd = std::sqrt(value_var / (double(s) * input_dim));
  if (sd < 1e-12) sd = 1.0;
  const double gain = 4.0 / sd;
  std::size_t o = 0;
  for (const auto& snap : seq)
    for (std::size_t d = 0; d < snap.size(); ++d) rows[o++] = float((snap[d] - coord_mean[d]) * gain);
  return rows;
}

std::vector<float> sequence_rows(const PredictorParams& p, const Sequence& seq) {
  if (seq.empty()) throw contract_error("predictor: empty sequence");
  for (const auto& s : seq)
    if (int(s.size()) != p.dims.input)
      throw contract_error("predictor: snapshot length " + std::to_string(s.size()) +
                           " does not match tailored size " + std::to_string(p.dims.input));
  if (p.standardize) return standardized_rows(seq, p.dims.input);
  std::vector<float> rows(seq.size() * std::size_t(p.dims.input));
  std::size_t o = 0;
  for (const auto& s : seq)
    for (float v : s) rows[o++] = v;
  return rows;
}

}  // namespace

PredictorParams init_predictor(const PredictorDims& dims, int window, std::uint64_t seed, bool standardize) {
  if (dims.input < 1 || dims.hidden < 1 || dims.feat < 1 || dims.z_hidden < 1)
    throw config_error("predictor dims must be positive");
  if (window < 1) throw config_error("predictor window must be >= 1");
  PredictorParams p;
  p.dims = dims;
  p.window = window;
  p.seed = seed;
  p.standardize = standardize;
  Rng root(seed);
  p.k = init_mlp(mlp_dims(dims, false), root.stream(0));
  p.q = init_mlp(mlp_dims(dims, false), root.stream(1));
  p.v = init_mlp(mlp_dims(dims, false), root.stream(2));
  p.z = init_mlp(mlp_dims(dims, true), root.stream(3));
  return p;
}

Kqv encode(const PredictorParams& p, const std::vector<float>& snapshot) {
  if (int(snapshot.size()) != p.dims.input)
    throw contract_error("encode: snapshot length does not match tailored size");
  Kqv out;
  mlp_forward(p.k, snapshot.data(), 1, nullptr, nullptr, out.k);
  mlp_forward(p.q, snapshot.data(), 1, nullptr, nullptr, out.q);
  mlp_forward(p.v, snapshot.data(), 1, nullptr, nullptr, out.v);
  return out;
}

std::vector<float> softmax(const std::vector<float>& scores) {
  if (scores.empty()) throw contract_error("softmax: empty scores");
  float mx = scores[0];
  for (float s : scores) mx = std::max(mx, s);
  double denom = 0.0;
  std::vector<double> e(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    e[i] = std::exp(double(scores[i] - mx));
    denom += e[i];
  }
  std::vector<float> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = float(e[i] / denom);
  return out;
}

AttendOut attend_kqv(const std::vector<std::vector<float>>& keys, const std::vector<float>& query,
                     const std::vector<std::vector<float>>& values) {
  if (keys.empty() || keys.size() != values.size()) throw contract_error("attend: key/value shape mismatch");
  const std::size_t feat = query.size();
  std::vector<float> scores(keys.size());
  for (std::size_t j = 0; j < keys.size(); ++j) {
    if (keys[j].size() != feat) throw contract_error("attend: key width mismatch");
    float acc = 0.0f;
    for (std::size_t i = 0; i < feat; ++i) acc += query[i] * keys[j][i];
    scores[j] = acc;  // unscaled dot product
  }
  AttendOut out;
  out.alphas = softmax(scores);
  out.context.assign(values[0].size(), 0.0f);
  for (std::size_t j = 0; j < values.size(); ++j)
    for (std::size_t i = 0; i < out.context.size(); ++i) out.context[i] += out.alphas[j] * values[j][i];
  return out;
}

AttendOut attend(const PredictorParams& p, const Sequence& seq) {
  std::vector<float> rows = sequence_rows(p, seq);
  const int s = int(seq.size());
  const int feat = p.dims.feat;
  std::vector<float> keys, queries, values;
  mlp_forward(p.k, rows.data(), s, nullptr, nullptr, keys);
  mlp_forward(p.q, rows.data(), s, nullptr, nullptr, queries);
  mlp_forward(p.v, rows.data(), s, nullptr, nullptr, values);

  std::vector<std::vector<float>> kf(s), vf(s);
  for (int j = 0; j < s; ++j) {
    kf[j].assign(keys.begin() + std::size_t(j) * feat, keys.begin() + std::size_t(j + 1) * feat);
    vf[j].assign(values.begin() + std::size_t(j) * feat, values.begin() + std::size_t(j + 1) * feat);
  }
  std::vector<float> q(queries.end() - feat, queries.end());
  return attend_kqv(kf, q, vf);
}

DecisionTrace decide(const PredictorParams& p, const Sequence& seq) {
  AttendOut a = attend(p, seq);
  std::vector<float> logits;
  mlp_forward(p.z, a.context.data(), 1, nullptr, nullptr, logits);
  std::vector<float> conf = softmax(logits);
  DecisionTrace t;
  t.alphas = std::move(a.alphas);
  t.context = std::move(a.context);
  t.confidence = {conf[0], conf[1]};
  t.decision = conf[1] > conf[0] ? 1 : 0;  // tie keeps training
  return t;
}

std::int64_t predictor_flops(const PredictorDims& d, int seq_len) {
  if (seq_len < 1) throw contract_error("predictor_flops: sequence length must be >= 1");
  const std::int64_t enc = 2LL * (std::int64_t(d.input) * d.hidden + std::int64_t(d.hidden) * d.hidden +
                                  std::int64_t(d.hidden) * d.feat);
  const std::int64_t head = 2LL * (std::int64_t(d.feat) * d.z_hidden +
                                   std::int64_t(d.z_hidden) * d.z_hidden + std::int64_t(d.z_hidden) * 2);
  // per timestamp: three encoder passes, one score dot product, one
  // context accumulation
  return std::int64_t(seq_len) * (3 * enc + 4LL * d.feat) + head;
}

std::pair<float, PredictorGrads> predictor_grad(const PredictorParams& p, const TrainRecord& rec,
                                                float weight0, float weight1) {
  if (weight0 <= 0.0f || weight1 <= 0.0f) throw config_error("class weights must be positive");
  if (rec.label > 1) throw contract_error("record label must be 0 or 1");
  const Sequence& seq = rec.sequence;
  std::vector<float> rows = sequence_rows(p, seq);
  const int s = int(seq.size());
  const int feat = p.dims.feat;

  // forward with caches; the query is only needed at the last timestamp and
  // earlier queries carry no gradient
  std::vector<float> kh1, kh2, keys, vh1, vh2, values, qh1, qh2, query;
  mlp_forward(p.k, rows.data(), s, &kh1, &kh2, keys);
  mlp_forward(p.v, rows.data(), s, &vh1, &vh2, values);
  const float* last_row = rows.data() + std::size_t(s - 1) * p.dims.input;
  mlp_forward(p.q, last_row, 1, &qh1, &qh2, query);

  // softmax and its jacobian run in double: saturated attention turns the
  // backward into differences of nearly equal terms that float32 cannot hold
  std::vector<double> scores(std::size_t(s), 0.0);
  for (int j = 0; j < s; ++j) {
    float acc = 0.0f;
    for (int i = 0; i < feat; ++i) acc += query[std::size_t(i)] * keys[std::size_t(j) * feat + i];
    scores[std::size_t(j)] = acc;
  }
  double smax = scores[0];
  for (double v : scores) smax = std::max(smax, v);
  std::vector<double> alphas(static_cast<std::size_t>(s));
  double sdenom = 0.0;
  for (int j = 0; j < s; ++j) {
    alphas[std::size_t(j)] = std::exp(scores[std::size_t(j)] - smax);
    sdenom += alphas[std::size_t(j)];
  }
  for (auto& a : alphas) a /= sdenom;
  std::vector<float> context(std::size_t(feat), 0.0f);
  for (int i = 0; i < feat; ++i) {
    double acc = 0.0;
    for (int j = 0; j < s; ++j) acc += alphas[std::size_t(j)] * values[std::size_t(j) * feat + i];
    context[std::size_t(i)] = float(acc);
  }

  std::vector<float> zh1, zh2, logits;
  mlp_forward(p.z, context.data(), 1, &zh1, &zh2, logits);
  std::vector<float> conf = softmax(logits);

  const int y = rec.label;
  const float wy = y == 0 ? weight0 : weight1;
  const float py = std::max(conf[std::size_t(y)], 1e-30f);
  const float loss = -wy * std::log(py);

  PredictorGrads g;
  g.k = zero_grads(p.k);
  g.q = zero_grads(p.q);
  g.v = zero_grads(p.v);
  g.z = zero_grads(p.z);

  // d loss / d logits for weighted cross-entropy
  std::vector<float> dlogits = {wy * (conf[0] - (y == 0 ? 1.0f : 0.0f)),
                                wy * (conf[1] - (y == 1 ? 1.0f : 0.0f))};
  mlp_backward(p.z, context.data(), zh1, zh2, dlogits, 1, g.z);

  // d loss / d context
  std::vector<float> dcontext(std::size_t(feat), 0.0f);
  {
    std::vector<float> w3t(std::size_t(p.z.w[2].shape[1]) * p.z.w[2].shape[0]);
    transpose(p.z.w[2].data(), w3t.data(), p.z.w[2].shape[0], p.z.w[2].shape[1]);
    std::vector<float> dzh2(zh2.size(), 0.0f);
    matmul_acc(dlogits.data(), w3t.data(), dzh2.data(), 1, 2, p.z.w[2].shape[0]);
    for (std::size_t i = 0; i < dzh2.size(); ++i)
      if (zh2[i] <= 0.0f) dzh2[i] = 0.0f;
    std::vector<float> w2t(std::size_t(p.z.w[1].shape[1]) * p.z.w[1].shape[0]);
    transpose(p.z.w[1].data(), w2t.data(), p.z.w[1].shape[0], p.z.w[1].shape[1]);
    std::vector<float> dzh1(zh1.size(), 0.0f);
    matmul_acc(dzh2.data(), w2t.data(), dzh1.data(), 1, p.z.w[1].shape[1], p.z.w[1].shape[0]);
    for (std::size_t i = 0; i < dzh1.size(); ++i)
      if (zh1[i] <= 0.0f) dzh1[i] = 0.0f;
    std::vector<float> w1t(std::size_t(p.z.w[0].shape[1]) * p.z.w[0].shape[0]);
    transpose(p.z.w[0].data(), w1t.data(), p.z.w[0].shape[0], p.z.w[0].shape[1]);
    matmul_acc(dzh1.data(), w1t.data(), dcontext.data(), 1, p.z.w[0].shape[1], p.z.w[0].shape[0]);
  }

  // attention backward, in double for the same conditioning reason
  std::vector<float> dvalues(values.size(), 0.0f);
  std::vector<double> dalpha(static_cast<std::size_t>(s), 0.0);
  for (int j = 0; j < s; ++j) {
    double da = 0.0;
    for (int i = 0; i < feat; ++i) {
      dvalues[std::size_t(j) * feat + i] = float(alphas[std::size_t(j)] * dcontext[std::size_t(i)]);
      da += double(values[std::size_t(j) * feat + i]) * dcontext[std::size_t(i)];
    }
    dalpha[std::size_t(j)] = da;
  }
  double dot = 0.0;
  for (int j = 0; j < s; ++j) dot += alphas[std::size_t(j)] * dalpha[std::size_t(j)];
  std::vector<double> dscores(static_cast<std::size_t>(s));
  for (int j = 0; j < s; ++j) dscores[std::size_t(j)] = alphas[std::size_t(j)] * (dalpha[std::size_t(j)] - dot);

  std::vector<float> dkeys(keys.size(), 0.0f);
  std::vector<double> dquery_d(std::size_t(feat), 0.0);
  for (int j = 0; j < s; ++j) {
    const double ds = dscores[std::size_t(j)];
    for (int i = 0; i < feat; ++i) {
      dkeys[std::size_t(j) * feat + i] = float(ds * query[std::size_t(i)]);
      dquery_d[std::size_t(i)] += ds * keys[std::size_t(j) * feat + i];
    }
  }
  std::vector<float> dquery(static_cast<std::size_t>(feat));
  for (int i = 0; i < feat; ++i) dquery[std::size_t(i)] = float(dquery_d[std::size_t(i)]);

  mlp_backward(p.k, rows.data(), kh1, kh2, dkeys, s, g.k);
  mlp_backward(p.v, rows.data(), vh1, vh2, dvalues, s, g.v);
  mlp_backward(p.q, last_row, qh1, qh2, dquery, 1, g.q);

  return {loss, std::move(g)};
}

namespace {

void sgd_mlp(Mlp& m, MlpGrads& mom, const MlpGrads& g, double lr, double momentum, double scale) {
  for (int l = 0; l < 3; ++l) {
    for (std::size_t i = 0; i < m.w[l].v.size(); ++i) {
      mom.w[l].v[i] = float(momentum * mom.w[l].v[i] + g.w[l].v[i] * scale);
      m.w[l].v[i] = float(m.w[l].v[i] - lr * mom.w[l].v[i]);
    }
    for (std::size_t i = 0; i < m.b[l].v.size(); ++i) {
      mom.b[l].v[i] = float(momentum * mom.b[l].v[i] + g.b[l].v[i] * scale);
      m.b[l].v[i] = float(m.b[l].v[i] - lr * mom.b[l].v[i]);
    }
  }
}

void add_grads(PredictorGrads& acc, const PredictorGrads& g) {
  auto add = [](MlpGrads& a, const MlpGrads& b) {
    for (int l = 0; l < 3; ++l) {
      for (std::size_t i = 0; i < a.w[l].v.size(); ++i) a.w[l].v[i] += b.w[l].v[i];
      for (std::size_t i = 0; i < a.b[l].v.size(); ++i) a.b[l].v[i] += b.b[l].v[i];
    }
  };
  add(acc.k, g.k);
  add(acc.q, g.q);
  add(acc.v, g.v);
  add(acc.z, g.z);
}

}  // namespace

double balanced_accuracy(const PredictorParams& p, const std::vector<TrainRecord>& records) {
  std::array<int, 2> total{0, 0}, correct{0, 0};
  for (const TrainRecord& r : records) {
    DecisionTrace t = decide(p, r.sequence);
    ++total[r.label];
    if (t.decision == int(r.label)) ++correct[r.label];
  }
  double acc = 0.0;
  int classes = 0;
  for (int c = 0; c < 2; ++c) {
    if (total[std::size_t(c)] == 0) continue;
    acc += double(correct[std::size_t(c)]) / total[std::size_t(c)];
    ++classes;
  }
  if (classes == 0) throw contract_error("balanced_accuracy: no records");
  return acc / classes;
}

PredictorParams train_predictor(const std::vector<TrainRecord>& dataset, const PredictorTrainConfig& cfg) {
  if (cfg.lr < 0.0) throw config_error("predictor lr must be nonnegative");
  if (dataset.empty()) throw run_error("predictor dataset is empty");
  std::array<std::vector<int>, 2> by_class;
  for (int i = 0; i < int(dataset.size()); ++i) {
    const TrainRecord& r = dataset[std::size_t(i)];
    if (r.label > 1) throw run_error("predictor dataset: label must be 0 or 1");
    if (r.sequence.empty() || int(r.sequence.size()) > cfg.window)
      throw run_error("predictor dataset: sequence length outside [1, window]");
    by_class[r.label].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty())
    throw run_error("predictor dataset must contain both classes");

  Rng root(cfg.seed);

  // stratified seeded holdout
  std::vector<int> train_idx, hold_idx;
  for (int c = 0; c < 2; ++c) {
    std::vector<int> idx = by_class[std::size_t(c)];
    Rng r = root.stream(100 + std::uint64_t(c));
    r.shuffle(idx);
    int nh = int(cfg.holdout_fraction * double(idx.size()));
    if (int(idx.size()) >= 2) nh = std::max(1, nh);
    nh = std::min(nh, int(idx.size()) - 1);
    if (nh < 0) nh = 0;
    for (int i = 0; i < int(idx.size()); ++i) (i < nh ? hold_idx : train_idx).push_back(idx[std::size_t(i)]);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(hold_idx.begin(), hold_idx.end());

  double w0 = cfg.class_weight_0, w1 = cfg.class_weight_1;
  if (w0 <= 0.0 || w1 <= 0.0) {
    double n = double(dataset.size());
    w0 = n / (2.0 * double(by_class[0].size()));
    w1 = n / (2.0 * double(by_class[1].size()));
  }

  PredictorParams params = init_predictor(cfg.dims, cfg.window, root.stream(0).next_u64(), cfg.standardize);
  PredictorGrads mom;
  mom.k = zero_grads(params.k);
  mom.q = zero_grads(params.q);
  mom.v = zero_grads(params.v);
  mom.z = zero_grads(params.z);

  std::vector<TrainRecord> holdout;
  for (int i : hold_idx) holdout.push_back(dataset[std::size_t(i)]);

  PredictorParams best = params;
  double best_acc = holdout.empty() ? 0.0 : balanced_accuracy(params, holdout);

  Rng order_rng = root.stream(7);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = train_idx;
    order_rng.shuffle(order);
    for (std::size_t off = 0; off < order.size(); off += std::size_t(cfg.batch_size)) {
      std::size_t end = std::min(order.size(), off + std::size_t(cfg.batch_size));
      PredictorGrads acc;
      acc.k = zero_grads(params.k);
      acc.q = zero_grads(params.q);
      acc.v = zero_grads(params.v);
      acc.z = zero_grads(params.z);
      for (std::size_t i = off; i < end; ++i) {
        auto [loss, g] = predictor_grad(params, dataset[std::size_t(order[i])], float(w0), float(w1));
        add_grads(acc, g);
      }
      double scale = 1.0 / double(end - off);
      sgd_mlp(params.k, mom.k, acc.k, cfg.lr, cfg.momentum, scale);
      sgd_mlp(params.q, mom.q, acc.q, cfg.lr, cfg.momentum, scale);
      sgd_mlp(params.v, mom.v, acc.v, cfg.lr, cfg.momentum, scale);
      sgd_mlp(params.z, mom.z, acc.z, cfg.lr, cfg.momentum, scale);
    }
    if (!holdout.empty()) {
      double acc_now = balanced_accuracy(params, holdout);
      if (acc_now > best_acc) {
        best_acc = acc_now;
        best = params;
      }
    } else {
      best = params;
    }
  }
  return best;
}

namespace {

const char* mlp_name(int i) {
  switch (i) {
    case 0: return "k";
    case 1: return "q";
    case 2: return "v";
    default: return "z";
  }
}

}  // namespace

void save_predictor(const PredictorParams& p, const std::string& path) {
  TensorPack pack;
  const Mlp* mlps[4] = {&p.k, &p.q, &p.v, &p.z};
  for (int i = 0; i < 4; ++i)
    for (int l = 0; l < 3; ++l) {
      pack.add(std::string(mlp_name(i)) + ".w" + std::to_string(l), mlps[i]->w[l]);
      pack.add(std::string(mlp_name(i)) + ".b" + std::to_string(l), mlps[i]->b[l]);
    }
  nlohmann::json header;
  header["kind"] = "predictor";
  header["tailored_size"] = p.dims.input;
  header["window"] = p.window;
  header["standardize"] = p.standardize;
  header["seed"] = p.seed;
  header["dims"] = {{"input", p.dims.input},
                    {"hidden", p.dims.hidden},
                    {"feat", p.dims.feat},
                    {"z_hidden", p.dims.z_hidden}};
  write_container(path, header, pack);
}

PredictorParams load_predictor(const std::string& path, int expected_tailored_size) {
  Container c = read_container(path);
  if (c.header.value("kind", "") != "predictor")
    throw format_error("not a predictor file: " + path);
  PredictorParams p;
  const auto& d = c.header.at("dims");
  p.dims.input = d.at("input").get<int>();
  p.dims.hidden = d.at("hidden").get<int>();
  p.dims.feat = d.at("feat").get<int>();
  p.dims.z_hidden = d.at("z_hidden").get<int>();
  p.window = c.header.at("window").get<int>();
  p.standardize = c.header.value("standardize", false);
  p.seed = c.header.value("seed", std::uint64_t(0));
  if (expected_tailored_size >= 0 && p.dims.input != expected_tailored_size)
    throw format_error("predictor tailored size " + std::to_string(p.dims.input) +
                       " does not match configured size " + std::to_string(expected_tailored_size));
  TensorPack pack = TensorPack::from_container(c);
  Mlp* mlps[4] = {&p.k, &p.q, &p.v, &p.z};
  for (int i = 0; i < 4; ++i)
    for (int l = 0; l < 3; ++l) {
      mlps[i]->w[l] = pack.take(std::string(mlp_name(i)) + ".w" + std::to_string(l));
      mlps[i]->b[l] = pack.take(std::string(mlp_name(i)) + ".b" + std::to_string(l));
    }
  return p;
}

}  // namespace frz
