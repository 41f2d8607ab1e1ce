#pragma once

// Test-only oracles: straight-line double-precision re-implementations of
// the forward math plus finite-difference machinery. Deliberately written
// without any of the library's caching/masking logic so they stay an
// independent check on it.

#include <cmath>
#include <vector>

#include "frz/cost.hpp"
#include "frz/network.hpp"
#include "frz/predictor.hpp"
#include "frz/rng.hpp"

namespace oracle {

// Walks the backward graph op by op: the weight-gradient op of a layer runs
// iff its unit is unfrozen; the activation-gradient op runs iff an unfrozen
// parametric layer exists below it. Sums the cost of whatever runs.
inline frz::IterationCost walk_backward(const std::vector<frz::LayerCost>& costs,
                                        const frz::FreezeMask& mask) {
  frz::IterationCost out;
  for (const frz::LayerCost& c : costs) out.fwd_flops += c.fwd_flops;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    bool any_unfrozen_below = false;
    for (std::size_t j = 0; j < i; ++j)
      if (costs[j].has_params && !mask.is_frozen(costs[j].unit_id)) any_unfrozen_below = true;
    const bool wgrad_runs = costs[i].has_params && !mask.is_frozen(costs[i].unit_id);
    const bool agrad_runs = costs[i].has_params && any_unfrozen_below;
    if (wgrad_runs) {
      out.bwd_flops += costs[i].wgrad_flops;
      out.act_bytes += costs[i].act_bytes;
    }
    if (agrad_runs) out.bwd_flops += costs[i].agrad_flops;
    if (costs[i].input_gates_agrad && any_unfrozen_below) out.act_bytes += costs[i].act_bytes;
  }
  return out;
}

// Gram-Schmidt orthogonalization of a random square matrix, in double.
inline std::vector<double> random_orthogonal(int d, frz::Rng& rng) {
  std::vector<double> q(std::size_t(d) * d);
  for (auto& v : q) v = rng.gauss(0.0, 1.0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += q[std::size_t(i) * d + k] * q[std::size_t(j) * d + k];
      for (int k = 0; k < d; ++k) q[std::size_t(i) * d + k] -= dot * q[std::size_t(j) * d + k];
    }
    double norm = 0.0;
    for (int k = 0; k < d; ++k) norm += q[std::size_t(i) * d + k] * q[std::size_t(i) * d + k];
    norm = std::sqrt(norm);
    for (int k = 0; k < d; ++k) q[std::size_t(i) * d + k] /= norm;
  }
  return q;
}

struct DUnit {
  std::vector<double> w, b, gamma, beta;
  bool has_norm = false;
};

struct DNet {
  std::vector<frz::LayerSpec> spec;
  std::vector<int> unit_of_layer;
  std::vector<frz::Shape> shapes;
  std::vector<DUnit> units;
};

inline DNet to_double(const frz::NetworkState& st) {
  DNet d;
  d.spec = st.spec;
  d.unit_of_layer = st.unit_of_layer;
  d.shapes = st.shapes;
  d.units.resize(st.params.size());
  for (std::size_t u = 0; u < st.params.size(); ++u) {
    const frz::UnitTensors& p = st.params[u];
    d.units[u].w.assign(p.weight.v.begin(), p.weight.v.end());
    d.units[u].b.assign(p.bias.v.begin(), p.bias.v.end());
    d.units[u].has_norm = p.has_norm;
    if (p.has_norm) {
      d.units[u].gamma.assign(p.gamma.v.begin(), p.gamma.v.end());
      d.units[u].beta.assign(p.beta.v.begin(), p.beta.v.end());
    }
  }
  return d;
}

// forward pass for one batch; also reports the smallest |relu input| seen so
// finite-difference checks can dodge kinks
inline std::vector<double> net_logits(const DNet& net, const std::vector<double>& input, int batch,
                                      double* min_relu_abs = nullptr) {
  std::vector<double> cur = input;
  if (min_relu_abs) *min_relu_abs = 1e300;
  for (std::size_t li = 0; li < net.spec.size(); ++li) {
    const frz::LayerSpec& l = net.spec[li];
    const frz::Shape& in_s = net.shapes[li];
    const frz::Shape& out_s = net.shapes[li + 1];
    const int unit = net.unit_of_layer[li];
    std::vector<double> next(std::size_t(batch) * frz::elem_count(out_s), 0.0);
    switch (l.kind) {
      case frz::LayerSpec::Kind::Dense: {
        const DUnit& u = net.units[std::size_t(unit)];
        for (int b = 0; b < batch; ++b)
          for (int o = 0; o < l.out_features; ++o) {
            double acc = u.b[std::size_t(o)];
            for (int i = 0; i < l.in_features; ++i)
              acc += cur[std::size_t(b) * l.in_features + i] * u.w[std::size_t(i) * l.out_features + o];
            next[std::size_t(b) * l.out_features + o] = acc;
          }
        break;
      }
      case frz::LayerSpec::Kind::Conv2d: {
        const DUnit& u = net.units[std::size_t(unit)];
        const int cin = in_s[0], ih = in_s[1], iw = in_s[2];
        const int cout = out_s[0], oh = out_s[1], ow = out_s[2];
        for (int b = 0; b < batch; ++b)
          for (int oc = 0; oc < cout; ++oc)
            for (int y = 0; y < oh; ++y)
              for (int x = 0; x < ow; ++x) {
                double acc = u.b[std::size_t(oc)];
                for (int ic = 0; ic < cin; ++ic)
                  for (int ky = 0; ky < l.kernel; ++ky)
                    for (int kx = 0; kx < l.kernel; ++kx) {
                      int yy = y * l.stride - l.padding + ky;
                      int xx = x * l.stride - l.padding + kx;
                      if (yy < 0 || yy >= ih || xx < 0 || xx >= iw) continue;
                      acc += cur[((std::size_t(b) * cin + ic) * ih + yy) * iw + xx] *
                             u.w[((std::size_t(oc) * cin + ic) * l.kernel + ky) * l.kernel + kx];
                    }
                next[((std::size_t(b) * cout + oc) * oh + y) * ow + x] = acc;
              }
        break;
      }
      case frz::LayerSpec::Kind::Norm: {
        const DUnit& u = net.units[std::size_t(unit)];
        const int ch = in_s[0];
        const std::int64_t plane = in_s.size() == 3 ? std::int64_t(in_s[1]) * in_s[2] : 1;
        for (int b = 0; b < batch; ++b)
          for (int c = 0; c < ch; ++c)
            for (std::int64_t i = 0; i < plane; ++i) {
              std::size_t idx = (std::size_t(b) * ch + c) * plane + i;
              next[idx] = u.gamma[std::size_t(c)] * cur[idx] + u.beta[std::size_t(c)];
            }
        break;
      }
      case frz::LayerSpec::Kind::ReLU: {
        for (std::size_t i = 0; i < cur.size(); ++i) {
          if (min_relu_abs) *min_relu_abs = std::min(*min_relu_abs, std::abs(cur[i]));
          next[i] = cur[i] > 0.0 ? cur[i] : 0.0;
        }
        break;
      }
      case frz::LayerSpec::Kind::Flatten:
        next = cur;
        break;
    }
    cur = std::move(next);
  }
  return cur;
}

inline double net_loss(const DNet& net, const std::vector<double>& input, const std::vector<int>& labels,
                       int batch, double* min_relu_abs = nullptr) {
  std::vector<double> logits = net_logits(net, input, batch, min_relu_abs);
  const int classes = int(logits.size()) / batch;
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double* row = logits.data() + std::size_t(b) * classes;
    double mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(row[c] - mx);
    total += std::log(denom) + mx - row[labels[std::size_t(b)]];
  }
  return total / batch;
}

// central finite differences of net_loss with respect to one tensor of one
// unit, on the 64-bit shadow copy
inline std::vector<double> fd_grad(DNet net, int unit, std::vector<double> DUnit::* field,
                                   const std::vector<double>& input, const std::vector<int>& labels,
                                   int batch, double h = 1e-4) {
  std::vector<double>& theta = net.units[std::size_t(unit)].*field;
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    const double up = net_loss(net, input, labels, batch);
    theta[i] = keep - h;
    const double dn = net_loss(net, input, labels, batch);
    theta[i] = keep;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

// norm-wise relative error between an analytic float gradient and a double
// reference
inline double rel_err(const std::vector<float>& a, const std::vector<double>& b) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double d = double(a[i]) - b[i];
    num += d * d;
    na += double(a[i]) * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nb));
  if (denom < 1e-12) return std::sqrt(num);
  return std::sqrt(num) / denom;
}

// Mixed-tolerance gradient comparison. Tensors whose true gradient sits at
// the float32 noise floor of the forward pass (softmax cancellations leave
// absolute crumbs of ~1e-7) are judged by absolute error instead; anything
// structurally wrong exceeds both bounds.
inline bool grad_close(const std::vector<float>& analytic, const std::vector<double>& fd,
                       double rtol = 1e-4, double atol = 1e-5) {
  if (rel_err(analytic, fd) < rtol) return true;
  double num = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double d = double(analytic[i]) - fd[i];
    num += d * d;
  }
  return std::sqrt(num) < atol;
}

// ---- predictor oracle ------------------------------------------------

struct DMlp {
  std::vector<std::vector<double>> w;  // (in,out) row-major, 3 layers
  std::vector<std::vector<double>> b;
  std::vector<int> dims;  // 4 entries
};

inline DMlp to_double(const frz::Mlp& m) {
  DMlp d;
  d.w.resize(3);
  d.b.resize(3);
  d.dims = {m.w[0].shape[0], m.w[0].shape[1], m.w[1].shape[1], m.w[2].shape[1]};
  for (int l = 0; l < 3; ++l) {
    d.w[std::size_t(l)].assign(m.w[std::size_t(l)].v.begin(), m.w[std::size_t(l)].v.end());
    d.b[std::size_t(l)].assign(m.b[std::size_t(l)].v.begin(), m.b[std::size_t(l)].v.end());
  }
  return d;
}

struct DPredictor {
  DMlp k, q, v, z;
  bool standardize = false;
  double* min_relu_abs = nullptr;  // scratch for kink detection
};

inline DPredictor to_double(const frz::PredictorParams& p) {
  DPredictor d;
  d.k = to_double(p.k);
  d.q = to_double(p.q);
  d.v = to_double(p.v);
  d.z = to_double(p.z);
  d.standardize = p.standardize;
  return d;
}

inline std::vector<double> dmlp_forward(const DMlp& m, const std::vector<double>& x,
                                        double* min_relu_abs) {
  std::vector<double> cur = x;
  for (int l = 0; l < 3; ++l) {
    const int in = m.dims[std::size_t(l)], out = m.dims[std::size_t(l) + 1];
    std::vector<double> next(static_cast<std::size_t>(out));
    for (int o = 0; o < out; ++o) {
      double acc = m.b[std::size_t(l)][std::size_t(o)];
      for (int i = 0; i < in; ++i) acc += cur[std::size_t(i)] * m.w[std::size_t(l)][std::size_t(i) * out + o];
      next[std::size_t(o)] = acc;
    }
    if (l < 2) {
      for (auto& v : next) {
        if (min_relu_abs) *min_relu_abs = std::min(*min_relu_abs, std::abs(v));
        v = v > 0.0 ? v : 0.0;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

inline double predictor_loss(const DPredictor& p, const frz::TrainRecord& rec, double w0, double w1,
                             double* min_relu_abs = nullptr) {
  const std::size_t s = rec.sequence.size();
  std::vector<std::vector<double>> rows(s);
  for (std::size_t j = 0; j < s; ++j)
    rows[j].assign(rec.sequence[j].begin(), rec.sequence[j].end());
  if (p.standardize) {
    const std::size_t dim = rows[0].size();
    std::vector<double> coord_mean(dim, 0.0);
    double value_mean = 0.0;
    for (const auto& r : rows)
      for (std::size_t d = 0; d < dim; ++d) {
        coord_mean[d] += r[d];
        value_mean += r[d];
      }
    for (auto& m : coord_mean) m /= double(s);
    value_mean /= double(s) * double(dim);
    double var = 0.0;
    for (const auto& r : rows)
      for (double v : r) var += (v - value_mean) * (v - value_mean);
    double sd = std::sqrt(var / (double(s) * double(dim)));
    if (sd < 1e-12) sd = 1.0;
    const double gain = 4.0 / sd;
    for (auto& r : rows)
      for (std::size_t d = 0; d < dim; ++d) r[d] = (r[d] - coord_mean[d]) * gain;
  }

  std::vector<std::vector<double>> keys(s), values(s);
  for (std::size_t j = 0; j < s; ++j) {
    keys[j] = dmlp_forward(p.k, rows[j], min_relu_abs);
    values[j] = dmlp_forward(p.v, rows[j], min_relu_abs);
  }
  std::vector<double> query = dmlp_forward(p.q, rows[s - 1], min_relu_abs);

  std::vector<double> scores(s, 0.0);
  for (std::size_t j = 0; j < s; ++j)
    for (std::size_t i = 0; i < query.size(); ++i) scores[j] += query[i] * keys[j][i];
  double mx = scores[0];
  for (double v : scores) mx = std::max(mx, v);
  double denom = 0.0;
  for (double v : scores) denom += std::exp(v - mx);
  std::vector<double> alphas(s);
  for (std::size_t j = 0; j < s; ++j) alphas[j] = std::exp(scores[j] - mx) / denom;

  std::vector<double> context(query.size(), 0.0);
  for (std::size_t j = 0; j < s; ++j)
    for (std::size_t i = 0; i < context.size(); ++i) context[i] += alphas[j] * values[j][i];

  std::vector<double> logits = dmlp_forward(p.z, context, min_relu_abs);
  double lmx = std::max(logits[0], logits[1]);
  double lden = std::exp(logits[0] - lmx) + std::exp(logits[1] - lmx);
  double logp = logits[std::size_t(rec.label)] - lmx - std::log(lden);
  return -(rec.label ? w1 : w0) * logp;
}

inline std::vector<double> fd_predictor_grad(DPredictor p, DMlp DPredictor::* mlp, int layer, bool bias,
                                             const frz::TrainRecord& rec, double w0, double w1,
                                             double h = 1e-4) {
  std::vector<double>& theta = bias ? (p.*mlp).b[std::size_t(layer)] : (p.*mlp).w[std::size_t(layer)];
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    const double up = predictor_loss(p, rec, w0, w1);
    theta[i] = keep - h;
    const double dn = predictor_loss(p, rec, w0, w1);
    theta[i] = keep;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle
