#include "frz/network.hpp"

#include <algorithm>
#include <cmath>

#include "frz/rng.hpp"

namespace frz {

std::vector<const Tensor*> unit_tensor_list(const UnitTensors& u) {
  std::vector<const Tensor*> out{&u.weight, &u.bias};
  if (u.has_norm) {
    out.push_back(&u.gamma);
    out.push_back(&u.beta);
  }
  return out;
}

std::vector<Tensor*> unit_tensor_list(UnitTensors& u) {
  std::vector<Tensor*> out{&u.weight, &u.bias};
  if (u.has_norm) {
    out.push_back(&u.gamma);
    out.push_back(&u.beta);
  }
  return out;
}

int argmax_lowest(const float* p, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

static void fill_kaiming_uniform(Tensor& t, int fan_in, Rng rng) {
  double bound = std::sqrt(6.0 / double(fan_in));
  for (auto& x : t.v) x = float(rng.uniform(-bound, bound));
}

NetworkState build_network(const std::vector<LayerSpec>& spec, const std::vector<FreezeUnit>& units,
                           std::uint64_t seed, const Shape& input_shape) {
  NetworkState st;
  st.spec = spec;
  st.units = units;
  st.seed = seed;
  st.input_shape = input_shape;
  st.shapes = infer_shapes(spec, input_shape);
  validate_units(spec, units);

  st.unit_of_layer.assign(spec.size(), -1);
  for (const FreezeUnit& u : units)
    for (int li : u.layer_indices) st.unit_of_layer[li] = u.unit_id;

  Rng root(seed);
  st.params.resize(units.size());
  st.momentum.resize(units.size());
  for (const FreezeUnit& u : units) {
    const LayerSpec& anchor = spec[u.layer_indices.front()];
    UnitTensors& p = st.params[u.unit_id];
    if (anchor.kind == LayerSpec::Kind::Dense) {
      // weight stored (in, out) so the forward pass is a plain matmul
      p.weight = Tensor::zeros({anchor.in_features, anchor.out_features});
      p.bias = Tensor::zeros({anchor.out_features});
      fill_kaiming_uniform(p.weight, anchor.in_features, root.stream(u.unit_id * 4 + 0));
    } else {
      p.weight = Tensor::zeros({anchor.out_channels, anchor.in_channels, anchor.kernel, anchor.kernel});
      p.bias = Tensor::zeros({anchor.out_channels});
      fill_kaiming_uniform(p.weight, anchor.in_channels * anchor.kernel * anchor.kernel,
                           root.stream(u.unit_id * 4 + 0));
    }
    if (u.layer_indices.size() > 1) {
      int ch = spec[u.layer_indices[1]].channels;
      p.has_norm = true;
      p.gamma = Tensor::zeros({ch});
      p.beta = Tensor::zeros({ch});
      std::fill(p.gamma.v.begin(), p.gamma.v.end(), 1.0f);
    }
    UnitTensors& m = st.momentum[u.unit_id];
    m.weight = Tensor::zeros(p.weight.shape);
    m.bias = Tensor::zeros(p.bias.shape);
    m.has_norm = p.has_norm;
    if (p.has_norm) {
      m.gamma = Tensor::zeros(p.gamma.shape);
      m.beta = Tensor::zeros(p.beta.shape);
    }
  }
  return st;
}

namespace {

struct LayerIo {
  const LayerSpec* l = nullptr;
  Shape in_shape, out_shape;
  int unit = -1;
};

std::vector<LayerIo> layer_io(const NetworkState& st) {
  std::vector<LayerIo> io(st.spec.size());
  for (int i = 0; i < int(st.spec.size()); ++i) {
    io[i].l = &st.spec[i];
    io[i].in_shape = st.shapes[i];
    io[i].out_shape = st.shapes[i + 1];
    io[i].unit = st.unit_of_layer[i];
  }
  return io;
}

void dense_forward(const Tensor& x, const UnitTensors& p, Tensor& y, int batch) {
  int in = p.weight.shape[0], out = p.weight.shape[1];
  for (int b = 0; b < batch; ++b) {
    float* yr = y.data() + std::size_t(b) * out;
    for (int j = 0; j < out; ++j) yr[j] = p.bias.v[j];
  }
  matmul_acc(x.data(), p.weight.data(), y.data(), batch, in, out);
}

void conv_forward(const Tensor& x, const LayerSpec& l, const UnitTensors& p, Tensor& y, int batch,
                  const Shape& in_shape, const Shape& out_shape) {
  const int cin = in_shape[0], ih = in_shape[1], iw = in_shape[2];
  const int cout = out_shape[0], oh = out_shape[1], ow = out_shape[2];
  const int k = l.kernel, s = l.stride, pad = l.padding;
  const std::int64_t in_plane = std::int64_t(ih) * iw;
  const std::int64_t out_plane = std::int64_t(oh) * ow;
  for (int b = 0; b < batch; ++b) {
    const float* xb = x.data() + std::size_t(b) * cin * in_plane;
    float* yb = y.data() + std::size_t(b) * cout * out_plane;
    for (int oc = 0; oc < cout; ++oc) {
      const float* wq = p.weight.data() + std::size_t(oc) * cin * k * k;
      const float bias = p.bias.v[oc];
      float* yp = yb + std::size_t(oc) * out_plane;
      for (int y0 = 0; y0 < oh; ++y0) {
        for (int x0 = 0; x0 < ow; ++x0) {
          float acc = bias;
          const int hy = y0 * s - pad, hx = x0 * s - pad;
          for (int ic = 0; ic < cin; ++ic) {
            const float* xp = xb + std::size_t(ic) * in_plane;
            const float* wr = wq + std::size_t(ic) * k * k;
            for (int ky = 0; ky < k; ++ky) {
              const int yy = hy + ky;
              if (yy < 0 || yy >= ih) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int xx = hx + kx;
                if (xx < 0 || xx >= iw) continue;
                acc += xp[std::size_t(yy) * iw + xx] * wr[ky * k + kx];
              }
            }
          }
          yp[std::size_t(y0) * ow + x0] = acc;
        }
      }
    }
  }
}

// Per-channel affine; channel = leading dim for conv shapes, the feature
// itself for flat shapes.
void norm_forward(const Tensor& x, const UnitTensors& p, Tensor& y, int batch, const Shape& shape) {
  int ch = shape[0];
  std::int64_t plane = shape.size() == 3 ? std::int64_t(shape[1]) * shape[2] : 1;
  for (int b = 0; b < batch; ++b) {
    const float* xb = x.data() + std::size_t(b) * ch * plane;
    float* yb = y.data() + std::size_t(b) * ch * plane;
    for (int c = 0; c < ch; ++c) {
      const float g = p.gamma.v[c], be = p.beta.v[c];
      for (std::int64_t i = 0; i < plane; ++i) yb[c * plane + i] = g * xb[c * plane + i] + be;
    }
  }
}

}  // namespace

ActivationCache forward(const NetworkState& st, const Tensor& inputs, const FreezeMask& mask) {
  if (inputs.shape.empty()) throw contract_error("forward: empty input");
  Shape sample_shape(inputs.shape.begin() + 1, inputs.shape.end());
  if (sample_shape != st.input_shape) throw contract_error("forward: batch input shape does not match spec");
  const int batch = inputs.shape[0];

  auto io = layer_io(st);
  const int L = int(io.size());

  // unfrozen_before[i]: an unfrozen parametric layer exists at index < i
  std::vector<char> unfrozen_before(L + 1, 0);
  for (int i = 0; i < L; ++i) {
    bool here = io[i].l->has_params() && !mask.is_frozen(io[i].unit);
    unfrozen_before[i + 1] = unfrozen_before[i] || here;
  }

  ActivationCache cache;
  cache.batch = batch;
  cache.mask_fingerprint = mask.fingerprint();
  cache.inputs.resize(L);

  Tensor cur = inputs;
  for (int i = 0; i < L; ++i) {
    const LayerSpec& l = *io[i].l;
    bool store = false;
    switch (l.kind) {
      case LayerSpec::Kind::Dense:
      case LayerSpec::Kind::Conv2d:
      case LayerSpec::Kind::Norm:
        store = !mask.is_frozen(io[i].unit);  // needed for weight gradients
        break;
      case LayerSpec::Kind::ReLU:
        store = unfrozen_before[i];  // needed to gate the activation gradient
        break;
      case LayerSpec::Kind::Flatten:
        store = false;
        break;
    }
    if (store) cache.inputs[i] = cur;

    Shape out_shape = io[i].out_shape;
    Shape full = out_shape;
    full.insert(full.begin(), batch);
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        Tensor y(full);
        dense_forward(cur, st.params[io[i].unit], y, batch);
        cur = std::move(y);
        break;
      }
      case LayerSpec::Kind::Conv2d: {
        Tensor y(full);
        conv_forward(cur, l, st.params[io[i].unit], y, batch, io[i].in_shape, out_shape);
        cur = std::move(y);
        break;
      }
      case LayerSpec::Kind::Norm: {
        Tensor y(full);
        norm_forward(cur, st.params[io[i].unit], y, batch, io[i].in_shape);
        cur = std::move(y);
        break;
      }
      case LayerSpec::Kind::ReLU: {
        Tensor y = cur;
        for (auto& v : y.v) v = v > 0.0f ? v : 0.0f;
        cur = std::move(y);
        break;
      }
      case LayerSpec::Kind::Flatten: {
        cur.shape = full;
        break;
      }
    }
    if (!all_finite(cur.data(), cur.size()))
      throw run_error("numeric overflow: non-finite activation at layer " + std::to_string(i));
  }
  cache.logits = std::move(cur);
  return cache;
}

LossGrad softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const int batch = logits.shape[0];
  const int classes = logits.shape[1];
  if (int(labels.size()) != batch) throw contract_error("labels/batch size mismatch");
  LossGrad out;
  out.dlogits = Tensor::zeros(logits.shape);
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const float* row = logits.data() + std::size_t(b) * classes;
    float* drow = out.dlogits.data() + std::size_t(b) * classes;
    int y = labels[b];
    if (y < 0 || y >= classes) throw contract_error("label out of range");
    float mx = row[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) denom += std::exp(double(row[c] - mx));
    double logz = std::log(denom) + mx;
    total += logz - row[y];
    for (int c = 0; c < classes; ++c) {
      double p = std::exp(double(row[c]) - logz);
      drow[c] = float((p - (c == y ? 1.0 : 0.0)) / batch);
    }
  }
  out.loss = float(total / batch);
  return out;
}

namespace {

void dense_backward(const Tensor& x, const Tensor& dy, const UnitTensors& p, UnitGrads* g, Tensor* dx,
                    int batch) {
  int in = p.weight.shape[0], out = p.weight.shape[1];
  if (g) {
    // dW (in,out) = x^T (in,batch) * dy (batch,out)
    std::vector<float> xt(std::size_t(in) * batch);
    transpose(x.data(), xt.data(), batch, in);
    matmul_acc(xt.data(), dy.data(), g->weight.data(), in, batch, out);
    for (int b = 0; b < batch; ++b) {
      const float* dr = dy.data() + std::size_t(b) * out;
      for (int j = 0; j < out; ++j) g->bias.v[j] += dr[j];
    }
  }
  if (dx) {
    // dx (batch,in) = dy (batch,out) * W^T (out,in)
    std::vector<float> wt(std::size_t(out) * in);
    transpose(p.weight.data(), wt.data(), in, out);
    matmul_acc(dy.data(), wt.data(), dx->data(), batch, out, in);
  }
}

void conv_backward(const Tensor& x, const Tensor& dy, const LayerSpec& l, const UnitTensors& p,
                   UnitGrads* g, Tensor* dx, int batch, const Shape& in_shape, const Shape& out_shape) {
  const int cin = in_shape[0], ih = in_shape[1], iw = in_shape[2];
  const int cout = out_shape[0], oh = out_shape[1], ow = out_shape[2];
  const int k = l.kernel, s = l.stride, pad = l.padding;
  const std::int64_t in_plane = std::int64_t(ih) * iw;
  const std::int64_t out_plane = std::int64_t(oh) * ow;
  for (int b = 0; b < batch; ++b) {
    const float* xb = x.empty() ? nullptr : x.data() + std::size_t(b) * cin * in_plane;
    const float* dyb = dy.data() + std::size_t(b) * cout * out_plane;
    float* dxb = dx ? dx->data() + std::size_t(b) * cin * in_plane : nullptr;
    for (int oc = 0; oc < cout; ++oc) {
      const float* dyp = dyb + std::size_t(oc) * out_plane;
      const float* wq = p.weight.data() + std::size_t(oc) * cin * k * k;
      float* gwq = g ? g->weight.data() + std::size_t(oc) * cin * k * k : nullptr;
      if (g) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < out_plane; ++i) acc += dyp[i];
        g->bias.v[oc] += float(acc);
      }
      for (int y0 = 0; y0 < oh; ++y0) {
        for (int x0 = 0; x0 < ow; ++x0) {
          const float d = dyp[std::size_t(y0) * ow + x0];
          if (d == 0.0f) continue;
          const int hy = y0 * s - pad, hx = x0 * s - pad;
          for (int ic = 0; ic < cin; ++ic) {
            const float* wr = wq + std::size_t(ic) * k * k;
            float* gr = gwq ? gwq + std::size_t(ic) * k * k : nullptr;
            for (int ky = 0; ky < k; ++ky) {
              const int yy = hy + ky;
              if (yy < 0 || yy >= ih) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int xx = hx + kx;
                if (xx < 0 || xx >= iw) continue;
                const std::int64_t xi = std::size_t(ic) * in_plane + std::size_t(yy) * iw + xx;
                if (gr) gr[ky * k + kx] += d * xb[xi];
                if (dxb) dxb[xi] += d * wr[ky * k + kx];
              }
            }
          }
        }
      }
    }
  }
}

void norm_backward(const Tensor& x, const Tensor& dy, const UnitTensors& p, UnitGrads* g, Tensor* dx,
                   int batch, const Shape& shape) {
  int ch = shape[0];
  std::int64_t plane = shape.size() == 3 ? std::int64_t(shape[1]) * shape[2] : 1;
  for (int b = 0; b < batch; ++b) {
    const float* xb = x.empty() ? nullptr : x.data() + std::size_t(b) * ch * plane;
    const float* dyb = dy.data() + std::size_t(b) * ch * plane;
    float* dxb = dx ? dx->data() + std::size_t(b) * ch * plane : nullptr;
    for (int c = 0; c < ch; ++c) {
      const float gam = p.gamma.v[c];
      double dg = 0.0, db = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) {
        const float d = dyb[c * plane + i];
        if (g) {
          dg += double(d) * xb[c * plane + i];
          db += d;
        }
        if (dxb) dxb[c * plane + i] = gam * d;
      }
      if (g) {
        g->gamma.v[c] += float(dg);
        g->beta.v[c] += float(db);
      }
    }
  }
}

}  // namespace

Gradients backward(const NetworkState& st, const ActivationCache& cache, const Tensor& dlogits,
                   const FreezeMask& mask) {
  if (cache.mask_fingerprint != mask.fingerprint())
    throw contract_error("backward: cache was produced under a different freeze mask");
  const int batch = cache.batch;
  auto io = layer_io(st);
  const int L = int(io.size());

  std::vector<char> unfrozen_before(L + 1, 0);
  int lowest_unfrozen = -1;
  for (int i = 0; i < L; ++i) {
    bool here = io[i].l->has_params() && !mask.is_frozen(io[i].unit);
    if (here && lowest_unfrozen < 0) lowest_unfrozen = i;
    unfrozen_before[i + 1] = unfrozen_before[i] || here;
  }

  Gradients grads;
  for (const FreezeUnit& u : st.units) {
    if (mask.is_frozen(u.unit_id)) continue;
    UnitGrads g;
    const UnitTensors& p = st.params[u.unit_id];
    g.weight = Tensor::zeros(p.weight.shape);
    g.bias = Tensor::zeros(p.bias.shape);
    if (p.has_norm) {
      g.gamma = Tensor::zeros(p.gamma.shape);
      g.beta = Tensor::zeros(p.beta.shape);
    }
    grads.by_unit.emplace(u.unit_id, std::move(g));
  }
  if (lowest_unfrozen < 0) return grads;  // everything frozen: no backward work

  Tensor dy = dlogits;
  for (int i = L - 1; i >= lowest_unfrozen; --i) {
    const LayerSpec& l = *io[i].l;
    const bool unfrozen = l.has_params() && !mask.is_frozen(io[i].unit);
    const bool need_dx = unfrozen_before[i];
    UnitGrads* g = unfrozen ? &grads.by_unit.at(io[i].unit) : nullptr;
    const Tensor& xin = cache.inputs[i];
    if (unfrozen && xin.empty()) throw contract_error("backward: missing cached activation for layer " + std::to_string(i));

    Shape in_full = io[i].in_shape;
    in_full.insert(in_full.begin(), batch);
    Tensor dx;
    if (need_dx) dx = Tensor::zeros(in_full);

    switch (l.kind) {
      case LayerSpec::Kind::Dense:
        if (g || need_dx) dense_backward(xin, dy, st.params[io[i].unit], g, need_dx ? &dx : nullptr, batch);
        break;
      case LayerSpec::Kind::Conv2d:
        if (g || need_dx)
          conv_backward(xin, dy, l, st.params[io[i].unit], g, need_dx ? &dx : nullptr, batch,
                        io[i].in_shape, io[i].out_shape);
        break;
      case LayerSpec::Kind::Norm:
        if (g || need_dx)
          norm_backward(xin, dy, st.params[io[i].unit], g, need_dx ? &dx : nullptr, batch, io[i].in_shape);
        break;
      case LayerSpec::Kind::ReLU:
        if (need_dx) {
          if (xin.empty()) throw contract_error("backward: missing cached relu input at layer " + std::to_string(i));
          dx = dy;
          for (std::int64_t j = 0; j < dx.size(); ++j)
            if (xin.v[std::size_t(j)] <= 0.0f) dx.v[std::size_t(j)] = 0.0f;
          dx.shape = in_full;
        }
        break;
      case LayerSpec::Kind::Flatten:
        if (need_dx) {
          dx = dy;
          dx.shape = in_full;
        }
        break;
    }
    if (need_dx) dy = std::move(dx);
  }
  return grads;
}

static void sgd_unit(UnitTensors& p, UnitTensors& m, const UnitGrads& g, double lr, double momentum) {
  auto upd = [&](Tensor& w, Tensor& v, const Tensor& grad) {
    for (std::size_t i = 0; i < w.v.size(); ++i) {
      v.v[i] = float(momentum * v.v[i] + grad.v[i]);
      w.v[i] = float(w.v[i] - lr * v.v[i]);
    }
  };
  upd(p.weight, m.weight, g.weight);
  upd(p.bias, m.bias, g.bias);
  if (p.has_norm) {
    upd(p.gamma, m.gamma, g.gamma);
    upd(p.beta, m.beta, g.beta);
  }
}

static void check_grads_cover(const NetworkState& st, const Gradients& grads, const FreezeMask& mask) {
  for (const FreezeUnit& u : st.units) {
    bool frozen = mask.is_frozen(u.unit_id);
    bool present = grads.by_unit.count(u.unit_id) != 0;
    if (frozen && present) throw contract_error("sgd_step: gradient supplied for frozen unit");
    if (!frozen && !present) throw contract_error("sgd_step: missing gradient for unfrozen unit");
  }
}

void sgd_step(NetworkState& st, const Gradients& grads, double lr, double momentum, const FreezeMask& mask) {
  if (lr < 0.0) throw config_error("learning rate must be nonnegative");
  if (momentum < 0.0 || momentum >= 1.0) throw config_error("momentum must lie in [0,1)");
  check_grads_cover(st, grads, mask);
  for (const auto& [unit, g] : grads.by_unit) sgd_unit(st.params[unit], st.momentum[unit], g, lr, momentum);
}

void sgd_step(NetworkState& st, const Gradients& grads, const std::vector<double>& unit_lr, double momentum,
              const FreezeMask& mask) {
  if (int(unit_lr.size()) != st.num_units()) throw contract_error("sgd_step: per-unit lr size mismatch");
  if (momentum < 0.0 || momentum >= 1.0) throw config_error("momentum must lie in [0,1)");
  check_grads_cover(st, grads, mask);
  for (const auto& [unit, g] : grads.by_unit) {
    if (unit_lr[unit] < 0.0) throw config_error("learning rate must be nonnegative");
    sgd_unit(st.params[unit], st.momentum[unit], g, unit_lr[unit], momentum);
  }
}

double evaluate(const NetworkState& st, const Tensor& inputs, const std::vector<int>& labels) {
  if (labels.empty()) throw config_error("evaluate: empty dataset");
  const int n = inputs.shape[0];
  if (n != int(labels.size())) throw contract_error("evaluate: inputs/labels size mismatch");
  const int classes = st.num_classes();
  FreezeMask all(st.num_units());
  std::vector<int> ids;
  for (const auto& u : st.units) ids.push_back(u.unit_id);
  all.apply(ids, 0);  // keep the eval forward from caching activations

  const int chunk = 256;
  std::int64_t sample = elem_count(st.input_shape);
  int correct = 0;
  for (int off = 0; off < n; off += chunk) {
    int bs = std::min(chunk, n - off);
    Shape full = st.input_shape;
    full.insert(full.begin(), bs);
    Tensor part(full);
    std::copy(inputs.v.begin() + std::size_t(off) * sample,
              inputs.v.begin() + std::size_t(off + bs) * sample, part.v.begin());
    ActivationCache c = forward(st, part, all);
    for (int b = 0; b < bs; ++b) {
      int pred = argmax_lowest(c.logits.data() + std::size_t(b) * classes, classes);
      if (pred == labels[std::size_t(off) + b]) ++correct;
    }
  }
  return double(correct) / double(n);
}

std::vector<Tensor> unit_outputs(const NetworkState& st, const Tensor& inputs) {
  const int batch = inputs.shape[0];
  FreezeMask all(st.num_units());
  std::vector<int> ids;
  for (const auto& u : st.units) ids.push_back(u.unit_id);
  all.apply(ids, 0);

  auto io = layer_io(st);
  std::vector<int> last_layer_of_unit(st.units.size());
  for (const auto& u : st.units) last_layer_of_unit[u.unit_id] = u.layer_indices.back();

  std::vector<Tensor> outs(st.units.size());
  Tensor cur = inputs;
  for (int i = 0; i < int(io.size()); ++i) {
    const LayerSpec& l = *io[i].l;
    Shape full = io[i].out_shape;
    full.insert(full.begin(), batch);
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        Tensor y(full);
        dense_forward(cur, st.params[io[i].unit], y, batch);
        cur = std::move(y);
        break;
      }
      case LayerSpec::Kind::Conv2d: {
        Tensor y(full);
        conv_forward(cur, l, st.params[io[i].unit], y, batch, io[i].in_shape, io[i].out_shape);
        cur = std::move(y);
        break;
      }
      case LayerSpec::Kind::Norm: {
        Tensor y(full);
        norm_forward(cur, st.params[io[i].unit], y, batch, io[i].in_shape);
        cur = std::move(y);
        break;
      }
      case LayerSpec::Kind::ReLU: {
        Tensor y = cur;
        for (auto& v : y.v) v = v > 0.0f ? v : 0.0f;
        cur = std::move(y);
        break;
      }
      case LayerSpec::Kind::Flatten:
        cur.shape = full;
        break;
    }
    int unit = io[i].unit;
    if (unit >= 0 && last_layer_of_unit[unit] == i) {
      Tensor flat = cur;
      flat.shape = {batch, int(elem_count(io[i].out_shape))};
      outs[unit] = std::move(flat);
    }
  }
  return outs;
}

}  // namespace frz
