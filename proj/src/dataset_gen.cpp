#include "frz/dataset_gen.hpp"

#include <cmath>
#include <cstdio>

#include "frz/rng.hpp"
#include "frz/tailor.hpp"

namespace frz {

std::string events_to_csv(const std::vector<FreezeEventRec>& events) {
  std::string out = "unit_id,iteration_frozen,policy,confidence\n";
  char buf[160];
  for (const FreezeEventRec& e : events) {
    if (e.has_confidence)
      std::snprintf(buf, sizeof(buf), "%d,%lld,%s,%.6f\n", e.unit, (long long)e.iteration,
                    e.policy.c_str(), e.confidence);
    else
      std::snprintf(buf, sizeof(buf), "%d,%lld,%s,\n", e.unit, (long long)e.iteration, e.policy.c_str());
    out += buf;
  }
  return out;
}

namespace {

double cosine_lr(double base, std::int64_t t, std::int64_t total) {
  return 0.5 * base * (1.0 + std::cos(3.14159265358979323846 * double(t) / double(total)));
}

Tensor slice_batch(const Tensor& all, const std::vector<int>& order, std::size_t off, int bs,
                   const Shape& sample_shape) {
  Shape full = sample_shape;
  full.insert(full.begin(), bs);
  Tensor out(full);
  const std::int64_t sample = elem_count(sample_shape);
  for (int b = 0; b < bs; ++b) {
    int idx = order[off + std::size_t(b)];
    std::copy(all.v.begin() + std::size_t(idx) * sample, all.v.begin() + std::size_t(idx + 1) * sample,
              out.v.begin() + std::size_t(b) * sample);
  }
  return out;
}

}  // namespace

NetworkState train_reference(const GenConfig& cfg, const TaskData& task) {
  SeedPack seeds = resolve_seeds(cfg.seed, nullptr);
  NetworkState net = build_network(cfg.layers, cfg.units, seeds.init, task.input_shape);
  FreezeMask mask(net.num_units());
  const int n = task.train_x.shape[0];
  const int iters_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total = std::int64_t(cfg.reference_epochs) * iters_per_epoch;

  Rng data_rng = Rng(seeds.data).stream(0xEF);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;

  std::int64_t t = 0;
  for (int epoch = 0; epoch < cfg.reference_epochs; ++epoch) {
    data_rng.shuffle(order);
    for (std::size_t off = 0; off < order.size(); off += std::size_t(cfg.batch_size)) {
      int bs = int(std::min(order.size() - off, std::size_t(cfg.batch_size)));
      Tensor bx = slice_batch(task.train_x, order, off, bs, task.input_shape);
      std::vector<int> by(bs);
      for (int b = 0; b < bs; ++b) by[std::size_t(b)] = task.train_y[std::size_t(order[off + std::size_t(b)])];
      try {
        ActivationCache cache = forward(net, bx, mask);
        LossGrad lg = softmax_cross_entropy(cache.logits, by);
        if (!(lg.loss - lg.loss == 0.0f))
          throw run_error("training diverged (non-finite loss)");
        Gradients g = backward(net, cache, lg.dlogits, mask);
        sgd_step(net, g, cosine_lr(cfg.lr, t, std::max<std::int64_t>(total, 1)), cfg.momentum, mask);
      } catch (const run_error& e) {
        throw run_error(std::string(e.what()) + " at iteration " + std::to_string(t));
      }
      ++t;
    }
  }
  return net;
}

GenResult generate(const GenConfig& cfg, const NetworkState& reference, const TaskData& task) {
  if (reference.spec.size() != cfg.layers.size())
    throw config_error("generate: reference architecture does not match config");
  for (std::size_t i = 0; i < cfg.layers.size(); ++i)
    if (reference.spec[i].kind != cfg.layers[i].kind)
      throw config_error("generate: reference architecture does not match config");

  SeedPack seeds = resolve_seeds(cfg.seed, nullptr);
  std::vector<std::uint64_t> gen_seeds = cfg.generation_seeds;
  if (gen_seeds.empty()) gen_seeds.push_back(Rng(cfg.seed).stream(0x9e).next_u64());

  const int n = task.train_x.shape[0];
  const int iters_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  if (cfg.checkpoints_per_epoch != 1 && iters_per_epoch % cfg.checkpoints_per_epoch != 0)
    throw config_error("checkpoints_per_epoch must divide iterations per epoch (" +
                       std::to_string(iters_per_epoch) + ") or be 1");
  const int cadence = std::max(1, iters_per_epoch / cfg.checkpoints_per_epoch);
  const std::int64_t total = std::int64_t(cfg.generation_epochs) * iters_per_epoch;

  std::vector<Tensor> ref_outputs = unit_outputs(reference, task.probe_x);

  GenResult result;
  result.dataset.window = cfg.window;
  result.dataset.tailored_size = cfg.tailored_size;
  result.dataset.provenance = cfg.config_digest;

  auto costs = layer_costs(cfg.layers, cfg.units, task.input_shape, cfg.batch_size);

  for (std::uint64_t gseed : gen_seeds) {
    NetworkState net = build_network(cfg.layers, cfg.units, Rng(gseed).stream(1).next_u64(),
                                     task.input_shape);
    FreezeMask mask(net.num_units());
    TailorPlan plan = make_plan(net, cfg.tailored_size, seeds.tailor);
    HistoryBuffer buffers(cfg.window);

    CkaTrace trace;
    GenRunStats stats;
    stats.seed = gseed;
    std::map<int, std::vector<double>> scores;
    std::map<int, bool> label_on;
    for (const auto& u : net.units) label_on[u.unit_id] = false;

    Rng data_rng = Rng(gseed).stream(2);
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;

    std::int64_t t = 0;
    int checkpoint = 0;
    for (int epoch = 0; epoch < cfg.generation_epochs; ++epoch) {
      data_rng.shuffle(order);
      for (std::size_t off = 0; off < order.size(); off += std::size_t(cfg.batch_size)) {
        int bs = int(std::min(order.size() - off, std::size_t(cfg.batch_size)));
        Tensor bx = slice_batch(task.train_x, order, off, bs, task.input_shape);
        std::vector<int> by(bs);
        for (int b = 0; b < bs; ++b)
          by[std::size_t(b)] = task.train_y[std::size_t(order[off + std::size_t(b)])];
        try {
          ActivationCache cache = forward(net, bx, mask);
          LossGrad lg = softmax_cross_entropy(cache.logits, by);
          if (!(lg.loss - lg.loss == 0.0f)) throw run_error("training diverged (non-finite loss)");
          Gradients g = backward(net, cache, lg.dlogits, mask);
          sgd_step(net, g, cosine_lr(cfg.lr, t, total), cfg.momentum, mask);
        } catch (const run_error& e) {
          throw run_error(std::string(e.what()) + " at iteration " + std::to_string(t));
        }
        IterationCost ic = iteration_cost(costs, mask);
        stats.fwd_flops += ic.fwd_flops;
        stats.bwd_flops += ic.bwd_flops;
        ++t;

        if (t % cadence != 0) continue;

        // checkpoint: snapshot, score, label, record, optionally freeze
        buffers.push(take_snapshots(net, plan, mask, t));
        std::vector<Tensor> outs = unit_outputs(net, task.probe_x);
        std::vector<int> freeze_now;
        for (const auto& u : net.units) {
          const int uid = u.unit_id;
          if (mask.is_frozen(uid)) continue;
          double score = cka(outs[std::size_t(uid)], ref_outputs[std::size_t(uid)], true);
          scores[uid].push_back(score);
          CkaTrace::Row row;
          row.unit_id = uid;
          row.checkpoint = checkpoint;
          row.epoch = epoch;
          row.score = score;
          trace.rows.push_back(row);
          if (!label_on[uid] && stabilized(scores[uid], cfg.stab)) label_on[uid] = true;
          if (buffers.count(uid) >= 1) {
            TrainRecord rec;
            rec.sequence = buffers.window_values(uid);
            rec.label = label_on[uid] ? 1 : 0;
            result.dataset.records.push_back(std::move(rec));
            ++stats.records;
          }
          if (label_on[uid] && cfg.oracle_freeze) freeze_now.push_back(uid);
        }
        if (!freeze_now.empty()) {
          mask.apply(freeze_now, t);
          for (int uid : freeze_now) {
            buffers.drop(uid);
            FreezeEventRec ev;
            ev.unit = uid;
            ev.iteration = t;
            ev.policy = "oracle";
            stats.events.push_back(ev);
          }
        }
        ++checkpoint;
      }
    }
    stats.final_accuracy = evaluate(net, task.test_x, task.test_y);
    result.traces.push_back(std::move(trace));
    result.runs.push_back(std::move(stats));
  }

  bool has0 = false, has1 = false;
  for (const TrainRecord& r : result.dataset.records) (r.label ? has1 : has0) = true;
  if (result.dataset.records.empty() || !has0 || !has1)
    throw run_error(
        "generation produced a single-class dataset; adjust stabilization config or epochs "
        "(labels found: " + std::string(has0 ? "0 " : "") + std::string(has1 ? "1" : "") + ")");
  return result;
}

}  // namespace frz
