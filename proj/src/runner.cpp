#include "frz/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "frz/policies.hpp"
#include "frz/predictor.hpp"
#include "frz/rng.hpp"
#include "frz/tailor.hpp"

namespace frz {

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

double grad_norm(const UnitGrads& g) {
  double acc = 0.0;
  for (const Tensor* t : {&g.weight, &g.bias, &g.gamma, &g.beta})
    for (float v : t->v) acc += double(v) * v;
  return std::sqrt(acc);
}

}  // namespace

nlohmann::json RunSummary::to_json() const {
  nlohmann::json j;
  j["task"] = task_id;
  j["policy"] = policy;
  j["seed"] = seed;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["accuracy"] = accuracy;
  j["fwd_flops"] = fwd_flops;
  j["bwd_flops"] = bwd_flops;
  j["predictor_flops"] = predictor_flops;
  j["total_flops"] = total_flops;
  j["peak_act_bytes"] = peak_act_bytes;
  nlohmann::json evs = nlohmann::json::array();
  for (const FreezeEventRec& e : events) {
    nlohmann::json ev = {{"unit", e.unit}, {"iteration", e.iteration}};
    if (e.has_confidence) ev["confidence"] = e.confidence;
    evs.push_back(std::move(ev));
  }
  j["freeze_events"] = std::move(evs);
  j["config_digest"] = config_digest;
  j["group_digest"] = group_digest;
  j["wall_seconds"] = wall_seconds;
  j["trace_csv"] = trace_csv;
  j["events_csv"] = events_csv;
  return j;
}

RunSummary RunSummary::from_json(const nlohmann::json& j) {
  RunSummary s;
  try {
    s.task_id = j.at("task").get<std::string>();
    s.policy = j.at("policy").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.epochs = j.at("epochs").get<int>();
    s.batch_size = j.at("batch_size").get<int>();
    s.accuracy = j.at("accuracy").get<double>();
    s.fwd_flops = j.at("fwd_flops").get<std::int64_t>();
    s.bwd_flops = j.at("bwd_flops").get<std::int64_t>();
    s.predictor_flops = j.at("predictor_flops").get<std::int64_t>();
    s.total_flops = j.at("total_flops").get<std::int64_t>();
    s.peak_act_bytes = j.at("peak_act_bytes").get<std::int64_t>();
    for (const auto& ev : j.at("freeze_events")) {
      FreezeEventRec e;
      e.unit = ev.at("unit").get<int>();
      e.iteration = ev.at("iteration").get<std::int64_t>();
      e.policy = s.policy;
      if (ev.contains("confidence")) {
        e.confidence = ev.at("confidence").get<double>();
        e.has_confidence = true;
      }
      s.events.push_back(std::move(e));
    }
    s.config_digest = j.at("config_digest").get<std::string>();
    s.group_digest = j.at("group_digest").get<std::string>();
    s.wall_seconds = j.value("wall_seconds", 0.0);
    s.trace_csv = j.value("trace_csv", "");
    s.events_csv = j.value("events_csv", "");
  } catch (const nlohmann::json::exception& e) {
    throw format_error("bad run summary: " + std::string(e.what()));
  }
  return s;
}

RunResult run_experiment(const ExperimentConfig& cfg, const RunHooks& hooks, bool write_artifacts,
                         bool quiet) {
  const auto t_start = std::chrono::steady_clock::now();
  TaskData task = load_task(cfg.task, cfg.seeds.task);
  NetworkState net = build_network(cfg.layers, cfg.units, cfg.seeds.init, task.input_shape);
  const int num_units = net.num_units();
  FreezeMask mask(num_units);

  const int n = task.train_x.shape[0];
  const int iters_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_iters = std::int64_t(cfg.epochs) * iters_per_epoch;
  const std::int64_t S = cfg.freeze_interval > 0 ? cfg.freeze_interval
                                                 : std::max<std::int64_t>(1, iters_per_epoch / 4);
  const std::int64_t R = cfg.snapshot_interval > 0 ? cfg.snapshot_interval : S;

  auto costs = layer_costs(cfg.layers, cfg.units, task.input_shape, cfg.batch_size);
  CostLedger ledger;
  std::vector<FreezeEventRec> events;

  // policy state
  LinearFreezeConfig lin;
  GradNormState gn_state;
  std::int64_t gn_interval = 1;
  std::unique_ptr<AttentionFreezePredictor> predictor;
  TailorPlan plan;
  HistoryBuffer buffers(cfg.window);
  if (cfg.policy.kind == PolicyKind::Linear) {
    lin.t0_fraction = cfg.policy.linear_t0;
    lin.total_iterations = total_iters;
    lin.base_lr = cfg.lr;
    lin.num_units = num_units;
  }
  if (cfg.policy.kind == PolicyKind::GradNorm) {
    gn_interval = std::max<std::int64_t>(1, iters_per_epoch / cfg.policy.gradnorm.intervals_per_epoch);
  }
  if (cfg.policy.kind == PolicyKind::Smart) {
    if (cfg.predictor_path.empty()) throw config_error("smart policy requires a predictor file");
    predictor = std::make_unique<AttentionFreezePredictor>(
        load_predictor(cfg.predictor_path, cfg.tailored_size));
    plan = make_plan(net, cfg.tailored_size, cfg.seeds.tailor);
  }

  auto freeze_units = [&](const std::vector<int>& units, std::int64_t iter,
                          const std::vector<SmartDecision>* traces) {
    std::vector<int> added = mask.apply(units, iter);
    for (int u : added) {
      FreezeEventRec ev;
      ev.unit = u;
      ev.iteration = iter;
      ev.policy = policy_name(cfg.policy.kind);
      if (traces) {
        for (const SmartDecision& d : *traces)
          if (d.unit == u) {
            ev.confidence = d.trace.confidence[1];
            ev.has_confidence = true;
          }
      }
      events.push_back(ev);
      buffers.drop(u);
      if (hooks.on_freeze) hooks.on_freeze(u, iter, net);
    }
  };

  Rng data_rng(cfg.seeds.data);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[std::size_t(i)] = i;

  std::int64_t t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    data_rng.shuffle(order);
    for (std::size_t off = 0; off < order.size(); off += std::size_t(cfg.batch_size)) {
      const int bs = int(std::min(order.size() - off, std::size_t(cfg.batch_size)));
      std::int64_t predictor_flops_now = 0;

      // freezing stage (policy consultation) at the top of the iteration,
      // so the mask is fixed while the iteration's cost is accounted
      if (cfg.policy.kind == PolicyKind::Linear) {
        freeze_units(linear_frozen_at(lin, t), t, nullptr);
      } else if (cfg.policy.kind == PolicyKind::GradNorm && t > 0 && t % gn_interval == 0) {
        freeze_units(gn_state.decide(mask, cfg.policy.gradnorm.percentile), t, nullptr);
      } else if (cfg.policy.kind == PolicyKind::Smart && t > 0 && t % S == 0) {
        SmartDecideResult r = smart_decide(*predictor, buffers, mask, cfg.policy.min_history);
        predictor_flops_now += r.predictor_flops_spent;
        std::vector<int> units;
        for (const SmartDecision& d : r.to_freeze) units.push_back(d.unit);
        freeze_units(units, t, &r.to_freeze);
      }

      Tensor bx = slice_batch(task.train_x, order, off, bs, task.input_shape);
      std::vector<int> by(bs);
      for (int b = 0; b < bs; ++b)
        by[std::size_t(b)] = task.train_y[std::size_t(order[off + std::size_t(b)])];

      float loss = 0.0f;
      try {
        ActivationCache cache = forward(net, bx, mask);
        LossGrad lg = softmax_cross_entropy(cache.logits, by);
        if (!(lg.loss - lg.loss == 0.0f)) throw run_error("training diverged (non-finite loss)");
        loss = lg.loss;
        Gradients grads = backward(net, cache, lg.dlogits, mask);

        if (cfg.policy.kind == PolicyKind::GradNorm && (t + 1) % gn_interval == 0)
          for (const auto& [unit, g] : grads.by_unit) gn_state.observe(unit, grad_norm(g));

        if (cfg.policy.kind == PolicyKind::Linear) {
          std::vector<double> unit_lr(std::size_t(num_units), 0.0);
          for (int u = 0; u < num_units; ++u)
            if (!mask.is_frozen(u)) unit_lr[std::size_t(u)] = linear_lr(lin, u, t);
          sgd_step(net, grads, unit_lr, cfg.momentum, mask);
        } else {
          double lr = cfg.lr_schedule == "constant" ? cfg.lr : cosine_lr(cfg.lr, t, total_iters);
          sgd_step(net, grads, lr, cfg.momentum, mask);
        }
      } catch (const run_error& e) {
        throw run_error(std::string(e.what()) + " at iteration " + std::to_string(t));
      }

      ledger.accumulate(iteration_cost(costs, mask), predictor_flops_now, epoch, mask.frozen_count(),
                        loss);
      ++t;

      // record tailored weights after the update
      if (cfg.policy.kind == PolicyKind::Smart && t % R == 0)
        buffers.push(take_snapshots(net, plan, mask, t));
    }
    if (!quiet)
      std::cerr << "[frz] epoch " << epoch + 1 << "/" << cfg.epochs << " frozen " << mask.frozen_count()
                << "/" << num_units << " loss " << ledger.rows().back().train_loss << "\n";
  }

  RunResult result;
  result.summary.task_id = cfg.task.id;
  result.summary.policy = policy_name(cfg.policy.kind);
  result.summary.seed = cfg.seeds.master;
  result.summary.epochs = cfg.epochs;
  result.summary.batch_size = cfg.batch_size;
  result.summary.accuracy = evaluate(net, task.test_x, task.test_y);
  result.summary.fwd_flops = ledger.fwd_flops();
  result.summary.bwd_flops = ledger.bwd_flops();
  result.summary.predictor_flops = ledger.predictor_flops();
  result.summary.total_flops = ledger.total_flops();
  result.summary.peak_act_bytes = ledger.peak_act_bytes();
  result.summary.events = events;
  result.summary.config_digest = cfg.config_digest;
  result.summary.group_digest = cfg.group_digest;
  result.summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  if (write_artifacts) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    std::string base = cfg.run_name.empty()
                           ? result.summary.policy + "_seed" + std::to_string(cfg.seeds.master)
                           : cfg.run_name;
    result.summary.trace_csv = cfg.out_dir + "/" + base + "_trace.csv";
    result.summary.events_csv = cfg.out_dir + "/" + base + "_events.csv";
    ledger.write_csv(result.summary.trace_csv);
    std::ofstream ef(result.summary.events_csv, std::ios::binary);
    if (!ef) throw run_error("cannot write events csv: " + result.summary.events_csv);
    ef << events_to_csv(events);
    std::ofstream sf(cfg.out_dir + "/" + base + "_summary.json", std::ios::binary);
    if (!sf) throw run_error("cannot write summary json");
    sf << result.summary.to_json().dump(2) << "\n";
  }

  result.final_state = std::move(net);
  result.ledger = std::move(ledger);
  result.events = std::move(events);
  return result;
}

std::string report(const std::vector<RunSummary>& summaries) {
  if (summaries.empty()) throw config_error("report: no summaries given");
  for (const RunSummary& s : summaries) {
    if (s.group_digest != summaries.front().group_digest)
      throw run_error("report: mixed incompatible configs (different task/network/training setup)");
  }
  std::map<std::string, std::vector<const RunSummary*>> by_method;
  for (const RunSummary& s : summaries) by_method[s.policy].push_back(&s);

  struct Row {
    std::string method;
    double acc_mean = 0.0, acc_std = 0.0;
    double tflops = 0.0;
    int n = 0;
  };
  std::vector<Row> rows;
  for (const auto& [method, group] : by_method) {
    Row r;
    r.method = method;
    r.n = int(group.size());
    for (const RunSummary* s : group) r.acc_mean += s->accuracy;
    r.acc_mean /= r.n;
    double var = 0.0;
    for (const RunSummary* s : group) var += (s->accuracy - r.acc_mean) * (s->accuracy - r.acc_mean);
    r.acc_std = r.n > 1 ? std::sqrt(var / (r.n - 1)) : 0.0;
    double flops = 0.0;
    for (const RunSummary* s : group) flops += double(s->total_flops);
    r.tflops = flops / r.n / 1e12;
    rows.push_back(std::move(r));
  }
  // reference: full training when present, else the costliest method
  double ref_tflops = rows.front().tflops;
  bool have_full = false;
  for (const Row& r : rows)
    if (r.method == "full") {
      ref_tflops = r.tflops;
      have_full = true;
    }
  if (!have_full)
    for (const Row& r : rows) ref_tflops = std::max(ref_tflops, r.tflops);

  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-10s %-6s %-22s %-14s %s\n", "method", "runs", "accuracy",
                "total_tflops", "flops_saved");
  out += buf;
  for (const Row& r : rows) {
    double saved = ref_tflops > 0.0 ? 100.0 * (1.0 - r.tflops / ref_tflops) : 0.0;
    std::snprintf(buf, sizeof(buf), "%-10s %-6d %7.4f ± %.4f %15.6f %10.1f%%\n", r.method.c_str(),
                  r.n, r.acc_mean, r.acc_std, r.tflops, saved);
    out += buf;
  }
  return out;
}

std::string report_files(const std::vector<std::string>& summary_paths) {
  std::vector<RunSummary> summaries;
  for (const std::string& p : summary_paths) {
    std::ifstream f(p);
    if (!f) throw config_error("report: cannot open " + p);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw format_error("report: bad summary json in " + p + ": " + e.what());
    }
    summaries.push_back(RunSummary::from_json(j));
  }
  return report(summaries);
}

}  // namespace frz
