#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "frz/dataset_gen.hpp"
#include "frz/rng.hpp"

using namespace frz;

namespace {

GenConfig blobs_gen_config() {
  nlohmann::json j = {
      {"task", "blobs"},
      {"network",
       {{"layers",
         {{{"kind", "dense"}, {"in", 16}, {"out", 24}},
          {{"kind", "norm"}, {"channels", 24}},
          {{"kind", "relu"}},
          {{"kind", "dense"}, {"in", 24}, {"out", 16}},
          {{"kind", "relu"}},
          {{"kind", "dense"}, {"in", 16}, {"out", 3}}}},
        {"units", "auto"}}},
      {"reference_epochs", 6},
      {"generation_epochs", 10},
      {"checkpoints_per_epoch", 4},
      {"tailored_size", 64},
      {"window", 12},
      {"stabilization", {{"window", 4}, {"eps", 0.004}, {"min_score", 0.5}}},
      {"lr", 0.08},
      {"batch_size", 32},
      {"seed", 11},
  };
  return gen_config_from_json(j);
}

// independent multinomial logistic regression (double, gradient descent) to
// certify the task itself is learnable
double softmax_regression_accuracy(const TaskData& task) {
  const int d = int(elem_count(task.input_shape));
  const int k = task.num_classes;
  const int n = task.train_x.shape[0];
  std::vector<double> w(std::size_t(d) * k, 0.0), b(std::size_t(k), 0.0);
  for (int it = 0; it < 300; ++it) {
    std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
    for (int i = 0; i < n; ++i) {
      const float* x = task.train_x.data() + std::size_t(i) * d;
      std::vector<double> z(std::size_t(k), 0.0);
      for (int c = 0; c < k; ++c) {
        z[std::size_t(c)] = b[std::size_t(c)];
        for (int j = 0; j < d; ++j) z[std::size_t(c)] += w[std::size_t(j) * k + c] * x[j];
      }
      double mx = z[0];
      for (double v : z) mx = std::max(mx, v);
      double den = 0.0;
      for (double v : z) den += std::exp(v - mx);
      for (int c = 0; c < k; ++c) {
        double p = std::exp(z[std::size_t(c)] - mx) / den - (task.train_y[std::size_t(i)] == c ? 1.0 : 0.0);
        for (int j = 0; j < d; ++j) gw[std::size_t(j) * k + c] += p * x[j];
        gb[std::size_t(c)] += p;
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.05 * gw[i] / n;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= 0.05 * gb[i] / n;
  }
  int correct = 0;
  const int m = task.test_x.shape[0];
  for (int i = 0; i < m; ++i) {
    const float* x = task.test_x.data() + std::size_t(i) * d;
    int best = 0;
    double bestz = -1e300;
    for (int c = 0; c < k; ++c) {
      double z = b[std::size_t(c)];
      for (int j = 0; j < d; ++j) z += w[std::size_t(j) * k + c] * x[j];
      if (z > bestz) {
        bestz = z;
        best = c;
      }
    }
    if (best == task.test_y[std::size_t(i)]) ++correct;
  }
  return double(correct) / m;
}

}  // namespace

TEST_CASE("reference training learns blobs and is reproducible") {
  GenConfig cfg = blobs_gen_config();
  TaskData task = load_task(cfg.task, resolve_seeds(cfg.seed, nullptr).task);
  CHECK(softmax_regression_accuracy(task) >= 0.9);  // the task is easy by construction

  NetworkState ref = train_reference(cfg, task);
  double train_acc = evaluate(ref, task.train_x, task.train_y);
  CHECK(train_acc >= 0.9);

  SUBCASE("same config and seeds give bit-identical checkpoints") {
    NetworkState ref2 = train_reference(cfg, task);
    save_checkpoint(ref, "build_test_ref1.frz");
    save_checkpoint(ref2, "build_test_ref2.frz");
    std::ifstream a("build_test_ref1.frz", std::ios::binary), b("build_test_ref2.frz", std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    std::remove("build_test_ref1.frz");
    std::remove("build_test_ref2.frz");
  }

  SUBCASE("zero reference epochs returns the initialization") {
    GenConfig zero = cfg;
    zero.reference_epochs = 0;
    NetworkState init = train_reference(zero, task);
    NetworkState fresh = build_network(cfg.layers, cfg.units, resolve_seeds(cfg.seed, nullptr).init,
                                       task.input_shape);
    CHECK(init.params[0].weight.v == fresh.params[0].weight.v);
  }
}

TEST_CASE("generation labels histories and freezes stabilized units") {
  GenConfig cfg = blobs_gen_config();
  TaskData task = load_task(cfg.task, resolve_seeds(cfg.seed, nullptr).task);
  NetworkState ref = train_reference(cfg, task);
  GenResult res = generate(cfg, ref, task);

  REQUIRE(res.runs.size() == 1);
  REQUIRE(res.traces.size() == 1);
  const CkaTrace& trace = res.traces[0];

  SUBCASE("record count equals checkpoints while active") {
    CHECK(res.dataset.records.size() == trace.rows.size());
    CHECK(res.runs[0].records == int(res.dataset.records.size()));
  }

  SUBCASE("both labels present and labels are monotone per unit") {
    int pos = 0;
    for (const auto& r : res.dataset.records) pos += r.label;
    CHECK(pos > 0);
    CHECK(pos < int(res.dataset.records.size()));
  }

  SUBCASE("dataset labels re-derive exactly from the emitted cka trace") {
    auto labels = label_history(trace, cfg.stab);
    std::map<int, int> seen;  // unit -> rows consumed
    REQUIRE(res.dataset.records.size() == trace.rows.size());
    for (std::size_t i = 0; i < trace.rows.size(); ++i) {
      int unit = trace.rows[i].unit_id;
      int idx = seen[unit]++;
      CHECK(int(res.dataset.records[i].label) == int(labels.at(unit)[std::size_t(idx)]));
    }
  }

  SUBCASE("scores lie in [0,1] and sequences respect the window") {
    for (const auto& r : trace.rows) {
      CHECK(r.score >= -1e-6);
      CHECK(r.score <= 1.0 + 1e-6);
    }
    for (const auto& r : res.dataset.records) {
      CHECK(int(r.sequence.size()) >= 1);
      CHECK(int(r.sequence.size()) <= cfg.window);
      for (const auto& s : r.sequence) CHECK(int(s.size()) == cfg.tailored_size);
    }
  }

  SUBCASE("oracle freezing spends fewer backward flops than label-only generation") {
    GenConfig label_only = cfg;
    label_only.oracle_freeze = false;
    GenResult res2 = generate(label_only, ref, task);
    CHECK(res.runs[0].events.size() > 0);        // something froze
    CHECK(res2.runs[0].events.empty());          // nothing freezes in label-only mode
    CHECK(res.runs[0].bwd_flops < res2.runs[0].bwd_flops);
    CHECK(res.runs[0].fwd_flops == res2.runs[0].fwd_flops);  // forward always runs
  }

  SUBCASE("frozen units emit no further records") {
    for (const FreezeEventRec& ev : res.runs[0].events) {
      int rows_for_unit = 0;
      for (const auto& r : trace.rows)
        if (r.unit_id == ev.unit) rows_for_unit = std::max(rows_for_unit, r.checkpoint + 1);
      // iteration = checkpoint cadence * (rows for unit); nothing after the freeze
      const int cadence = 8;  // 32 iters/epoch, 4 checkpoints/epoch
      CHECK(ev.iteration == std::int64_t(rows_for_unit) * cadence);
    }
  }
}

TEST_CASE("multiple generation seeds concatenate into one dataset") {
  GenConfig cfg = blobs_gen_config();
  cfg.generation_seeds = {21, 22};
  TaskData task = load_task(cfg.task, resolve_seeds(cfg.seed, nullptr).task);
  NetworkState ref = train_reference(cfg, task);
  GenResult res = generate(cfg, ref, task);
  CHECK(res.runs.size() == 2);
  CHECK(res.traces.size() == 2);
  CHECK(int(res.dataset.records.size()) == res.runs[0].records + res.runs[1].records);
}

TEST_CASE("a stabilization config nothing can satisfy fails loudly") {
  GenConfig cfg = blobs_gen_config();
  cfg.stab.eps = 1e-12;  // no unit will ever stabilize
  cfg.generation_epochs = 3;
  TaskData task = load_task(cfg.task, resolve_seeds(cfg.seed, nullptr).task);
  NetworkState ref = train_reference(cfg, task);
  CHECK_THROWS_AS(generate(cfg, ref, task), run_error);
}

TEST_CASE("generation rejects a mismatched reference architecture") {
  GenConfig cfg = blobs_gen_config();
  TaskData task = load_task(cfg.task, resolve_seeds(cfg.seed, nullptr).task);
  std::vector<LayerSpec> other = {LayerSpec::dense(16, 3)};
  NetworkState wrong = build_network(other, auto_units(other), 1, {16});
  CHECK_THROWS_AS(generate(cfg, wrong, task), config_error);
}

TEST_CASE("provenance digest tracks generation-relevant config changes") {
  nlohmann::json base = {
      {"task", "blobs"},
      {"network", {{"layers", {{{"kind", "dense"}, {"in", 16}, {"out", 3}}}}, {"units", "auto"}}},
      {"reference_epochs", 1},
      {"generation_epochs", 2},
      {"lr", 0.1},
      {"seed", 4},
  };
  GenConfig a = gen_config_from_json(base);
  nlohmann::json changed = base;
  changed["stabilization"] = {{"eps", 0.02}};
  GenConfig b = gen_config_from_json(changed);
  CHECK(a.config_digest != b.config_digest);
  nlohmann::json reseeded = base;
  reseeded["seed"] = 5;
  CHECK(gen_config_from_json(reseeded).config_digest != a.config_digest);
  // out_dir is not generation-relevant
  nlohmann::json moved = base;
  moved["out_dir"] = "elsewhere";
  CHECK(gen_config_from_json(moved).config_digest == a.config_digest);
}
