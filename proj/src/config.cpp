#include "frz/config.hpp"

#include <algorithm>
#include <fstream>

#include "frz/container.hpp"
#include "frz/errors.hpp"
#include "frz/rng.hpp"

namespace frz {

std::string policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::Full: return "full";
    case PolicyKind::Linear: return "linear";
    case PolicyKind::GradNorm: return "gradnorm";
    case PolicyKind::Smart: return "smart";
  }
  return "?";
}

std::string json_digest(const nlohmann::json& j) {
  std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& where) {
  if (!j.is_object()) throw config_error(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw config_error(where + ": unknown key '" + it.key() + "'");
  }
}

SeedPack resolve_seeds(std::uint64_t master, const nlohmann::json* overrides) {
  SeedPack s;
  s.master = master;
  Rng root(master);
  s.init = root.stream(1).next_u64();
  s.data = root.stream(2).next_u64();
  s.tailor = root.stream(3).next_u64();
  s.task = root.stream(4).next_u64();
  if (overrides) {
    require_keys(*overrides, {"init", "data", "tailor", "task"}, "seeds");
    if (overrides->contains("init")) s.init = overrides->at("init").get<std::uint64_t>();
    if (overrides->contains("data")) s.data = overrides->at("data").get<std::uint64_t>();
    if (overrides->contains("tailor")) s.tailor = overrides->at("tailor").get<std::uint64_t>();
    if (overrides->contains("task")) s.task = overrides->at("task").get<std::uint64_t>();
  }
  return s;
}

namespace {

nlohmann::json parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config parse error in " + path + ": " + e.what());
  }
}

TaskConfig task_from_json(const nlohmann::json& j) {
  TaskConfig t;
  if (j.is_string()) {
    t.id = j.get<std::string>();
    return t;
  }
  require_keys(j, {"id", "dir"}, "task");
  t.id = j.at("id").get<std::string>();
  t.dir = j.value("dir", "");
  return t;
}

nlohmann::json task_to_json(const TaskConfig& t) {
  nlohmann::json j;
  j["id"] = t.id;
  if (!t.dir.empty()) j["dir"] = t.dir;
  return j;
}

void network_from_json(const nlohmann::json& j, std::vector<LayerSpec>& layers,
                       std::vector<FreezeUnit>& units) {
  require_keys(j, {"layers", "units"}, "network");
  layers = layers_from_json(j.at("layers"));
  if (!j.contains("units") || (j.at("units").is_string() && j.at("units").get<std::string>() == "auto")) {
    units = auto_units(layers);
  } else if (j.at("units").is_array()) {
    // either full objects or plain index lists
    const auto& arr = j.at("units");
    if (!arr.empty() && arr.front().is_array()) {
      int id = 0;
      for (const auto& e : arr) {
        FreezeUnit u;
        u.unit_id = id++;
        u.layer_indices = e.get<std::vector<int>>();
        units.push_back(std::move(u));
      }
    } else {
      units = units_from_json(arr);
    }
  } else {
    throw config_error("network.units must be \"auto\" or an array");
  }
  validate_units(layers, units);
}

PolicyConfig policy_from_json(const nlohmann::json& j) {
  PolicyConfig p;
  if (j.is_string()) {
    const std::string k = j.get<std::string>();
    if (k == "full") p.kind = PolicyKind::Full;
    else if (k == "linear") p.kind = PolicyKind::Linear;
    else if (k == "gradnorm") p.kind = PolicyKind::GradNorm;
    else if (k == "smart") p.kind = PolicyKind::Smart;
    else throw config_error("unknown policy '" + k + "'");
    return p;
  }
  require_keys(j, {"kind", "t0", "intervals_per_epoch", "percentile", "min_history"}, "policy");
  const std::string k = j.at("kind").get<std::string>();
  if (k == "full") {
    p.kind = PolicyKind::Full;
  } else if (k == "linear") {
    p.kind = PolicyKind::Linear;
    p.linear_t0 = j.value("t0", 0.5);
    if (p.linear_t0 <= 0.0 || p.linear_t0 > 1.0) throw config_error("policy.t0 must lie in (0,1]");
  } else if (k == "gradnorm") {
    p.kind = PolicyKind::GradNorm;
    p.gradnorm.intervals_per_epoch = j.value("intervals_per_epoch", 4);
    p.gradnorm.percentile = j.value("percentile", 0.5);
    if (p.gradnorm.intervals_per_epoch < 1) throw config_error("policy.intervals_per_epoch must be >= 1");
    if (p.gradnorm.percentile <= 0.0 || p.gradnorm.percentile >= 1.0)
      throw config_error("policy.percentile must lie in (0,1)");
  } else if (k == "smart") {
    p.kind = PolicyKind::Smart;
    p.min_history = j.value("min_history", 5);
    if (p.min_history < 1) throw config_error("policy.min_history must be >= 1");
  } else {
    throw config_error("unknown policy '" + k + "'");
  }
  return p;
}

nlohmann::json policy_to_json(const PolicyConfig& p) {
  nlohmann::json j;
  j["kind"] = policy_name(p.kind);
  if (p.kind == PolicyKind::Linear) j["t0"] = p.linear_t0;
  if (p.kind == PolicyKind::GradNorm) {
    j["intervals_per_epoch"] = p.gradnorm.intervals_per_epoch;
    j["percentile"] = p.gradnorm.percentile;
  }
  if (p.kind == PolicyKind::Smart) j["min_history"] = p.min_history;
  return j;
}

}  // namespace

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  require_keys(j,
               {"task", "network", "epochs", "batch_size", "lr", "momentum", "lr_schedule", "policy",
                "predictor", "tailored_size", "window", "freeze_interval", "snapshot_interval", "seed",
                "seeds", "out_dir", "run_name"},
               "config");
  ExperimentConfig c;
  c.task = task_from_json(j.at("task"));
  network_from_json(j.at("network"), c.layers, c.units);
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.value("batch_size", 32);
  c.lr = j.at("lr").get<double>();
  c.momentum = j.value("momentum", 0.9);
  c.lr_schedule = j.value("lr_schedule", "cosine");
  c.policy = policy_from_json(j.at("policy"));
  c.predictor_path = j.value("predictor", "");
  c.tailored_size = j.value("tailored_size", 1024);
  c.window = j.value("window", 30);
  c.freeze_interval = j.value("freeze_interval", 0);
  c.snapshot_interval = j.value("snapshot_interval", 0);
  std::uint64_t master = j.value("seed", std::uint64_t(1));
  const nlohmann::json* ov = j.contains("seeds") ? &j.at("seeds") : nullptr;
  c.seeds = resolve_seeds(master, ov);
  c.out_dir = j.value("out_dir", "out");
  c.run_name = j.value("run_name", "");

  if (c.epochs < 1) throw config_error("epochs must be >= 1");
  if (c.batch_size < 1) throw config_error("batch_size must be >= 1");
  if (c.lr <= 0.0) throw config_error("lr must be positive");
  if (c.momentum < 0.0 || c.momentum >= 1.0) throw config_error("momentum must lie in [0,1)");
  if (c.lr_schedule != "cosine" && c.lr_schedule != "constant")
    throw config_error("lr_schedule must be cosine or constant");
  if (c.tailored_size < 1) throw config_error("tailored_size must be >= 1");
  if (c.window < 1) throw config_error("window must be >= 1");
  if (c.policy.kind == PolicyKind::Smart && c.predictor_path.empty())
    throw config_error("policy smart requires a predictor path");
  if (c.policy.kind == PolicyKind::Smart && c.policy.min_history > c.window)
    throw config_error("policy.min_history must not exceed window");

  nlohmann::json full = experiment_config_to_json(c);
  c.config_digest = json_digest(full);
  // the grouping identity for report: same task, network and training
  // setup; policy machinery (kind, predictor, cadences) is the compared
  // variable and stays out
  nlohmann::json group = full;
  for (const char* k : {"seed", "seeds", "out_dir", "run_name", "policy", "predictor", "tailored_size",
                        "window", "freeze_interval", "snapshot_interval"})
    group.erase(k);
  c.group_digest = json_digest(group);
  return c;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["task"] = task_to_json(c.task);
  j["network"] = {{"layers", layers_to_json(c.layers)}, {"units", units_to_json(c.units)}};
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["lr_schedule"] = c.lr_schedule;
  j["policy"] = policy_to_json(c.policy);
  if (!c.predictor_path.empty()) j["predictor"] = c.predictor_path;
  j["tailored_size"] = c.tailored_size;
  j["window"] = c.window;
  j["freeze_interval"] = c.freeze_interval;
  j["snapshot_interval"] = c.snapshot_interval;
  j["seed"] = c.seeds.master;
  j["seeds"] = {{"init", c.seeds.init}, {"data", c.seeds.data}, {"tailor", c.seeds.tailor},
                {"task", c.seeds.task}};
  j["out_dir"] = c.out_dir;
  if (!c.run_name.empty()) j["run_name"] = c.run_name;
  return j;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(parse_file(path));
}

GenConfig gen_config_from_json(const nlohmann::json& j) {
  require_keys(j,
               {"task", "network", "reference_epochs", "generation_epochs", "checkpoints_per_epoch",
                "tailored_size", "window", "stabilization", "lr", "momentum", "batch_size",
                "oracle_freeze", "seed", "generation_seeds", "out_dir"},
               "config");
  GenConfig c;
  c.task = task_from_json(j.at("task"));
  network_from_json(j.at("network"), c.layers, c.units);
  c.reference_epochs = j.at("reference_epochs").get<int>();
  c.generation_epochs = j.at("generation_epochs").get<int>();
  c.checkpoints_per_epoch = j.value("checkpoints_per_epoch", 1);
  c.tailored_size = j.value("tailored_size", 1024);
  c.window = j.value("window", 30);
  if (j.contains("stabilization")) {
    const auto& s = j.at("stabilization");
    require_keys(s, {"window", "eps", "min_score"}, "stabilization");
    c.stab.window = s.value("window", 5);
    c.stab.eps = s.value("eps", 0.01);
    c.stab.min_score = s.value("min_score", 0.6);
  }
  c.lr = j.at("lr").get<double>();
  c.momentum = j.value("momentum", 0.9);
  c.batch_size = j.value("batch_size", 32);
  c.oracle_freeze = j.value("oracle_freeze", true);
  c.seed = j.value("seed", std::uint64_t(1));
  if (j.contains("generation_seeds"))
    c.generation_seeds = j.at("generation_seeds").get<std::vector<std::uint64_t>>();
  c.out_dir = j.value("out_dir", "out");

  if (c.reference_epochs < 0) throw config_error("reference_epochs must be >= 0");
  if (c.generation_epochs < 1) throw config_error("generation_epochs must be >= 1");
  if (c.checkpoints_per_epoch < 1) throw config_error("checkpoints_per_epoch must be >= 1");
  if (c.lr <= 0.0) throw config_error("lr must be positive");
  if (c.stab.window < 2) throw config_error("stabilization.window must be >= 2");
  if (c.stab.eps <= 0.0) throw config_error("stabilization.eps must be positive");
  if (c.stab.min_score < 0.0 || c.stab.min_score > 1.0)
    throw config_error("stabilization.min_score must lie in [0,1]");

  nlohmann::json norm = j;
  norm.erase("out_dir");
  c.config_digest = json_digest(norm);
  return c;
}

GenConfig load_gen_config(const std::string& path) { return gen_config_from_json(parse_file(path)); }

TrainPredictorFileConfig train_predictor_config_from_json(const nlohmann::json& j) {
  require_keys(j,
               {"dataset", "datasets", "out", "lr", "momentum", "epochs", "batch_size", "class_weight_0",
                "class_weight_1", "holdout_fraction", "standardize", "min_sequence_length", "hidden",
                "feat", "z_hidden", "seed"},
               "config");
  TrainPredictorFileConfig c;
  if (j.contains("dataset")) c.dataset_paths.push_back(j.at("dataset").get<std::string>());
  if (j.contains("datasets"))
    for (const auto& p : j.at("datasets")) c.dataset_paths.push_back(p.get<std::string>());
  if (c.dataset_paths.empty()) throw config_error("train-predictor config needs dataset or datasets");
  c.out_path = j.value("out", "predictor.frzp");
  c.lr = j.value("lr", 0.02);
  c.momentum = j.value("momentum", 0.9);
  c.epochs = j.value("epochs", 12);
  c.batch_size = j.value("batch_size", 16);
  c.class_weight_0 = j.value("class_weight_0", 0.0);
  c.class_weight_1 = j.value("class_weight_1", 0.0);
  c.holdout_fraction = j.value("holdout_fraction", 0.1);
  c.standardize = j.value("standardize", false);
  c.min_sequence_length = j.value("min_sequence_length", 1);
  c.hidden = j.value("hidden", 256);
  c.feat = j.value("feat", 64);
  c.z_hidden = j.value("z_hidden", 32);
  c.seed = j.value("seed", std::uint64_t(1));
  if (c.lr < 0.0) throw config_error("lr must be nonnegative");
  if (c.epochs < 0) throw config_error("epochs must be >= 0");
  if (c.batch_size < 1) throw config_error("batch_size must be >= 1");
  if (c.holdout_fraction < 0.0 || c.holdout_fraction >= 1.0)
    throw config_error("holdout_fraction must lie in [0,1)");
  if (c.min_sequence_length < 1) throw config_error("min_sequence_length must be >= 1");
  return c;
}

TrainPredictorFileConfig load_train_predictor_config(const std::string& path) {
  return train_predictor_config_from_json(parse_file(path));
}

}  // namespace frz
