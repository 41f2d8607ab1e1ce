#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "frz/config.hpp"
#include "frz/container.hpp"
#include "frz/dataset_gen.hpp"
#include "frz/errors.hpp"
#include "frz/predictor.hpp"
#include "frz/runner.hpp"

namespace {

namespace fs = std::filesystem;

int cmd_gen_dataset(const std::string& config_path, const std::string& out_dir, std::uint64_t seed,
                    bool has_seed, bool quiet) {
  frz::GenConfig cfg = frz::load_gen_config(config_path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  if (has_seed) cfg.seed = seed;
  fs::create_directories(cfg.out_dir);

  frz::TaskData task = frz::load_task(cfg.task, frz::resolve_seeds(cfg.seed, nullptr).task);
  if (!quiet) std::cerr << "[frz] training reference model (" << cfg.reference_epochs << " epochs)\n";
  frz::NetworkState reference = frz::train_reference(cfg, task);
  frz::save_checkpoint(reference, cfg.out_dir + "/reference.frz");

  if (!quiet) std::cerr << "[frz] generating histories and labels\n";
  frz::GenResult res = frz::generate(cfg, reference, task);
  frz::save_dataset(res.dataset, cfg.out_dir + "/dataset.frzd");
  for (std::size_t i = 0; i < res.traces.size(); ++i)
    res.traces[i].write_csv(cfg.out_dir + "/cka_trace_run" + std::to_string(i) + ".csv");
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    std::ofstream ef(cfg.out_dir + "/gen_events_run" + std::to_string(i) + ".csv", std::ios::binary);
    ef << frz::events_to_csv(res.runs[i].events);
  }
  if (!quiet) {
    int pos = 0;
    for (const auto& r : res.dataset.records) pos += r.label;
    std::cerr << "[frz] dataset: " << res.dataset.records.size() << " records (" << pos
              << " freeze-labeled) -> " << cfg.out_dir << "/dataset.frzd\n";
  }
  return 0;
}

int cmd_train_predictor(const std::string& config_path, const std::string& out_dir, std::uint64_t seed,
                        bool has_seed, bool quiet) {
  frz::TrainPredictorFileConfig cfg = frz::load_train_predictor_config(config_path);
  if (has_seed) cfg.seed = seed;

  frz::DatasetFile first = frz::load_dataset(cfg.dataset_paths.front());
  std::vector<frz::TrainRecord> records = std::move(first.records);
  for (std::size_t i = 1; i < cfg.dataset_paths.size(); ++i) {
    frz::DatasetFile more = frz::load_dataset(cfg.dataset_paths[i]);
    if (more.tailored_size != first.tailored_size || more.window != first.window)
      throw frz::config_error("datasets disagree on tailored_size/window");
    for (auto& r : more.records) records.push_back(std::move(r));
  }
  if (cfg.min_sequence_length > 1) {
    std::erase_if(records, [&](const frz::TrainRecord& r) {
      return int(r.sequence.size()) < cfg.min_sequence_length;
    });
  }

  frz::PredictorTrainConfig tc;
  tc.lr = cfg.lr;
  tc.momentum = cfg.momentum;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.class_weight_0 = cfg.class_weight_0;
  tc.class_weight_1 = cfg.class_weight_1;
  tc.holdout_fraction = cfg.holdout_fraction;
  tc.seed = cfg.seed;
  tc.standardize = cfg.standardize;
  tc.window = first.window;
  tc.dims.input = first.tailored_size;
  tc.dims.hidden = cfg.hidden;
  tc.dims.feat = cfg.feat;
  tc.dims.z_hidden = cfg.z_hidden;

  if (!quiet)
    std::cerr << "[frz] training predictor on " << records.size() << " records, " << cfg.epochs
              << " epochs\n";
  frz::PredictorParams params = frz::train_predictor(records, tc);
  std::string out = cfg.out_path;
  if (!out_dir.empty()) out = out_dir + "/" + fs::path(out).filename().string();
  if (auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  frz::save_predictor(params, out);
  if (!quiet) std::cerr << "[frz] predictor saved to " << out << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& policy, const std::string& predictor,
            const std::string& out_dir, std::uint64_t seed, bool has_seed, bool quiet) {
  nlohmann::json j;
  {
    std::ifstream f(config_path);
    if (!f) throw frz::config_error("cannot open config file: " + config_path);
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw frz::config_error("config parse error: " + std::string(e.what()));
    }
  }
  if (!policy.empty()) j["policy"] = policy;
  if (!predictor.empty()) j["predictor"] = predictor;
  if (!out_dir.empty()) j["out_dir"] = out_dir;
  if (has_seed) {
    j["seed"] = seed;
    j.erase("seeds");
  }
  frz::ExperimentConfig cfg = frz::experiment_config_from_json(j);
  frz::RunResult res = frz::run_experiment(cfg, {}, true, quiet);
  if (!quiet)
    std::cerr << "[frz] " << res.summary.policy << " accuracy " << res.summary.accuracy << " total FLOPs "
              << res.summary.total_flops << "\n";
  std::cout << res.summary.to_json().dump(2) << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& summaries) {
  std::cout << frz::report_files(summaries);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attention-guided layer freezing at desk scale"};
  app.require_subcommand(1);

  std::string config_path, out_dir, policy, predictor;
  std::uint64_t seed = 0;
  bool quiet = false;
  std::vector<std::string> summaries;

  auto* gen = app.add_subcommand("gen-dataset", "train a reference model and emit a labeled history dataset");
  gen->add_option("--config", config_path, "generation config json")->required();
  auto* gen_seed = gen->add_option("--seed", seed, "override config seed");
  gen->add_option("--out-dir", out_dir, "output directory override");
  gen->add_flag("--quiet", quiet);

  auto* tp = app.add_subcommand("train-predictor", "train the attention predictor offline");
  tp->add_option("--config", config_path, "training config json")->required();
  auto* tp_seed = tp->add_option("--seed", seed, "override config seed");
  tp->add_option("--out-dir", out_dir, "output directory override");
  tp->add_flag("--quiet", quiet);

  auto* run = app.add_subcommand("run", "run one policy-controlled training experiment");
  run->add_option("--config", config_path, "experiment config json")->required();
  run->add_option("--policy", policy, "policy override: full|linear|gradnorm|smart");
  run->add_option("--predictor", predictor, "predictor file override (smart)");
  run->add_option("--out-dir", out_dir, "output directory override");
  auto* run_seed = run->add_option("--seed", seed, "override config seed");
  run->add_flag("--quiet", quiet);

  auto* rep = app.add_subcommand("report", "aggregate run summaries into a comparison table");
  rep->add_option("summaries", summaries, "summary json files")->required();
  rep->add_flag("--quiet", quiet);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_dataset(config_path, out_dir, seed, !gen_seed->empty(), quiet);
    if (tp->parsed()) return cmd_train_predictor(config_path, out_dir, seed, !tp_seed->empty(), quiet);
    if (run->parsed()) return cmd_run(config_path, policy, predictor, out_dir, seed, !run_seed->empty(), quiet);
    if (rep->parsed()) return cmd_report(summaries);
  } catch (const frz::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const frz::format_error& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const frz::error& e) {
    std::cerr << "run error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
