#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "iterlstm/checkpoint.hpp"
#include "iterlstm/dynamics.hpp"
#include "iterlstm/gradcheck.hpp"
#include "iterlstm/runconfig.hpp"
#include "iterlstm/trainer.hpp"

namespace {

using namespace iterlstm;

TokenMode parse_mode(const std::string& mode) {
  if (mode == "word") return TokenMode::kWord;
  if (mode == "char") return TokenMode::kChar;
  throw ConfigError("--mode must be word or char");
}

std::vector<std::size_t> parse_iteration_list(const std::string& text) {
  std::vector<std::size_t> counts;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t idx = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &idx);
    } catch (const std::exception&) {
      throw ConfigError("bad iteration count: " + item);
    }
    if (idx != item.size() || v == 0)
      throw ConfigError("bad iteration count: " + item);
    counts.push_back(v);
  }
  if (counts.empty()) throw ConfigError("--iterations list is empty");
  return counts;
}

TrainConfig load_config(const std::string& config_path, std::int64_t seed,
                        const std::string& mode) {
  TrainConfig cfg = parse_run_config(config_path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (!mode.empty()) cfg.token_mode = parse_mode(mode);
  return cfg;
}

int cmd_train(const std::string& config_path, const std::string& corpus_dir,
              const std::string& out_dir, std::int64_t seed,
              const std::string& mode, bool resume) {
  TrainConfig cfg = load_config(config_path, seed, mode);
  CorpusSet corpus = load_corpus_set(corpus_dir, cfg.token_mode);

  TrainOptions opts;
  opts.out_dir = out_dir;
  opts.resume = resume;
  opts.echo = &std::cout;
  TrainResult result = train(cfg, corpus, opts);

  nlohmann::ordered_json summary{
      {"parameter_count", result.parameter_count},
      {"vocab_size", corpus.vocab.size()},
      {"epochs_run", result.records.size()},
      {"best_epoch", result.best_epoch},
      {"best_valid_ppl", result.best_valid_ppl},
      {"final_valid_ppl", result.final_valid_ppl}};

  LoadedCheckpoint last = load_checkpoint(out_dir + "/last");
  summary["test_ppl_final"] = evaluate_perplexity(
      last.model, corpus.test, cfg.batch_size, cfg.unroll_length);
  if (checkpoint_exists(out_dir + "/best")) {
    LoadedCheckpoint best = load_checkpoint(out_dir + "/best");
    summary["test_ppl_best"] = evaluate_perplexity(
        best.model, corpus.test, cfg.batch_size, cfg.unroll_length);
  }

  std::ofstream mf(out_dir + "/metrics.json",
                   std::ios::binary | std::ios::trunc);
  if (!mf) throw ConfigError("cannot write metrics in " + out_dir);
  mf << summary.dump(2) << "\n";
  std::cout << summary.dump() << std::endl;
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& corpus_dir,
              const std::string& out_dir, const std::string& iteration_list,
              std::int64_t seed, const std::string& mode) {
  TrainConfig base = load_config(config_path, seed, mode);
  const std::vector<std::size_t> counts = parse_iteration_list(iteration_list);
  CorpusSet corpus = load_corpus_set(corpus_dir, base.token_mode);
  std::filesystem::create_directories(out_dir);

  std::vector<std::pair<std::size_t, double>> rows;
  bool any_failed = false;
  for (std::size_t count : counts) {
    TrainConfig cfg = base;
    cfg.iteration.mode = IterationMode::kFixed;
    cfg.iteration.fixed_iterations = count;
    if (cfg.iteration.max_iterations < count)
      cfg.iteration.max_iterations = count;
    const std::string run_dir = out_dir + "/iters_" + std::to_string(count);
    try {
      TrainOptions opts;
      opts.out_dir = run_dir;
      opts.echo = &std::cout;
      train(cfg, corpus, opts);
      const std::string prefix = checkpoint_exists(run_dir + "/best")
                                     ? run_dir + "/best"
                                     : run_dir + "/last";
      LoadedCheckpoint ck = load_checkpoint(prefix);
      const double ppl = evaluate_perplexity(ck.model, corpus.test,
                                             cfg.batch_size, cfg.unroll_length);
      rows.emplace_back(count, ppl);
    } catch (const std::exception& e) {
      any_failed = true;
      std::cerr << "sweep run iterations=" << count << " failed: " << e.what()
                << std::endl;
    }
  }

  std::ostringstream csv;
  csv << "iterations,test_perplexity\n";
  csv << std::setprecision(17);
  for (const auto& [count, ppl] : rows) csv << count << "," << ppl << "\n";

  std::ofstream out(out_dir + "/sweep.csv", std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write sweep.csv in " + out_dir);
  out << csv.str();
  std::cout << csv.str();
  return any_failed ? 1 : 0;
}

int cmd_check_condition(const std::string& prefix) {
  LoadedCheckpoint ck = load_checkpoint(prefix);
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < ck.model.cells.size(); ++l) {
    const ConditionReport r = check_condition(ck.model.cells[l]);
    std::printf(
        "layer %zu: sigma_j=%.6f sigma_i=%.6f sigma_f=%.6f sigma_o=%.6f "
        "margin=%.6f holds=%s\n",
        l, r.sigma_j, r.sigma_i, r.sigma_f, r.sigma_o, r.margin,
        r.holds ? "yes" : "no");
    layers.push_back(nlohmann::ordered_json{{"layer", l},
                                            {"sigma_j", r.sigma_j},
                                            {"sigma_i", r.sigma_i},
                                            {"sigma_f", r.sigma_f},
                                            {"sigma_o", r.sigma_o},
                                            {"margin", r.margin},
                                            {"holds", r.holds}});
  }
  std::cout << nlohmann::ordered_json{{"layers", layers}}.dump() << std::endl;
  return 0;
}

int cmd_lyapunov(const std::string& checkpoint, bool random_mode,
                 std::size_t draws, std::size_t tau, double margin,
                 bool margin_set, std::uint64_t seed, std::size_t layer,
                 const std::string& out_path) {
  if (random_mode == !checkpoint.empty())
    throw ConfigError("give exactly one of --checkpoint and --random");
  if (draws == 0) throw ConfigError("--draws must be at least 1");

  DrawOptions opts;
  opts.tau = tau;

  CellParams cell;
  if (!checkpoint.empty()) {
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    if (layer >= ck.model.cells.size())
      throw ConfigError("--layer out of range");
    cell = ck.model.cells[layer];
    if (margin_set) cell = spectral_rescale(cell, margin);
  }

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::binary | std::ios::trunc);
    if (!file) throw ConfigError("cannot write " + out_path);
    os = &file;
  }

  for (std::size_t d = 0; d < draws; ++d) {
    const std::uint64_t draw_seed = Rng::derive(seed, d);
    const MapDraw rec = random_mode
                            ? run_condition_draw(draw_seed,
                                                 margin_set ? margin : 0.5, opts)
                            : run_map_draw(cell, draw_seed, opts);
    *os << draw_record_json(rec) << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::size_t units, std::size_t models, std::uint64_t seed,
                  const std::string& corrupt) {
  if (units < 2 || units > 16)
    throw ConfigError("--units must lie in [2, 16]");
  GradCheckOptions opts;
  opts.max_units = units;
  opts.models = models;
  opts.seed = seed;
  opts.corrupt_buffer = corrupt;
  const GradCheckReport report = run_gradient_checks(opts);

  for (const auto& g : report.groups)
    std::printf("%-8s max rel err %.3e (%s)\n", g.name.c_str(), g.max_rel_err,
                g.worst_coord.empty() ? "all below floor" : g.worst_coord.c_str());
  std::printf("worst rel err %.3e at %s\n", report.worst_rel_err,
              report.worst_coord.empty() ? "-" : report.worst_coord.c_str());
  std::printf("%s\n", report.pass ? "PASS" : ("FAIL at " + report.worst_coord).c_str());
  return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iterative LSTM laboratory"};
  app.require_subcommand(1);

  std::string config_path, corpus_dir, out_dir, mode, checkpoint, iteration_list;
  std::string out_path, corrupt;
  std::int64_t seed_override = -1;
  std::uint64_t seed = 1;
  std::size_t draws = 100, tau = 200, layer = 0, units = 8, models = 20;
  double margin = 0.0;
  bool resume = false, random_mode = false;

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", config_path, "run config file")->required();
  train_cmd->add_option("--corpus", corpus_dir, "corpus directory")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--seed", seed_override, "seed override");
  train_cmd->add_option("--mode", mode, "token mode override (word|char)");
  train_cmd->add_flag("--resume", resume, "continue from <out>/last");

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep-iterations", "fixed-iteration sweep");
  sweep_cmd->add_option("--config", config_path, "run config file")->required();
  sweep_cmd->add_option("--corpus", corpus_dir, "corpus directory")->required();
  sweep_cmd->add_option("--out", out_dir, "output directory")->required();
  sweep_cmd->add_option("--iterations", iteration_list, "comma list, e.g. 1,2,4")
      ->required();
  sweep_cmd->add_option("--seed", seed_override, "seed override");
  sweep_cmd->add_option("--mode", mode, "token mode override (word|char)");

  CLI::App* cond_cmd =
      app.add_subcommand("check-condition", "spectral condition per layer");
  cond_cmd->add_option("checkpoint", checkpoint, "checkpoint prefix")->required();

  CLI::App* lyap_cmd =
      app.add_subcommand("lyapunov", "Liapunov-exponent Monte Carlo");
  lyap_cmd->add_option("--checkpoint", checkpoint, "checkpoint prefix");
  lyap_cmd->add_flag("--random", random_mode, "draw random parameter sets");
  lyap_cmd->add_option("--draws", draws, "number of draws");
  lyap_cmd->add_option("--tau", tau, "exponent-estimate steps");
  CLI::Option* margin_opt =
      lyap_cmd->add_option("--margin", margin, "spectral-rescale target margin");
  lyap_cmd->add_option("--seed", seed, "base seed");
  lyap_cmd->add_option("--layer", layer, "checkpoint layer index");
  lyap_cmd->add_option("--out", out_path, "write records here instead of stdout");

  CLI::App* grad_cmd = app.add_subcommand("gradcheck", "gradient verification");
  grad_cmd->add_option("--units", units, "max hidden units (2..16)");
  grad_cmd->add_option("--models", models, "number of random models");
  grad_cmd->add_option("--seed", seed, "base seed");
  grad_cmd->add_option("--corrupt", corrupt,
                       "harness self-test: damage this gradient buffer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed())
      return cmd_train(config_path, corpus_dir, out_dir, seed_override, mode,
                       resume);
    if (sweep_cmd->parsed())
      return cmd_sweep(config_path, corpus_dir, out_dir, iteration_list,
                       seed_override, mode);
    if (cond_cmd->parsed()) return cmd_check_condition(checkpoint);
    if (lyap_cmd->parsed())
      return cmd_lyapunov(checkpoint, random_mode, draws, tau, margin,
                          margin_opt->count() > 0, seed, layer, out_path);
    if (grad_cmd->parsed())
      return cmd_gradcheck(units, models, seed, corrupt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 2;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << std::endl;
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 2;
}
