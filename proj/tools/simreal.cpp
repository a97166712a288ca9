// simreal: dataset generation, training, evaluation and reporting.
//
//   simreal generate   --config configs/desk.cfg
//   simreal train      --config configs/desk.cfg --regime sim-real-pairwise
//   simreal eval       --config configs/desk.cfg --regime sim-real-pairwise
//   simreal oracle-eval --config configs/desk.cfg
//   simreal report     --config configs/desk.cfg [--input other_out_dir ...]

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "simreal/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "experiment config file")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "override experiment.seed");
    app->add_option("--out", out, "override experiment.output");
    app->add_option("--threads", threads, "override experiment.threads");
  }

  simreal::ExperimentConfig load() const {
    simreal::ExperimentConfig c = simreal::load_config(config);
    if (seed) c.seed = *seed;
    if (out) c.output = *out;
    if (threads) c.threads = *threads;
    c.validate();
    return c;
  }
};

void print_row(const simreal::pipeline::ReportRow& row) {
  std::cout << simreal::pipeline::kRowHeader << "\n" << simreal::pipeline::format_row(row) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  simreal::retain_heap_memory();
  CLI::App app{"Sim-to-real distance-to-goal experiments"};
  app.require_subcommand(1);

  Common generate_opts, train_opts, eval_opts, oracle_opts, report_opts, all_opts;
  std::string train_regime, eval_regime;
  std::vector<std::string> report_inputs;

  auto* generate = app.add_subcommand("generate", "write source, paired and test datasets");
  generate_opts.attach(generate);
  auto* train = app.add_subcommand("train", "train one regime");
  train_opts.attach(train);
  train->add_option("--regime", train_regime, "regime name")->required();
  auto* eval = app.add_subcommand("eval", "test loss and closed-loop metrics for a trained regime");
  eval_opts.attach(eval);
  eval->add_option("--regime", eval_regime, "regime name")->required();
  auto* oracle = app.add_subcommand("oracle-eval", "closed-loop metrics with the ground-truth distance");
  oracle_opts.attach(oracle);
  auto* report = app.add_subcommand("report", "summary and bar-chart CSVs from eval rows");
  report_opts.attach(report);
  report->add_option("--input", report_inputs, "additional output directories to include");
  auto* all = app.add_subcommand("all", "generate, then train and eval every configured regime, oracle-eval, report");
  all_opts.attach(all);

  CLI11_PARSE(app, argc, argv);

  try {
    using namespace simreal;
    if (generate->parsed()) {
      const auto c = generate_opts.load();
      pipeline::cmd_generate(c);
      std::cout << "datasets written to " << c.output << "/data (fingerprint "
                << pipeline::dataset_fingerprint(pipeline::Layout{c.output}) << ")\n";
    } else if (train->parsed()) {
      const auto c = train_opts.load();
      const auto regime = train::parse_regime(train_regime);
      const auto r = pipeline::cmd_train(c, regime);
      std::cout << train::history_csv(r.history);
      std::cout << "checkpoint: " << pipeline::Layout{c.output}.model(pipeline::run_label(c, regime)) << "\n";
    } else if (eval->parsed()) {
      const auto c = eval_opts.load();
      print_row(pipeline::cmd_eval(c, train::parse_regime(eval_regime)));
    } else if (oracle->parsed()) {
      print_row(pipeline::cmd_oracle_eval(oracle_opts.load()));
    } else if (report->parsed()) {
      const auto c = report_opts.load();
      const auto rows = pipeline::cmd_report(c, report_inputs);
      std::cout << pipeline::summary_csv(rows);
    } else if (all->parsed()) {
      const auto c = all_opts.load();
      pipeline::run_all(c);
      std::cout << "summary: " << pipeline::Layout{c.output}.summary() << "\n";
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "simreal: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
