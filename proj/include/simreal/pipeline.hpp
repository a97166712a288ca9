#pragma once

#include <optional>
#include <string>
#include <vector>

#include "simreal/config.hpp"

namespace simreal::pipeline {

// Files under the experiment output directory.
struct Layout {
  std::string root;

  std::string source() const { return root + "/data/source.psds"; }
  std::string paired() const { return root + "/data/paired.psds"; }
  std::string paired_clutter() const { return root + "/data/paired_clutter.psds"; }
  std::string test() const { return root + "/data/test.psds"; }
  std::string model(const std::string& label) const { return root + "/models/" + label + ".psnn"; }
  std::string epochs(const std::string& label) const { return root + "/logs/" + label + "_epochs.csv"; }
  std::string eval(const std::string& label) const { return root + "/eval/" + label + ".csv"; }
  std::string trajectories(const std::string& label) const { return root + "/eval/" + label + "_trials.csv"; }
  std::string summary() const { return root + "/report/summary.csv"; }
  std::string bars() const { return root + "/report/bars.csv"; }
};

// Row label: the regime name, or "oracle". Pairwise regimes trained on the
// clutter-paired set carry a "@clutter-pairs" suffix.
std::string run_label(const ExperimentConfig& config, train::Regime regime);

struct ReportRow {
  std::string regime;
  std::optional<double> test_loss;  // absent for the oracle
  double mean_capped_distance = 0.0;
  double success_rate = 0.0;
  std::uint64_t seed = 0;
  std::string fingerprint;
};

inline constexpr const char* kRowHeader = "regime,seed,test_loss,mean_capped_distance,success_rate,fingerprint";
std::string format_row(const ReportRow& row);
ReportRow parse_row(const std::string& line);

// Hex FNV-1a 64 over the four dataset files in fixed order.
std::string dataset_fingerprint(const Layout& layout);

// Writes source, paired, paired_clutter and test sets.
void cmd_generate(const ExperimentConfig& config);
train::TrainReport cmd_train(const ExperimentConfig& config, train::Regime regime);
// Test loss on the target-with-clutter test set plus closed-loop metrics.
ReportRow cmd_eval(const ExperimentConfig& config, train::Regime regime);
// Same protocol with the ground-truth distance in place of the network.
ReportRow cmd_oracle_eval(const ExperimentConfig& config);

// Input rows plus one "AVG" row per regime label; labels ordered by regime,
// rows within a label by seed.
std::string summary_csv(std::vector<ReportRow> rows);
// regime,test_loss,mean_capped_distance,success_rate from the AVG rows.
std::string bars_csv(std::vector<ReportRow> rows);
// Reads every eval row under the output directory and `extra_roots`, writes summary and bars.
std::vector<ReportRow> cmd_report(const ExperimentConfig& config, const std::vector<std::string>& extra_roots = {});

// generate, train and eval every configured regime, oracle-eval, report.
void run_all(const ExperimentConfig& config);

}  // namespace simreal::pipeline
