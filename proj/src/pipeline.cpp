#include "simreal/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "simreal/binio.hpp"
#include "simreal/fields.hpp"

namespace simreal::pipeline {

namespace {

namespace fs = std::filesystem;
using fields::format_value;

void write_text(const std::string& path, const std::string& text) {
  binio::write_file(path, std::vector<char>(text.begin(), text.end()));
}

std::string read_text(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

bool is_pairing_sensitive(train::Regime r) {
  return r == train::Regime::SimPlusRealPairwise || r == train::Regime::SimPlusRealNoPairwise;
}

// Sort key: regime order, then the label itself, then seed.
std::pair<int, std::string> label_key(const std::string& label) {
  const std::string base = label.substr(0, label.find('@'));
  for (int i = 0; i < static_cast<int>(std::size(train::kAllRegimes)); ++i)
    if (train::regime_name(train::kAllRegimes[i]) == base) return {i, label};
  return {static_cast<int>(std::size(train::kAllRegimes)), label};
}

void sort_rows(std::vector<ReportRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
    const auto ka = label_key(a.regime), kb = label_key(b.regime);
    if (ka != kb) return ka < kb;
    return a.seed < b.seed;
  });
}

// One AVG row per label, in sorted order.
std::vector<ReportRow> averages(const std::vector<ReportRow>& sorted) {
  std::vector<ReportRow> out;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    ReportRow avg;
    avg.regime = sorted[i].regime;
    avg.fingerprint = sorted[i].fingerprint;
    double loss = 0.0;
    bool has_loss = true;
    while (j < sorted.size() && sorted[j].regime == avg.regime) {
      const auto& r = sorted[j];
      has_loss = has_loss && r.test_loss.has_value();
      if (r.test_loss) loss += *r.test_loss;
      avg.mean_capped_distance += r.mean_capped_distance;
      avg.success_rate += r.success_rate;
      if (r.fingerprint != avg.fingerprint) avg.fingerprint = "mixed";
      ++j;
    }
    const double n = static_cast<double>(j - i);
    if (has_loss) avg.test_loss = loss / n;
    avg.mean_capped_distance /= n;
    avg.success_rate /= n;
    out.push_back(avg);
    i = j;
  }
  return out;
}

std::string optional_value(const std::optional<double>& v) { return v ? format_value(*v) : std::string(); }

const data::Dataset& paired_for(const ExperimentConfig& c, const data::Dataset& paired,
                                const data::Dataset& paired_clutter) {
  return c.pairing == Pairing::Clutter ? paired_clutter : paired;
}

train::TrainConfig train_config(const ExperimentConfig& c, train::Regime regime) {
  train::TrainConfig t = c.train;
  t.regime = regime;
  t.seed = derive_seed(c.seed, "train");
  t.threads = c.threads;
  t.arch.action_bound = c.action_bound;
  return t;
}

ReportRow run_eval(const ExperimentConfig& c, const std::string& label, const control::DistanceFn& fn,
                   std::optional<double> test_loss) {
  const Layout layout{c.output};
  const control::EvalSummary s =
      control::evaluate(fn, c.eval_environment(), c.control, derive_seed(c.seed, "eval"), c.threads);
  ReportRow row;
  row.regime = label;
  row.test_loss = test_loss;
  row.mean_capped_distance = s.mean_capped_distance;
  row.success_rate = s.success_rate;
  row.seed = c.seed;
  row.fingerprint = dataset_fingerprint(layout);
  write_text(layout.eval(label), std::string(kRowHeader) + "\n" + format_row(row) + "\n");
  write_text(layout.trajectories(label), control::trajectory_csv(s));
  return row;
}

}  // namespace

std::string run_label(const ExperimentConfig& config, train::Regime regime) {
  std::string label(train::regime_name(regime));
  if (config.pairing == Pairing::Clutter && is_pairing_sensitive(regime)) label += "@clutter-pairs";
  return label;
}

std::string format_row(const ReportRow& r) {
  return r.regime + "," + std::to_string(r.seed) + "," + optional_value(r.test_loss) + "," +
         format_value(r.mean_capped_distance) + "," + format_value(r.success_rate) + "," + r.fingerprint;
}

ReportRow parse_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  if (cells.size() != 6) throw FormatError("report row: expected 6 cells, got " + std::to_string(cells.size()));
  ReportRow r;
  r.regime = cells[0];
  try {
    r.seed = std::stoull(cells[1]);
  } catch (const std::exception&) {
    throw FormatError("report row: malformed seed '" + cells[1] + "'");
  }
  double v = 0.0;
  if (!cells[2].empty()) {
    if (!fields::parse_value(cells[2], v)) throw FormatError("report row: malformed test_loss");
    r.test_loss = v;
  }
  if (!fields::parse_value(cells[3], r.mean_capped_distance) || !fields::parse_value(cells[4], r.success_rate))
    throw FormatError("report row: malformed metric");
  r.fingerprint = cells[5];
  return r;
}

std::string dataset_fingerprint(const Layout& layout) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& path : {layout.source(), layout.paired(), layout.paired_clutter(), layout.test()}) {
    const auto bytes = binio::read_file(path);
    for (char ch : bytes) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void cmd_generate(const ExperimentConfig& c) {
  const Layout layout{c.output};
  data::save(data::generate_source_dataset(c.source_set(), derive_seed(c.seed, "source"), c.threads), layout.source());
  data::save(data::generate_paired_dataset(c.paired_set(false), derive_seed(c.seed, "paired"), c.threads),
             layout.paired());
  data::save(data::generate_paired_dataset(c.paired_set(true), derive_seed(c.seed, "paired_clutter"), c.threads),
             layout.paired_clutter());
  data::save(data::generate_source_dataset(c.test_set(), derive_seed(c.seed, "test"), c.threads), layout.test());
}

train::TrainReport cmd_train(const ExperimentConfig& c, train::Regime regime) {
  const Layout layout{c.output};
  const std::string label = run_label(c, regime);
  const data::Dataset source = data::load(layout.source());
  const data::Dataset paired = data::load(layout.paired());
  const data::Dataset paired_clutter = data::load(layout.paired_clutter());
  const data::Dataset test = data::load(layout.test());
  train::TrainingData d;
  d.source = &source;
  d.paired = regime == train::Regime::RealOnlyNoClutter ? &paired : &paired_for(c, paired, paired_clutter);
  d.target_clutter = &paired_clutter;
  d.test = &test;
  train::TrainReport report = train::train(train_config(c, regime), d);
  nn::save_checkpoint(report.params, layout.model(label));
  write_text(layout.epochs(label), train::history_csv(report.history));
  return report;
}

ReportRow cmd_eval(const ExperimentConfig& c, train::Regime regime) {
  const Layout layout{c.output};
  const std::string label = run_label(c, regime);
  const nn::NetworkParams params = nn::load_checkpoint(layout.model(label));
  const data::Dataset test = data::load(layout.test());
  const double loss = train::evaluate_test_loss(params, test, c.threads);
  return run_eval(c, label, control::network_distance(params), loss);
}

ReportRow cmd_oracle_eval(const ExperimentConfig& c) {
  return run_eval(c, "oracle", control::oracle_distance(), std::nullopt);
}

std::string summary_csv(std::vector<ReportRow> rows) {
  if (rows.empty()) throw ContractError("report: no rows");
  sort_rows(rows);
  const auto avg = averages(rows);
  std::string out = std::string(kRowHeader) + "\n";
  std::size_t a = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += format_row(rows[i]) + "\n";
    if (i + 1 == rows.size() || rows[i + 1].regime != rows[i].regime) {
      const auto& r = avg[a++];
      out += r.regime + ",AVG," + optional_value(r.test_loss) + "," + format_value(r.mean_capped_distance) + "," +
             format_value(r.success_rate) + "," + r.fingerprint + "\n";
    }
  }
  return out;
}

std::string bars_csv(std::vector<ReportRow> rows) {
  if (rows.empty()) throw ContractError("report: no rows");
  sort_rows(rows);
  std::string out = "regime,test_loss,mean_capped_distance,success_rate\n";
  for (const auto& r : averages(rows))
    out += r.regime + "," + optional_value(r.test_loss) + "," + format_value(r.mean_capped_distance) + "," +
           format_value(r.success_rate) + "\n";
  return out;
}

std::vector<ReportRow> cmd_report(const ExperimentConfig& c, const std::vector<std::string>& extra_roots) {
  std::vector<std::string> roots{c.output};
  roots.insert(roots.end(), extra_roots.begin(), extra_roots.end());
  std::vector<ReportRow> rows;
  for (const auto& root : roots) {
    const fs::path dir = fs::path(root) / "eval";
    if (!fs::is_directory(dir)) throw IoError("report: no eval directory at " + dir.string());
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (e.is_regular_file() && name.ends_with(".csv") && !name.ends_with("_trials.csv")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::istringstream in(read_text(f));
      std::string line;
      std::getline(in, line);
      if (line != kRowHeader) throw FormatError(f + ": unexpected header");
      while (std::getline(in, line))
        if (!line.empty()) rows.push_back(parse_row(line));
    }
  }
  if (rows.empty()) throw ContractError("report: no eval rows found");
  const Layout layout{c.output};
  write_text(layout.summary(), summary_csv(rows));
  write_text(layout.bars(), bars_csv(rows));
  return rows;
}

void run_all(const ExperimentConfig& c) {
  cmd_generate(c);
  for (train::Regime r : c.regime_list()) {
    cmd_train(c, r);
    cmd_eval(c, r);
  }
  cmd_oracle_eval(c);
  cmd_report(c);
}

}  // namespace simreal::pipeline
