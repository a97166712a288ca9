#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "simreal/binio.hpp"
#include "simreal/pipeline.hpp"

using namespace simreal;
using namespace simreal::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("simreal_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string tiny_text(const fs::path& out, std::uint64_t seed = 3) {
  std::ostringstream s;
  s << "experiment.seed = " << seed << "\n"
    << "experiment.output = " << out.string() << "\n"
    << "experiment.regimes = sim-only, sim-real-pairwise\n"
    << "data.source_scenes = 5\ndata.source_actions = 3\n"
    << "data.paired_states = 4\ndata.paired_actions = 2\n"
    << "data.test_scenes = 3\ndata.test_actions = 2\n"
    << "train.epochs = 1\ntrain.batch_size = 8\n"
    << "net.conv1_channels = 2\nnet.conv2_channels = 2\nnet.conv3_channels = 2\n"
    << "net.dense1 = 4\nnet.dense2 = 4\nnet.mmd_width = 4\n"
    << "control.num_candidates = 40\ncontrol.trials = 2\n";
  return s.str();
}

std::string slurp(const fs::path& p) {
  const auto b = binio::read_file(p.string());
  return std::string(b.begin(), b.end());
}

ReportRow row(std::string regime, std::uint64_t seed, std::optional<double> loss, double dist, double succ) {
  return ReportRow{std::move(regime), loss, dist, succ, seed, "00000000000000aa"};
}

}  // namespace

TEST_CASE("config: defaults, overrides and canonical text") {
  const auto c = parse_config("experiment.seed = 42\ntrain.epochs = 7\ncontrol.trials = 3\ndata.test_radii = 0.02, 0.04\n");
  CHECK(c.seed == 42);
  CHECK(c.train.epochs == 7);
  CHECK(c.control.trials == 3);
  CHECK(c.test_radii == std::vector<double>{0.02, 0.04});
  CHECK(c.source_scenes == 2000);
  CHECK(c.regime_list().size() == 6);
  const std::string text = to_text(c);
  CHECK(text.find("train.epochs = 7\n") != std::string::npos);
  CHECK(text.find("scene.bottle_radius_min = ") != std::string::npos);
  CHECK(to_text(parse_config(text)) == text);
}

TEST_CASE("config errors name the offending key") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text, "t.cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("experiment.seed = 1\ntrain.epoch = 3\n").find("unknown key train.epoch") != std::string::npos);
  CHECK(message("train.epochs = 3\n").find("experiment.seed") != std::string::npos);
  CHECK(message("experiment.seed = 1\ntrain.epochs = three\n").find("train.epochs") != std::string::npos);
  CHECK(message("experiment.seed = -1\n").find("experiment.seed") != std::string::npos);
  CHECK(message("experiment.seed = 1\nexperiment.regimes = sim-only, nope\n").find("nope") != std::string::npos);
  CHECK(message("experiment.seed = 1\ncontrol.trials = 0\n").find("trials") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/simreal.cfg"), IoError);
}

TEST_CASE("run labels mark clutter-paired pairwise regimes") {
  ExperimentConfig c;
  CHECK(run_label(c, train::Regime::SimPlusRealPairwise) == "sim-real-pairwise");
  c.pairing = Pairing::Clutter;
  CHECK(run_label(c, train::Regime::SimPlusRealPairwise) == "sim-real-pairwise@clutter-pairs");
  CHECK(run_label(c, train::Regime::SimPlusRealNoPairwise) == "sim-real-no-pairwise@clutter-pairs");
  CHECK(run_label(c, train::Regime::SimOnly) == "sim-only");
}

TEST_CASE("report rows round trip") {
  const ReportRow r = row("sim-only", 7, 0.0125, 0.02, 0.35);
  CHECK(format_row(parse_row(format_row(r))) == format_row(r));
  const ReportRow o = parse_row(format_row(row("oracle", 1, std::nullopt, 0.001, 1.0)));
  CHECK_FALSE(o.test_loss.has_value());
  CHECK_THROWS_AS(parse_row("sim-only,1,2"), FormatError);
}

TEST_CASE("summary: one AVG row per label equals the arithmetic mean") {
  const std::string one = summary_csv({row("sim-only", 1, 0.5, 0.02, 0.25)});
  CHECK(one == std::string(kRowHeader) + "\nsim-only,1,0.5,0.02,0.25,00000000000000aa\n" +
                   "sim-only,AVG,0.5,0.02,0.25,00000000000000aa\n");
  const std::string two = summary_csv({row("sim-only", 2, 0.25, 0.03, 0.5), row("sim-only", 1, 0.75, 0.01, 0.0),
                                       row("oracle", 1, std::nullopt, 0.0, 1.0)});
  std::istringstream in(two);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 6);
  // Regime order first, oracle last; seeds ascending within a label.
  CHECK(lines[1].rfind("sim-only,1,", 0) == 0);
  CHECK(lines[2].rfind("sim-only,2,", 0) == 0);
  CHECK(lines[3] == "sim-only,AVG,0.5,0.02,0.25,00000000000000aa");
  CHECK(lines[5] == "oracle,AVG,,0,1,00000000000000aa");
  CHECK(bars_csv({row("sim-only", 1, 0.5, 0.02, 0.25)}) ==
        "regime,test_loss,mean_capped_distance,success_rate\nsim-only,0.5,0.02,0.25\n");
  CHECK_THROWS_AS(summary_csv({}), ContractError);
}

TEST_CASE("generate writes S x A samples and is reproducible") {
  const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  const auto ca = parse_config(tiny_text(a));
  const auto cb = parse_config(tiny_text(b));
  cmd_generate(ca);
  cmd_generate(cb);
  const Layout la{a.string()}, lb{b.string()};
  CHECK(data::load(la.source()).samples.size() == 15);
  CHECK(data::load(la.paired()).samples.size() == 8);
  CHECK(data::load(la.paired()).images.size() == 8);
  CHECK(data::load(la.test()).samples.size() == 6);
  for (auto f : {&Layout::source, &Layout::paired, &Layout::paired_clutter, &Layout::test})
    CHECK(slurp((la.*f)()) == slurp((lb.*f)()));
  CHECK(dataset_fingerprint(la) == dataset_fingerprint(lb));
  const fs::path c = fresh_dir("gen_c");
  cmd_generate(parse_config(tiny_text(c, 4)));
  CHECK(dataset_fingerprint(Layout{c.string()}) != dataset_fingerprint(la));
}

TEST_CASE("full pipeline on a tiny config") {
  const fs::path out = fresh_dir("pipeline");
  const auto c = parse_config(tiny_text(out));
  run_all(c);
  const Layout l{out.string()};
  for (const char* label : {"sim-only", "sim-real-pairwise"}) {
    CHECK(fs::exists(l.model(label)));
    CHECK(fs::exists(l.epochs(label)));
    CHECK(fs::exists(l.trajectories(label)));
  }
  const std::string summary = slurp(l.summary());
  CHECK(summary.find("sim-only,AVG,") != std::string::npos);
  CHECK(summary.find("sim-real-pairwise,AVG,") != std::string::npos);
  CHECK(summary.find("oracle,AVG,,") != std::string::npos);
  const auto rows = cmd_report(c);
  CHECK(rows.size() == 3);
  for (const auto& r : rows) CHECK(r.fingerprint == dataset_fingerprint(l));
}

TEST_CASE("command-line tool: exit codes and error messages") {
  const fs::path dir = fresh_dir("tool");
  const fs::path cfg = dir / "tiny.cfg";
  std::ofstream(cfg) << tiny_text(dir / "out");
  const std::string tool = SIMREAL_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = tool + " " + args + " > " + (dir / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return std::make_pair(status, slurp(dir / "log.txt"));
  };
  CHECK(run("generate --config " + cfg.string()).first == 0);
  auto [status, log] = run("train --config " + cfg.string() + " --regime no-such-regime");
  CHECK(status != 0);
  CHECK(log.find("simreal: error:") != std::string::npos);
  CHECK(run("eval --config " + cfg.string() + " --regime sim-only").first != 0);  // no checkpoint yet
  CHECK(run("train --config " + (dir / "missing.cfg").string() + " --regime sim-only").first != 0);
  CHECK(run("train --config " + cfg.string() + " --regime sim-only --threads 2").first == 0);
  CHECK(run("eval --config " + cfg.string() + " --regime sim-only").first == 0);
  CHECK(run("oracle-eval --config " + cfg.string()).first == 0);
  std::tie(status, log) = run("report --config " + cfg.string());
  CHECK(status == 0);
  CHECK(fs::exists(dir / "out" / "report" / "bars.csv"));
  CHECK(run("all --config " + cfg.string() + " --out " + (dir / "all").string()).first == 0);
  CHECK(fs::exists(dir / "all" / "report" / "summary.csv"));
}
