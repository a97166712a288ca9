#include "simreal/config.hpp"

#include <charconv>
#include <functional>

#include "simreal/binio.hpp"
#include "simreal/fields.hpp"

namespace simreal {

namespace {

struct Entry {
  std::string key;
  std::function<std::string()> format;
  std::function<bool(const std::string&)> parse;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size() && !text.empty()) {
    const auto comma = text.find(',', start);
    std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

class Table {
 public:
  template <typename T>
  void add(std::string key, T& field) {
    entries_.push_back(Entry{std::move(key), [&field] { return fields::format_value(field); },
                             [&field](const std::string& s) { return fields::parse_value(s, field); }});
  }
  void add_custom(std::string key, std::function<std::string()> format, std::function<bool(const std::string&)> parse) {
    entries_.push_back(Entry{std::move(key), std::move(format), std::move(parse)});
  }
  template <typename Owner>
  void add_section(const std::string& prefix, Owner& owner) {
    fields::visit_fields(owner, [&](const char* name, auto& field) { add(prefix + "." + name, field); });
  }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

Table table_for(ExperimentConfig& c) {
  Table t;
  t.add_custom(
      "experiment.seed", [&c] { return std::to_string(c.seed); },
      [&c](const std::string& s) {
        const auto* end = s.data() + s.size();
        const auto r = std::from_chars(s.data(), end, c.seed);
        return !s.empty() && r.ec == std::errc() && r.ptr == end;
      });
  t.add("experiment.output", c.output);
  t.add("experiment.threads", c.threads);
  t.add_custom(
      "experiment.regimes",
      [&c] {
        std::string out;
        for (std::size_t i = 0; i < c.regimes.size(); ++i) out += (i ? "," : "") + c.regimes[i];
        return out;
      },
      [&c](const std::string& s) {
        c.regimes = split_list(s);
        for (const auto& r : c.regimes)
          if (r.empty()) return false;
        return true;
      });

  t.add_section("scene", c.scene);
  t.add_section("camera", c.camera);
  t.add_section("source_domain", c.source_domain);
  t.add_section("target_domain", c.target_domain);

  t.add("data.action_bound", c.action_bound);
  t.add("data.source_scenes", c.source_scenes);
  t.add("data.source_actions", c.source_actions);
  t.add("data.paired_states", c.paired_states);
  t.add("data.paired_actions", c.paired_actions);
  t.add("data.paired_jitter", c.paired_jitter);
  t.add("data.paired_radii", c.paired_radii);
  t.add("data.test_scenes", c.test_scenes);
  t.add("data.test_actions", c.test_actions);
  t.add("data.test_radii", c.test_radii);

  train::TrainConfig& tr = c.train;
  t.add("train.epochs", tr.epochs);
  t.add("train.batch_size", tr.batch_size);
  t.add("train.target_fraction", tr.target_fraction);
  t.add("train.mmd_batch", tr.mmd_batch);
  t.add("train.learning_rate", tr.adam.learning_rate);
  t.add("train.beta1", tr.adam.beta1);
  t.add("train.beta2", tr.adam.beta2);
  t.add("train.epsilon", tr.adam.epsilon);
  t.add("train.alpha", tr.alpha);
  t.add("train.beta", tr.beta);
  t.add("train.gamma_pairwise", tr.gamma_pairwise);
  t.add("train.gamma_mmd", tr.gamma_mmd);
  t.add_custom(
      "train.bandwidth",
      [&tr] { return std::string(tr.kernel.bandwidth == loss::KernelConfig::Bandwidth::Median ? "median" : "fixed"); },
      [&tr](const std::string& s) {
        if (s == "median") tr.kernel.bandwidth = loss::KernelConfig::Bandwidth::Median;
        else if (s == "fixed") tr.kernel.bandwidth = loss::KernelConfig::Bandwidth::Fixed;
        else return false;
        return true;
      });
  t.add("train.sigma", tr.kernel.sigma);
  t.add_custom(
      "train.pairing", [&c] { return std::string(c.pairing == Pairing::NoClutter ? "no-clutter" : "clutter"); },
      [&c](const std::string& s) {
        if (s == "no-clutter") c.pairing = Pairing::NoClutter;
        else if (s == "clutter") c.pairing = Pairing::Clutter;
        else return false;
        return true;
      });

  nn::Architecture& a = tr.arch;
  t.add("net.conv1_kernel", a.conv1_kernel);
  t.add("net.conv1_channels", a.conv1_channels);
  t.add("net.conv2_kernel", a.conv2_kernel);
  t.add("net.conv2_channels", a.conv2_channels);
  t.add("net.conv3_kernel", a.conv3_kernel);
  t.add("net.conv3_channels", a.conv3_channels);
  t.add("net.dense1", a.dense1);
  t.add("net.dense2", a.dense2);
  t.add("net.mmd_width", a.mmd_width);

  control::ControllerConfig& k = c.control;
  t.add("control.num_candidates", k.num_candidates);
  t.add("control.iterations", k.iterations);
  t.add("control.descent", k.descent);
  t.add("control.init_half_width", k.init_half_width);
  t.add("control.init_height", k.init_height);
  t.add("control.bound", k.bound);
  t.add("control.success_threshold", k.success_threshold);
  t.add("control.distance_cap", k.distance_cap);
  t.add("control.trials", k.trials);
  return t;
}

scene::SceneConfig with_radii(scene::SceneConfig s, const std::vector<double>& radii) {
  if (!radii.empty()) s.bottle_radii = radii;
  return s;
}

}  // namespace

data::LabeledSetConfig ExperimentConfig::source_set() const {
  data::LabeledSetConfig s;
  s.scene = scene;
  s.camera = camera;
  s.domain = source_domain;
  s.tag = data::Domain::Source;
  s.clutter = true;
  s.scenes = source_scenes;
  s.actions_per_scene = source_actions;
  s.action_bound = action_bound;
  return s;
}

data::PairedSetConfig ExperimentConfig::paired_set(bool target_clutter) const {
  data::PairedSetConfig p;
  p.scene = with_radii(scene, paired_radii);
  p.camera = camera;
  p.source_domain = source_domain;
  p.target_domain = target_domain;
  p.states = paired_states;
  p.actions_per_state = paired_actions;
  p.action_bound = action_bound;
  p.source_clutter = true;
  p.target_clutter = target_clutter;
  p.state_jitter = paired_jitter;
  return p;
}

data::LabeledSetConfig ExperimentConfig::test_set() const {
  data::LabeledSetConfig s;
  s.scene = with_radii(scene, test_radii);
  s.camera = camera;
  s.domain = target_domain;
  s.tag = data::Domain::Target;
  s.clutter = true;
  s.scenes = test_scenes;
  s.actions_per_scene = test_actions;
  s.action_bound = action_bound;
  return s;
}

control::Environment ExperimentConfig::eval_environment() const {
  return control::Environment{with_radii(scene, test_radii), camera, target_domain, true};
}

std::vector<train::Regime> ExperimentConfig::regime_list() const {
  std::vector<train::Regime> out;
  if (regimes.empty()) return {std::begin(train::kAllRegimes), std::end(train::kAllRegimes)};
  for (const auto& r : regimes) out.push_back(train::parse_regime(r));
  return out;
}

void ExperimentConfig::validate() const {
  if (output.empty()) throw ConfigError("config: experiment.output must not be empty");
  if (threads < 1) throw ConfigError("config: experiment.threads must be >= 1");
  regime_list();
  scene.validate();
  with_radii(scene, paired_radii).validate();
  with_radii(scene, test_radii).validate();
  source_domain.validate();
  target_domain.validate();
  if (!(action_bound > 0.0)) throw ConfigError("config: data.action_bound must be > 0");
  if (source_scenes < 1 || source_actions < 1 || paired_states < 1 || paired_actions < 1 || test_scenes < 1 ||
      test_actions < 1)
    throw ConfigError("config: data counts must be >= 1");
  if (paired_jitter < 0.0) throw ConfigError("config: data.paired_jitter must be >= 0");
  train::TrainConfig t = train;
  t.arch.action_bound = action_bound;
  t.validate();
  control.validate();
}

ExperimentConfig parse_config(const std::string& text, const std::string& what) {
  const auto kv = data::parse_key_values(text, what);
  ExperimentConfig c;
  Table table = table_for(c);
  if (kv.find("experiment.seed") == kv.end()) throw ConfigError(what + ": missing required key experiment.seed");
  for (const auto& [key, value] : kv) {
    const Entry* entry = nullptr;
    for (const auto& e : table.entries())
      if (e.key == key) entry = &e;
    if (entry == nullptr) throw ConfigError(what + ": unknown key " + key);
    if (!entry->parse(value)) throw ConfigError(what + ": malformed value for " + key + ": '" + value + "'");
  }
  c.train.arch.action_bound = c.action_bound;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  const auto bytes = binio::read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()), path);
}

std::string to_text(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  std::string out;
  const Table table = table_for(c);
  for (const auto& e : table.entries()) out += e.key + " = " + e.format() + "\n";
  return out;
}

}  // namespace simreal
