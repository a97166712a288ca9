#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simreal/control.hpp"
#include "simreal/dataset.hpp"
#include "simreal/train.hpp"

namespace simreal {

// Which paired set the pairwise regimes align against.
enum class Pairing { NoClutter, Clutter };

// Everything one experiment needs. Text form is flat `section.key = value`
// lines; only experiment.seed is required, every other key has a default.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string output = "out";
  int threads = 1;
  std::vector<std::string> regimes;  // pipeline order; empty means all six

  scene::SceneConfig scene;
  scene::CameraConfig camera;
  scene::DomainModel source_domain = scene::DomainModel::source_default();
  scene::DomainModel target_domain = scene::DomainModel::target_default();
  double action_bound = 0.03;

  int source_scenes = 2000;
  int source_actions = 16;
  int paired_states = 726;
  int paired_actions = 1;
  double paired_jitter = 0.0;
  std::vector<double> paired_radii;  // empty: the scene radius range
  int test_scenes = 200;
  int test_actions = 16;
  std::vector<double> test_radii;

  train::TrainConfig train;  // regime and seed are set per run
  Pairing pairing = Pairing::NoClutter;
  control::ControllerConfig control;

  data::LabeledSetConfig source_set() const;
  data::PairedSetConfig paired_set(bool target_clutter) const;
  data::LabeledSetConfig test_set() const;
  control::Environment eval_environment() const;
  std::vector<train::Regime> regime_list() const;

  void validate() const;
};

ExperimentConfig parse_config(const std::string& text, const std::string& what = "config");
ExperimentConfig load_config(const std::string& path);
// Canonical text: every key, fixed order; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);

}  // namespace simreal
