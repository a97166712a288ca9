#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "simreal/dataset.hpp"
#include "simreal/net.hpp"

namespace simreal::control {

using data::Action;

struct ControllerConfig {
  int num_candidates = 1000;
  int iterations = 5;
  double descent = 0.01;          // z step per iteration (m)
  double init_half_width = 0.05;  // initial xy offset box around the opening (m)
  double init_height = 0.05;      // initial height above the opening (m)
  double bound = 0.03;            // candidates are uniform in [-bound, bound]^2
  double success_threshold = 0.01;
  double distance_cap = 0.03;
  int trials = 20;

  void validate() const;
};

// What the controller sees at one step. `state` and `scene` are ground truth,
// used only by oracle predictors.
struct Observation {
  const scene::DepthImage& image;
  const scene::RobotState& state;
  const scene::Scene& scene;
};

// Predicted post-action planar distance for each candidate. Must be safe to
// call concurrently.
using DistanceFn = std::function<std::vector<double>(const Observation&, std::span<const Action>)>;

DistanceFn oracle_distance();
DistanceFn network_distance(const nn::NetworkParams& params);

std::vector<Action> sample_candidates(int count, double bound, Rng& rng);

struct Selection {
  Action action;
  double predicted = 0.0;
  int index = 0;
};

// Argmin over fresh uniform candidates; the lowest index wins ties.
Selection select_action(const DistanceFn& fn, const Observation& obs, const ControllerConfig& config, Rng& rng);

// Index of the smallest value, lowest index on ties.
std::size_t argmin(std::span<const double> values);

// Where trials take place and what the sensor looks like.
struct Environment {
  scene::SceneConfig scene;
  scene::CameraConfig camera;
  scene::DomainModel domain;
  bool clutter = true;
};

struct TrialStep {
  Vec3 position = Vec3::Zero();  // hand before the action
  Action action;
  double predicted = 0.0;
  double true_distance = 0.0;    // planar distance after the action
};

struct TrialResult {
  double raw_distance = 0.0;
  double capped_distance = 0.0;
  bool success = false;
  std::vector<Vec3> trajectory;  // iterations + 1 hand positions
  std::vector<TrialStep> steps;
};

// capped = min(raw, cap); success iff raw <= threshold.
TrialResult score_trial(double raw_distance, const ControllerConfig& config);

TrialResult run_trial(const DistanceFn& fn, const Environment& env, const ControllerConfig& config, Rng& rng);

struct EvalSummary {
  double mean_capped_distance = 0.0;
  double success_rate = 0.0;
  std::vector<TrialResult> trials;
  ControllerConfig config;
};

// Trial i draws from Rng(derive_seed(seed, i)).
EvalSummary evaluate(const DistanceFn& fn, const Environment& env, const ControllerConfig& config, std::uint64_t seed,
                     int threads = 1);
EvalSummary summarize(std::vector<TrialResult> trials, const ControllerConfig& config);

// trial,step,x,y,z,predicted,true_distance; the final position has empty metrics.
std::string trajectory_csv(const EvalSummary& summary);

}  // namespace simreal::control
