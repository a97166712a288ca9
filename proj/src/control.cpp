#include "simreal/control.hpp"

#include <algorithm>
#include <cmath>

#include "simreal/fields.hpp"

namespace simreal::control {

void ControllerConfig::validate() const {
  if (num_candidates < 1 || iterations < 1 || trials < 1)
    throw ConfigError("controller: candidates, iterations and trials must be >= 1");
  if (!(descent > 0.0 && init_half_width > 0.0 && init_height > 0.0 && bound > 0.0 && success_threshold > 0.0 &&
        distance_cap > 0.0))
    throw ConfigError("controller: distances must be > 0");
  if (success_threshold > distance_cap) throw ConfigError("controller: success threshold exceeds distance cap");
}

DistanceFn oracle_distance() {
  return [](const Observation& obs, std::span<const Action> actions) {
    std::vector<double> out(actions.size());
    for (std::size_t i = 0; i < actions.size(); ++i) out[i] = data::distance_to_goal(obs.state, actions[i], obs.scene);
    return out;
  };
}

DistanceFn network_distance(const nn::NetworkParams& params) {
  return [&params](const Observation& obs, std::span<const Action> actions) {
    return nn::predict(params, obs.image, actions);
  };
}

std::vector<Action> sample_candidates(int count, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<Action> out(static_cast<std::size_t>(count));
  for (auto& a : out) {
    a.dx = u(rng);
    a.dy = u(rng);
  }
  return out;
}

std::size_t argmin(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] < values[best]) best = i;
  return best;
}

Selection select_action(const DistanceFn& fn, const Observation& obs, const ControllerConfig& config, Rng& rng) {
  const auto candidates = sample_candidates(config.num_candidates, config.bound, rng);
  const auto predicted = fn(obs, candidates);
  if (predicted.size() != candidates.size())
    throw ContractError("select_action: predictor returned " + std::to_string(predicted.size()) + " values for " +
                        std::to_string(candidates.size()) + " candidates");
  const std::size_t best = argmin(predicted);
  return Selection{candidates[best], predicted[best], static_cast<int>(best)};
}

TrialResult score_trial(double raw_distance, const ControllerConfig& config) {
  TrialResult r;
  r.raw_distance = raw_distance;
  r.capped_distance = std::min(raw_distance, config.distance_cap);
  r.success = raw_distance <= config.success_threshold;
  return r;
}

TrialResult run_trial(const DistanceFn& fn, const Environment& env, const ControllerConfig& config, Rng& rng) {
  config.validate();
  Rng scene_rng(rng()), sensor_rng(rng()), candidate_rng(rng());
  auto [scene, state] = scene::sample_scene(env.scene, scene_rng);
  if (!env.clutter) scene = scene.without_clutter();
  std::uniform_real_distribution<double> box(-config.init_half_width, config.init_half_width);
  const double ox = box(scene_rng);
  const double oy = box(scene_rng);
  state.hand_position = scene.opening_position + Vec3(ox, oy, config.init_height);
  const scene::Camera camera = env.camera.build();

  std::vector<Vec3> trajectory{state.hand_position};
  std::vector<TrialStep> steps;
  for (int it = 0; it < config.iterations; ++it) {
    const scene::DepthImage image =
        scene::apply_domain(scene::render_depth(scene, state, camera), env.domain, sensor_rng);
    const Selection sel = select_action(fn, Observation{image, state, scene}, config, candidate_rng);
    TrialStep step;
    step.position = state.hand_position;
    step.action = sel.action;
    step.predicted = sel.predicted;
    step.true_distance = data::distance_to_goal(state, sel.action, scene);
    steps.push_back(step);
    state.hand_position += Vec3(sel.action.dx, sel.action.dy, -config.descent);
    trajectory.push_back(state.hand_position);
  }
  const Vec3 d = state.hand_position - scene.opening_position;
  TrialResult r = score_trial(std::hypot(d.x(), d.y()), config);
  r.trajectory = std::move(trajectory);
  r.steps = std::move(steps);
  return r;
}

EvalSummary summarize(std::vector<TrialResult> trials, const ControllerConfig& config) {
  if (trials.empty()) throw ContractError("summarize: no trials");
  EvalSummary s;
  s.config = config;
  double capped = 0.0;
  int successes = 0;
  for (const auto& t : trials) {
    capped += t.capped_distance;
    successes += t.success ? 1 : 0;
  }
  s.mean_capped_distance = capped / static_cast<double>(trials.size());
  s.success_rate = static_cast<double>(successes) / static_cast<double>(trials.size());
  s.trials = std::move(trials);
  return s;
}

EvalSummary evaluate(const DistanceFn& fn, const Environment& env, const ControllerConfig& config, std::uint64_t seed,
                     int threads) {
  config.validate();
  std::vector<TrialResult> trials(static_cast<std::size_t>(config.trials));
  parallel_for(trials.size(), threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    trials[i] = run_trial(fn, env, config, rng);
  });
  return summarize(std::move(trials), config);
}

std::string trajectory_csv(const EvalSummary& summary) {
  using fields::format_value;
  std::string out = "trial,step,x,y,z,predicted,true_distance\n";
  for (std::size_t t = 0; t < summary.trials.size(); ++t) {
    const auto& trial = summary.trials[t];
    for (std::size_t k = 0; k < trial.trajectory.size(); ++k) {
      const Vec3& p = trial.trajectory[k];
      out += std::to_string(t) + "," + std::to_string(k) + "," + format_value(p.x()) + "," + format_value(p.y()) + "," +
             format_value(p.z()) + ",";
      if (k < trial.steps.size())
        out += format_value(trial.steps[k].predicted) + "," + format_value(trial.steps[k].true_distance);
      else
        out += ",";
      out += "\n";
    }
  }
  return out;
}

}  // namespace simreal::control
