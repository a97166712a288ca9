#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "simreal/depthscene.hpp"

namespace simreal::data {

using scene::DepthImage;

struct Action {
  double dx = 0.0;
  double dy = 0.0;

  bool operator==(const Action&) const = default;
};

enum class Domain : std::uint8_t { Source = 0, Target = 1 };

// One rendered observation plus the ground-truth state it came from.
struct ImageRecord {
  DepthImage image;
  Vec3 hand_position = Vec3::Zero();
  Vec3 opening_position = Vec3::Zero();
  std::uint32_t scene_index = 0;
  Domain domain = Domain::Source;
  bool clutter = false;
};

// Labeled (I, a, y). `image` indexes Dataset::images; images are shared by
// all actions drawn for the same scene.
struct Sample {
  std::uint32_t image = 0;
  Action action;
  double label = 0.0;
  Domain domain = Domain::Source;
  bool clutter = false;

  bool operator==(const Sample&) const = default;
};

// (I_S, I_T, a): both images portray the same robot state.
struct PairedTriple {
  std::uint32_t image_source = 0;
  std::uint32_t image_target = 0;
  Action action;

  bool operator==(const PairedTriple&) const = default;
};

struct Dataset {
  std::string manifest;
  std::vector<ImageRecord> images;
  std::vector<Sample> samples;
  std::vector<PairedTriple> pairs;
};

bool operator==(const ImageRecord& a, const ImageRecord& b);
bool operator==(const Dataset& a, const Dataset& b);

// Planar distance between the displaced hand and the bottle opening.
double distance_to_goal(const scene::RobotState& state, const Action& action, const scene::Scene& scene);
double distance_to_goal(const Vec3& hand_position, const Action& action, const Vec3& opening_position);

// Labeled single-domain set: the source set X_S, or a labeled test set.
struct LabeledSetConfig {
  scene::SceneConfig scene;
  scene::CameraConfig camera;
  scene::DomainModel domain = scene::DomainModel::source_default();
  Domain tag = Domain::Source;
  bool clutter = true;
  int scenes = 2000;
  int actions_per_scene = 16;
  double action_bound = 0.03;
};

// Paired set: produces X_T samples (target-tagged) and X_ST triples.
struct PairedSetConfig {
  scene::SceneConfig scene;
  scene::CameraConfig camera;
  scene::DomainModel source_domain = scene::DomainModel::source_default();
  scene::DomainModel target_domain = scene::DomainModel::target_default();
  int states = 726;
  int actions_per_state = 1;
  double action_bound = 0.03;
  bool source_clutter = true;
  bool target_clutter = false;
  // Std-dev (m) of an xy perturbation of the target state, modelling imperfect pairing.
  double state_jitter = 0.0;
};

Dataset generate_source_dataset(const LabeledSetConfig& config, std::uint64_t seed, int threads = 1);
Dataset generate_paired_dataset(const PairedSetConfig& config, std::uint64_t seed, int threads = 1);

// Re-renders the images of one scene/state index from a dataset manifest.
std::vector<ImageRecord> regenerate_images(const std::string& manifest, std::uint32_t scene_index);

std::string manifest_for(const LabeledSetConfig& config, std::uint64_t seed);
std::string manifest_for(const PairedSetConfig& config, std::uint64_t seed);

// "PSDS" container: magic, u16 version, manifest text, then raw records.
inline constexpr std::uint16_t kDatasetVersion = 1;
void save(const Dataset& dataset, const std::string& path);
Dataset load(const std::string& path);

std::vector<char> encode(const Dataset& dataset);
Dataset decode(const std::vector<char>& bytes, const std::string& what = "dataset");

// Throws FormatError if any label disagrees with distance_to_goal.
void verify_labels(const Dataset& dataset);

// Flat `key = value` map used by manifests and experiment configs.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& what);

}  // namespace simreal::data
