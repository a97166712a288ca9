#include "simreal/dataset.hpp"

#include <cmath>
#include <sstream>

#include "simreal/binio.hpp"
#include "simreal/fields.hpp"

namespace simreal::data {

namespace fields = simreal::fields;

namespace {

constexpr char kMagic[4] = {'P', 'S', 'D', 'S'};

Action sample_action(Rng& rng, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Action a;
  a.dx = u(rng);
  a.dy = u(rng);
  return a;
}

ImageRecord make_record(DepthImage image, const scene::Scene& scene, const scene::RobotState& state,
                        std::uint32_t index, Domain domain) {
  ImageRecord r;
  r.image = std::move(image);
  r.hand_position = state.hand_position;
  r.opening_position = scene.opening_position;
  r.scene_index = index;
  r.domain = domain;
  r.clutter = !scene.clutter.empty();
  return r;
}

// Output of one scene (labeled set) or one state (paired set). Image indices
// in samples and triples are local to the unit.
struct Unit {
  std::vector<ImageRecord> images;
  std::vector<Sample> samples;
  std::vector<PairedTriple> pairs;
};

Unit labeled_unit(const LabeledSetConfig& cfg, std::uint64_t seed, std::uint32_t index) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  auto [scene, state] = scene::sample_scene(cfg.scene, rng);
  if (!cfg.clutter) scene = scene.without_clutter();
  const scene::Camera camera = cfg.camera.build();
  DepthImage clean = scene::render_depth(scene, state, camera);
  Unit u;
  u.images.push_back(make_record(scene::apply_domain(clean, cfg.domain, rng), scene, state, index, cfg.tag));
  for (int a = 0; a < cfg.actions_per_scene; ++a) {
    Sample s;
    s.image = 0;
    s.action = sample_action(rng, cfg.action_bound);
    s.label = distance_to_goal(state, s.action, scene);
    s.domain = cfg.tag;
    s.clutter = !scene.clutter.empty();
    u.samples.push_back(s);
  }
  return u;
}

Unit paired_unit(const PairedSetConfig& cfg, std::uint64_t seed, std::uint32_t index) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  auto [scene, state] = scene::sample_scene(cfg.scene, rng);
  scene::RobotState target_state = state;
  if (cfg.state_jitter > 0.0) {
    std::normal_distribution<double> jitter(0.0, cfg.state_jitter);
    target_state.hand_position.x() += jitter(rng);
    target_state.hand_position.y() += jitter(rng);
  }
  const scene::Scene source_scene = cfg.source_clutter ? scene : scene.without_clutter();
  const scene::Scene target_scene = cfg.target_clutter ? scene : scene.without_clutter();
  const scene::Camera camera = cfg.camera.build();

  Unit u;
  DepthImage src = scene::render_depth(source_scene, state, camera);
  u.images.push_back(make_record(scene::apply_domain(src, cfg.source_domain, rng), source_scene, state, index,
                                 Domain::Source));
  DepthImage tgt = scene::render_depth(target_scene, target_state, camera);
  u.images.push_back(make_record(scene::apply_domain(tgt, cfg.target_domain, rng), target_scene, target_state,
                                 index, Domain::Target));
  for (int a = 0; a < cfg.actions_per_state; ++a) {
    const Action action = sample_action(rng, cfg.action_bound);
    Sample s;
    s.image = 1;
    s.action = action;
    s.label = distance_to_goal(target_state, action, target_scene);
    s.domain = Domain::Target;
    s.clutter = !target_scene.clutter.empty();
    u.samples.push_back(s);
    u.pairs.push_back(PairedTriple{0, 1, action});
  }
  return u;
}

Dataset assemble(std::string manifest, std::vector<Unit>& units) {
  Dataset d;
  d.manifest = std::move(manifest);
  for (auto& u : units) {
    const auto offset = static_cast<std::uint32_t>(d.images.size());
    for (auto& r : u.images) d.images.push_back(std::move(r));
    for (auto s : u.samples) {
      s.image += offset;
      d.samples.push_back(s);
    }
    for (auto p : u.pairs) {
      p.image_source += offset;
      p.image_target += offset;
      d.pairs.push_back(p);
    }
  }
  return d;
}

template <typename T>
void emit(std::string& out, const std::string& prefix, T& fields_owner) {
  fields::visit_fields(fields_owner, fields::Emitter{prefix, &out});
}

// Assigns every "prefix.name" entry of `kv` into the fields of `owner`.
template <typename T>
void absorb(const std::map<std::string, std::string>& kv, const std::string& prefix, T& owner) {
  fields::visit_fields(owner, [&](const char* name, auto& field) {
    const auto it = kv.find(prefix + "." + name);
    if (it == kv.end()) throw FormatError("manifest: missing key " + prefix + "." + name);
    if (!fields::parse_value(it->second, field))
      throw FormatError("manifest: malformed value for " + prefix + "." + name);
  });
}

template <typename T>
T get(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("manifest: missing key " + key);
  T value{};
  if (!fields::parse_value(it->second, value)) throw FormatError("manifest: malformed value for " + key);
  return value;
}

std::uint64_t parse_seed(const std::map<std::string, std::string>& kv) {
  const auto it = kv.find("seed");
  if (it == kv.end()) throw FormatError("manifest: missing key seed");
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw FormatError("manifest: malformed seed");
  }
}

LabeledSetConfig labeled_from(const std::map<std::string, std::string>& kv) {
  LabeledSetConfig c;
  absorb(kv, "scene", c.scene);
  absorb(kv, "camera", c.camera);
  absorb(kv, "domain", c.domain);
  c.tag = get<int>(kv, "tag") == 0 ? Domain::Source : Domain::Target;
  c.clutter = get<bool>(kv, "clutter");
  c.scenes = get<int>(kv, "scenes");
  c.actions_per_scene = get<int>(kv, "actions_per_scene");
  c.action_bound = get<double>(kv, "action_bound");
  return c;
}

PairedSetConfig paired_from(const std::map<std::string, std::string>& kv) {
  PairedSetConfig c;
  absorb(kv, "scene", c.scene);
  absorb(kv, "camera", c.camera);
  absorb(kv, "source_domain", c.source_domain);
  absorb(kv, "target_domain", c.target_domain);
  c.states = get<int>(kv, "states");
  c.actions_per_state = get<int>(kv, "actions_per_state");
  c.action_bound = get<double>(kv, "action_bound");
  c.source_clutter = get<bool>(kv, "source_clutter");
  c.target_clutter = get<bool>(kv, "target_clutter");
  c.state_jitter = get<double>(kv, "state_jitter");
  return c;
}

void check_counts(int count, int per, const char* what) {
  if (count < 0) throw ConfigError(std::string("dataset: ") + what + " count must be >= 0");
  if (per < 1) throw ConfigError(std::string("dataset: ") + what + " actions per unit must be >= 1");
}

}  // namespace

bool operator==(const ImageRecord& a, const ImageRecord& b) {
  return a.image.rows() == b.image.rows() && a.image.cols() == b.image.cols() &&
         std::memcmp(a.image.data(), b.image.data(), sizeof(double) * a.image.size()) == 0 &&
         a.hand_position == b.hand_position && a.opening_position == b.opening_position &&
         a.scene_index == b.scene_index && a.domain == b.domain && a.clutter == b.clutter;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.manifest == b.manifest && a.images == b.images && a.samples == b.samples && a.pairs == b.pairs;
}

double distance_to_goal(const Vec3& hand_position, const Action& action, const Vec3& opening_position) {
  return std::hypot(hand_position.x() + action.dx - opening_position.x(),
                    hand_position.y() + action.dy - opening_position.y());
}

double distance_to_goal(const scene::RobotState& state, const Action& action, const scene::Scene& scene) {
  return distance_to_goal(state.hand_position, action, scene.opening_position);
}

std::string manifest_for(const LabeledSetConfig& config, std::uint64_t seed) {
  LabeledSetConfig c = config;
  std::string out = "kind = labeled\nseed = " + std::to_string(seed) + "\n";
  emit(out, "scene", c.scene);
  emit(out, "camera", c.camera);
  emit(out, "domain", c.domain);
  out += "tag = " + std::to_string(static_cast<int>(c.tag)) + "\n";
  out += "clutter = " + fields::format_value(c.clutter) + "\n";
  out += "scenes = " + std::to_string(c.scenes) + "\n";
  out += "actions_per_scene = " + std::to_string(c.actions_per_scene) + "\n";
  out += "action_bound = " + fields::format_value(c.action_bound) + "\n";
  return out;
}

std::string manifest_for(const PairedSetConfig& config, std::uint64_t seed) {
  PairedSetConfig c = config;
  std::string out = "kind = paired\nseed = " + std::to_string(seed) + "\n";
  emit(out, "scene", c.scene);
  emit(out, "camera", c.camera);
  emit(out, "source_domain", c.source_domain);
  emit(out, "target_domain", c.target_domain);
  out += "states = " + std::to_string(c.states) + "\n";
  out += "actions_per_state = " + std::to_string(c.actions_per_state) + "\n";
  out += "action_bound = " + fields::format_value(c.action_bound) + "\n";
  out += "source_clutter = " + fields::format_value(c.source_clutter) + "\n";
  out += "target_clutter = " + fields::format_value(c.target_clutter) + "\n";
  out += "state_jitter = " + fields::format_value(c.state_jitter) + "\n";
  return out;
}

Dataset generate_source_dataset(const LabeledSetConfig& config, std::uint64_t seed, int threads) {
  check_counts(config.scenes, config.actions_per_scene, "scene");
  config.domain.validate();
  std::vector<Unit> units(static_cast<std::size_t>(config.scenes));
  parallel_for(units.size(), threads,
               [&](std::size_t i) { units[i] = labeled_unit(config, seed, static_cast<std::uint32_t>(i)); });
  return assemble(manifest_for(config, seed), units);
}

Dataset generate_paired_dataset(const PairedSetConfig& config, std::uint64_t seed, int threads) {
  check_counts(config.states, config.actions_per_state, "paired state");
  config.source_domain.validate();
  config.target_domain.validate();
  std::vector<Unit> units(static_cast<std::size_t>(config.states));
  parallel_for(units.size(), threads,
               [&](std::size_t i) { units[i] = paired_unit(config, seed, static_cast<std::uint32_t>(i)); });
  return assemble(manifest_for(config, seed), units);
}

std::vector<ImageRecord> regenerate_images(const std::string& manifest, std::uint32_t scene_index) {
  const auto kv = parse_key_values(manifest, "manifest");
  const auto kind = kv.find("kind");
  if (kind == kv.end()) throw FormatError("manifest: missing key kind");
  const std::uint64_t seed = parse_seed(kv);
  if (kind->second == "labeled") return labeled_unit(labeled_from(kv), seed, scene_index).images;
  if (kind->second == "paired") return paired_unit(paired_from(kv), seed, scene_index).images;
  throw FormatError("manifest: unknown kind " + kind->second);
}

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& what) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(what + ": line " + std::to_string(lineno) + " is not of the form key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(what + ": empty key on line " + std::to_string(lineno));
    if (!kv.emplace(key, value).second) throw ConfigError(what + ": duplicate key " + key);
  }
  return kv;
}

std::vector<char> encode(const Dataset& d) {
  binio::Writer w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put<std::uint16_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.manifest.size()));
  w.put_bytes(d.manifest);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.images.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.samples.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.pairs.size()));
  for (const auto& r : d.images) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.image.rows()));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(r.image.cols()));
    w.put_doubles(r.image.data(), static_cast<std::size_t>(r.image.size()));
    w.put_doubles(r.hand_position.data(), 3);
    w.put_doubles(r.opening_position.data(), 3);
    w.put<std::uint32_t>(r.scene_index);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.domain));
    w.put<std::uint8_t>(r.clutter ? 1 : 0);
  }
  for (const auto& s : d.samples) {
    w.put<std::uint32_t>(s.image);
    w.put<double>(s.action.dx);
    w.put<double>(s.action.dy);
    w.put<double>(s.label);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.domain));
    w.put<std::uint8_t>(s.clutter ? 1 : 0);
  }
  for (const auto& p : d.pairs) {
    w.put<std::uint32_t>(p.image_source);
    w.put<std::uint32_t>(p.image_target);
    w.put<double>(p.action.dx);
    w.put<double>(p.action.dy);
  }
  return w.bytes();
}

Dataset decode(const std::vector<char>& bytes, const std::string& what) {
  if (bytes.empty()) throw TruncatedError(what + ": truncated file (empty)");
  binio::Reader r(bytes.data(), bytes.size(), what);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(what + ": format mismatch (bad magic bytes)");
  r.get_bytes(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kDatasetVersion)
    throw VersionError(what + ": unsupported version " + std::to_string(version));
  Dataset d;
  d.manifest = r.get_bytes(r.get<std::uint32_t>());
  const auto n_images = r.get<std::uint32_t>();
  const auto n_samples = r.get<std::uint32_t>();
  const auto n_pairs = r.get<std::uint32_t>();
  const auto domain_of = [&](std::uint8_t v) {
    if (v > 1) throw FormatError(what + ": invalid domain tag");
    return static_cast<Domain>(v);
  };
  d.images.resize(n_images);
  for (auto& rec : d.images) {
    const auto rows = r.get<std::uint16_t>();
    const auto cols = r.get<std::uint16_t>();
    rec.image.resize(rows, cols);
    r.get_doubles(rec.image.data(), static_cast<std::size_t>(rows) * cols);
    r.get_doubles(rec.hand_position.data(), 3);
    r.get_doubles(rec.opening_position.data(), 3);
    rec.scene_index = r.get<std::uint32_t>();
    rec.domain = domain_of(r.get<std::uint8_t>());
    rec.clutter = r.get<std::uint8_t>() != 0;
  }
  d.samples.resize(n_samples);
  for (auto& s : d.samples) {
    s.image = r.get<std::uint32_t>();
    s.action.dx = r.get<double>();
    s.action.dy = r.get<double>();
    s.label = r.get<double>();
    s.domain = domain_of(r.get<std::uint8_t>());
    s.clutter = r.get<std::uint8_t>() != 0;
    if (s.image >= n_images) throw FormatError(what + ": sample references missing image");
  }
  d.pairs.resize(n_pairs);
  for (auto& p : d.pairs) {
    p.image_source = r.get<std::uint32_t>();
    p.image_target = r.get<std::uint32_t>();
    p.action.dx = r.get<double>();
    p.action.dy = r.get<double>();
    if (p.image_source >= n_images || p.image_target >= n_images)
      throw FormatError(what + ": pair references missing image");
  }
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after records");
  return d;
}

void verify_labels(const Dataset& d) {
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& s = d.samples[i];
    const auto& rec = d.images[s.image];
    if (s.label != distance_to_goal(rec.hand_position, s.action, rec.opening_position))
      throw FormatError("dataset: label of sample " + std::to_string(i) + " disagrees with distance_to_goal");
  }
}

void save(const Dataset& dataset, const std::string& path) { binio::write_file(path, encode(dataset)); }

Dataset load(const std::string& path) {
  Dataset d = decode(binio::read_file(path), path);
  verify_labels(d);
  return d;
}

}  // namespace simreal::data

namespace simreal::fields {

bool parse_value(const std::string& text, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(text, &used);
    return used == text.size() && std::isfinite(out);
  } catch (const std::exception&) {
    return false;
  }
}

bool parse_value(const std::string& text, int& out) {
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc() && res.ptr == end && !text.empty();
}

bool parse_value(const std::string& text, bool& out) {
  if (text == "true" || text == "1") {
    out = true;
    return true;
  }
  if (text == "false" || text == "0") {
    out = false;
    return true;
  }
  return false;
}

bool parse_value(const std::string& text, std::string& out) {
  out = text;
  return true;
}

bool parse_value(const std::string& text, std::vector<double>& out) {
  out.clear();
  if (text.empty()) return true;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) return false;
    double v;
    if (!parse_value(item.substr(b, e - b + 1), v)) return false;
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return true;
}

}  // namespace simreal::fields
