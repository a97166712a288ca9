#include "simreal/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "simreal/fields.hpp"

namespace simreal::train {

namespace {

constexpr std::string_view kRegimeNames[] = {"real-only-no-clutter", "real-only-clutter",    "sim-only",
                                             "sim-real-mmd",         "sim-real-no-pairwise", "sim-real-pairwise"};

// Every labeled row of one image, and the image that pairs with it (or -1).
struct Group {
  std::uint32_t image = 0;
  std::vector<std::size_t> samples;
  long paired_source = -1;
};

std::vector<Group> groups_of(const data::Dataset& d, bool with_pairs) {
  std::vector<Group> out;
  std::map<std::uint32_t, std::size_t> index;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto img = d.samples[i].image;
    auto [it, inserted] = index.emplace(img, out.size());
    if (inserted) out.push_back(Group{img, {}, -1});
    out[it->second].samples.push_back(i);
  }
  if (with_pairs) {
    std::map<std::uint32_t, std::uint32_t> source_of;
    for (const auto& p : d.pairs) {
      const auto [it, inserted] = source_of.emplace(p.image_target, p.image_source);
      if (!inserted && it->second != p.image_source)
        throw ContractError("train: target image paired with more than one source image");
    }
    for (auto& g : out) {
      const auto it = source_of.find(g.image);
      if (it == source_of.end()) throw ContractError("train: paired set has a target image without a pair");
      g.paired_source = it->second;
    }
  }
  return out;
}

// Shuffled order over [0, n); `next` reshuffles when the pass is exhausted.
class Stream {
 public:
  Stream(std::size_t n, Rng& rng) : order_(n), rng_(&rng) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    reshuffle();
  }
  bool exhausted() const { return pos_ >= order_.size(); }
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), *rng_);
    pos_ = 0;
  }
  std::size_t next() {
    if (exhausted()) reshuffle();
    return order_[pos_++];
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng* rng_;
};

loss::RowGroup make_row_group(const data::Dataset& d, const Group& g, bool use_pair) {
  loss::RowGroup rg;
  rg.image = &d.images[g.image].image;
  for (auto s : g.samples) {
    rg.actions.push_back(d.samples[s].action);
    rg.labels.push_back(d.samples[s].label);
  }
  if (use_pair) rg.paired_source = &d.images[static_cast<std::size_t>(g.paired_source)].image;
  return rg;
}

std::vector<const scene::DepthImage*> images_of(const data::Dataset& d, data::Domain domain) {
  std::vector<const scene::DepthImage*> out;
  for (const auto& r : d.images)
    if (r.domain == domain) out.push_back(&r.image);
  return out;
}

const data::Dataset& require(const data::Dataset* d, const char* what, Regime r) {
  if (d == nullptr || d->samples.empty())
    throw ContractError(std::string("train: regime ") + std::string(regime_name(r)) + " needs a non-empty " + what +
                        " set");
  return *d;
}

}  // namespace

std::string_view regime_name(Regime r) { return kRegimeNames[static_cast<int>(r)]; }

Regime parse_regime(std::string_view name) {
  for (Regime r : kAllRegimes)
    if (regime_name(r) == name) return r;
  std::string known;
  for (Regime r : kAllRegimes) known += (known.empty() ? "" : ", ") + std::string(regime_name(r));
  throw ConfigError("unknown regime '" + std::string(name) + "' (expected one of " + known + ")");
}

AdamState adam_init(const nn::NetworkParams& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(nn::NetworkParams& params, const nn::NetworkGrad& grad, AdamState& state, const AdamConfig& hyper) {
  std::vector<const nn::Tensor*> g;
  std::vector<nn::Tensor*> m, v;
  grad.for_each([&](std::string_view, const nn::Tensor& t) { g.push_back(&t); });
  state.m.for_each([&](std::string_view, nn::Tensor& t) { m.push_back(&t); });
  state.v.for_each([&](std::string_view, nn::Tensor& t) { v.push_back(&t); });
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  std::size_t i = 0;
  params.for_each([&](std::string_view name, nn::Tensor& p) {
    const nn::Tensor& gi = *g[i];
    nn::Tensor& mi = *m[i];
    nn::Tensor& vi = *v[i];
    ++i;
    if (gi.size() == 0) return;
    if (gi.rows() != p.rows() || gi.cols() != p.cols() || mi.rows() != p.rows() || mi.cols() != p.cols() ||
        vi.rows() != p.rows() || vi.cols() != p.cols())
      throw ContractError("adam_step: shape mismatch in " + std::string(name));
    mi = hyper.beta1 * mi + (1.0 - hyper.beta1) * gi;
    vi = hyper.beta2 * vi + (1.0 - hyper.beta2) * gi.cwiseAbs2();
    p.array() -= hyper.learning_rate * (mi.array() / c1) / ((vi.array() / c2).sqrt() + hyper.epsilon);
  });
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(target_fraction > 0.0 && target_fraction < 1.0)) throw ConfigError("train: target_fraction must be in (0, 1)");
  if (mmd_batch < 2 || mmd_batch % 2 != 0) throw ConfigError("train: mmd_batch must be even and >= 2");
  if (!(adam.learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ConfigError("train: Adam betas must be in [0, 1)");
  if (!(adam.epsilon > 0.0)) throw ConfigError("train: epsilon must be > 0");
  if (threads < 1) throw ConfigError("train: threads must be >= 1");
  regime_weights(*this).validate();
  arch.validate();
  if (regime == Regime::SimPlusRealMMD && arch.mmd_width < 1)
    throw ConfigError("train: the MMD regime needs arch.mmd_width >= 1");
}

loss::LossWeights regime_weights(const TrainConfig& c) {
  switch (c.regime) {
    case Regime::RealOnlyNoClutter:
    case Regime::RealOnlyClutter: return {0.0, 1.0, 0.0};
    case Regime::SimOnly: return {c.alpha, 0.0, 0.0};
    case Regime::SimPlusRealMMD: return {c.alpha, 0.0, c.gamma_mmd};
    case Regime::SimPlusRealNoPairwise: return {c.alpha, c.beta, 0.0};
    case Regime::SimPlusRealPairwise: return {c.alpha, c.beta, c.gamma_pairwise};
  }
  throw ContractError("regime_weights: unknown regime");
}

TrainReport train(const TrainConfig& config, const TrainingData& data) {
  config.validate();
  const Regime regime = config.regime;
  const loss::LossWeights weights = regime_weights(config);
  const loss::Objective objective = regime == Regime::SimPlusRealMMD ? loss::Objective::Mmd : loss::Objective::Pairwise;

  // Primary set defines the epoch; the secondary (target rows) cycles independently.
  const data::Dataset* primary = nullptr;
  const data::Dataset* secondary = nullptr;
  bool primary_is_target = false;
  switch (regime) {
    case Regime::RealOnlyNoClutter:
      primary = &require(data.paired, "paired", regime);
      primary_is_target = true;
      break;
    case Regime::RealOnlyClutter:
      primary = &require(data.target_clutter, "target-with-clutter", regime);
      primary_is_target = true;
      break;
    case Regime::SimOnly: primary = &require(data.source, "source", regime); break;
    case Regime::SimPlusRealMMD:
      primary = &require(data.source, "source", regime);
      require(data.target_clutter, "target-with-clutter", regime);
      break;
    case Regime::SimPlusRealNoPairwise:
    case Regime::SimPlusRealPairwise:
      primary = &require(data.source, "source", regime);
      secondary = &require(data.paired, "paired", regime);
      break;
  }
  const bool use_pairs = regime == Regime::SimPlusRealPairwise;
  const std::vector<Group> primary_groups = groups_of(*primary, false);
  const std::vector<Group> secondary_groups = secondary ? groups_of(*secondary, use_pairs) : std::vector<Group>{};

  std::vector<const scene::DepthImage*> mmd_source, mmd_target;
  if (objective == loss::Objective::Mmd) {
    mmd_source = images_of(*data.source, data::Domain::Source);
    mmd_target = images_of(*data.target_clutter, data::Domain::Target);
    if (mmd_source.empty() || mmd_target.empty()) throw ContractError("train: MMD regime needs images in both domains");
  }

  nn::Architecture arch = config.arch;
  if (objective != loss::Objective::Mmd) arch.mmd_width = 0;
  Rng init_rng(derive_seed(config.seed, "init"));
  TrainReport report;
  report.initial = nn::init_params(arch, init_rng);
  report.params = report.initial;
  if (config.epochs == 0) return report;

  AdamState adam = adam_init(report.params);
  Rng batch_rng(derive_seed(config.seed, "batches"));
  Stream primary_stream(primary_groups.size(), batch_rng);
  std::optional<Stream> secondary_stream, mmd_source_stream, mmd_target_stream;
  if (secondary) secondary_stream.emplace(secondary_groups.size(), batch_rng);
  if (!mmd_source.empty()) {
    mmd_source_stream.emplace(mmd_source.size(), batch_rng);
    mmd_target_stream.emplace(mmd_target.size(), batch_rng);
  }

  const std::size_t secondary_rows =
      secondary ? static_cast<std::size_t>(std::lround(config.batch_size * config.target_fraction)) : 0;
  const std::size_t primary_rows =
      std::max<std::size_t>(1, static_cast<std::size_t>(config.batch_size) - secondary_rows);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (epoch > 1) primary_stream.reshuffle();
    EpochRecord rec;
    rec.epoch = epoch;
    long steps = 0;
    while (!primary_stream.exhausted()) {
      loss::TrainingBatch batch;
      auto& primary_out = primary_is_target ? batch.target : batch.source;
      std::size_t rows = 0;
      while (rows < primary_rows && !primary_stream.exhausted()) {
        const Group& g = primary_groups[primary_stream.next()];
        primary_out.push_back(make_row_group(*primary, g, false));
        rows += g.samples.size();
      }
      rows = 0;
      while (secondary && rows < secondary_rows) {
        const Group& g = secondary_groups[secondary_stream->next()];
        batch.target.push_back(make_row_group(*secondary, g, use_pairs));
        rows += g.samples.size();
      }
      if (mmd_source_stream) {
        for (int i = 0; i < config.mmd_batch; ++i) {
          batch.mmd_source.push_back(mmd_source[mmd_source_stream->next()]);
          batch.mmd_target.push_back(mmd_target[mmd_target_stream->next()]);
        }
      }

      loss::CompositeResult r =
          loss::composite_loss(objective, batch, report.params, weights, config.kernel, config.threads);
      if (!std::isfinite(r.terms.total))
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                              std::to_string(steps + 1) + " (task_source " + fields::format_value(r.terms.task_source) +
                              ", task_target " + fields::format_value(r.terms.task_target) + ", alignment " +
                              fields::format_value(r.terms.alignment) + ")");
      adam_step(report.params, r.grad, adam, config.adam);
      rec.task_source += weights.alpha * r.terms.task_source;
      rec.task_target += weights.beta * r.terms.task_target;
      rec.alignment += weights.gamma * r.terms.alignment;
      rec.total += r.terms.total;
      ++steps;
    }
    const double n = static_cast<double>(steps);
    rec.task_source /= n;
    rec.task_target /= n;
    rec.alignment /= n;
    rec.total /= n;
    if (data.test) rec.test_loss = evaluate_test_loss(report.params, *data.test, config.threads);
    report.history.push_back(rec);
    report.steps += steps;
  }
  return report;
}

double evaluate_test_loss(const nn::NetworkParams& params, const data::Dataset& set, int threads) {
  if (set.samples.empty()) throw ContractError("evaluate_test_loss: empty test set");
  const std::vector<Group> groups = groups_of(set, false);
  std::vector<double> sums(groups.size(), 0.0);
  parallel_for(groups.size(), threads, [&](std::size_t i) {
    const Group& g = groups[i];
    std::vector<data::Action> actions;
    for (auto s : g.samples) actions.push_back(set.samples[s].action);
    const auto pred = nn::predict(params, set.images[g.image].image, actions);
    double sum = 0.0;
    for (std::size_t k = 0; k < g.samples.size(); ++k) sum += std::abs(pred[k] - set.samples[g.samples[k]].label);
    sums[i] = sum;
  });
  double total = 0.0;
  for (double s : sums) total += s;
  return total / static_cast<double>(set.samples.size());
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,task_source,task_target,alignment,total,test_loss\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + "," + fields::format_value(r.task_source) + "," +
           fields::format_value(r.task_target) + "," + fields::format_value(r.alignment) + "," +
           fields::format_value(r.total) + "," + (r.test_loss ? fields::format_value(*r.test_loss) : "") + "\n";
  }
  return out;
}

}  // namespace simreal::train
