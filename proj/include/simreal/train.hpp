#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "simreal/dataset.hpp"
#include "simreal/losses.hpp"
#include "simreal/net.hpp"

namespace simreal::train {

enum class Regime {
  RealOnlyNoClutter,
  RealOnlyClutter,
  SimOnly,
  SimPlusRealMMD,
  SimPlusRealNoPairwise,
  SimPlusRealPairwise,
};

inline constexpr Regime kAllRegimes[] = {Regime::RealOnlyNoClutter,     Regime::RealOnlyClutter,
                                         Regime::SimOnly,               Regime::SimPlusRealMMD,
                                         Regime::SimPlusRealNoPairwise, Regime::SimPlusRealPairwise};

// Command-line names: real-only-no-clutter, real-only-clutter, sim-only,
// sim-real-mmd, sim-real-no-pairwise, sim-real-pairwise.
std::string_view regime_name(Regime r);
Regime parse_regime(std::string_view name);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  nn::NetworkParams m, v;
  long step = 0;
};

// Moments start at zero for every parameter tensor.
AdamState adam_init(const nn::NetworkParams& params);
// Bias-corrected Adam update. Empty gradient tensors leave their parameter and moments untouched.
void adam_step(nn::NetworkParams& params, const nn::NetworkGrad& grad, AdamState& state, const AdamConfig& hyper);

struct TrainConfig {
  Regime regime = Regime::SimOnly;
  int epochs = 30;
  int batch_size = 64;        // labeled rows per step
  double target_fraction = 0.5;  // share of rows drawn from X_T in mixed regimes
  int mmd_batch = 16;         // images per domain per step, even
  AdamConfig adam;
  double alpha = 1.0;
  double beta = 0.1;
  double gamma_pairwise = 0.1;
  double gamma_mmd = 0.05;
  loss::KernelConfig kernel;
  nn::Architecture arch;      // mmd_width is dropped outside the MMD regime
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

// α, β, γ the composite uses for `config.regime`.
loss::LossWeights regime_weights(const TrainConfig& config);

// Sets required by each regime:
//   source         SimOnly, SimPlusReal*
//   paired         RealOnlyNoClutter (target rows), SimPlusRealNoPairwise, SimPlusRealPairwise
//   target_clutter RealOnlyClutter (target rows), SimPlusRealMMD (images only)
struct TrainingData {
  const data::Dataset* source = nullptr;
  const data::Dataset* paired = nullptr;
  const data::Dataset* target_clutter = nullptr;
  const data::Dataset* test = nullptr;  // optional, evaluated after every epoch
};

// Weighted per-epoch means: task_source + task_target + alignment = total.
struct EpochRecord {
  int epoch = 0;
  double task_source = 0.0;
  double task_target = 0.0;
  double alignment = 0.0;
  double total = 0.0;
  std::optional<double> test_loss;
};

struct TrainReport {
  nn::NetworkParams initial;
  nn::NetworkParams params;
  std::vector<EpochRecord> history;
  long steps = 0;
};

TrainReport train(const TrainConfig& config, const TrainingData& data);

// Mean |d(I, a) − y| over every sample of the set.
double evaluate_test_loss(const nn::NetworkParams& params, const data::Dataset& set, int threads = 1);

// epoch,task_source,task_target,alignment,total,test_loss
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace simreal::train
