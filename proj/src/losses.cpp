#include "simreal/losses.hpp"

namespace simreal::loss {

namespace {

struct Task {
  const scene::DepthImage* image = nullptr;
  const std::vector<data::Action>* actions = nullptr;
  bool conv1_only = false;
  nn::ForwardCache cache;
  std::vector<double> predictions;
  nn::Upstream upstream;
};

Eigen::Map<const Vector<double>> as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector<double>>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

CompositeResult composite_loss(Objective mode, const TrainingBatch& batch, const nn::NetworkParams& params,
                               const LossWeights& weights, const KernelConfig& kernel, int threads) {
  weights.validate();
  const bool use_pairs = mode == Objective::Pairwise && weights.gamma > 0.0;
  const bool use_mmd = mode == Objective::Mmd && weights.gamma > 0.0;
  if (mode == Objective::Pairwise && (!batch.mmd_source.empty() || !batch.mmd_target.empty()))
    throw ContractError("composite_loss: pairwise objective given MMD image pools");
  if (mode == Objective::Mmd && !batch.target.empty())
    throw ContractError("composite_loss: MMD objective takes unlabeled target images, not labeled target rows");
  if (use_mmd && (batch.mmd_source.empty() || batch.mmd_source.size() != batch.mmd_target.size()))
    throw ContractError("composite_loss: MMD objective needs equal, non-empty source and target image pools");

  std::vector<Task> tasks;
  std::size_t source_rows = 0, target_rows = 0, pair_rows = 0;
  const auto add_group = [&](const RowGroup& g) {
    if (g.image == nullptr) throw ContractError("composite_loss: row group without image");
    if (g.labels.size() != g.actions.size()) throw ContractError("composite_loss: labels and actions differ in length");
    Task t;
    t.image = g.image;
    t.actions = &g.actions;
    tasks.push_back(std::move(t));
  };
  for (const auto& g : batch.source) {
    add_group(g);
    source_rows += g.actions.size();
  }
  const std::size_t first_target = tasks.size();
  std::vector<std::size_t> paired_task(batch.target.size(), 0);
  for (std::size_t i = 0; i < batch.target.size(); ++i) {
    const auto& g = batch.target[i];
    add_group(g);
    target_rows += g.actions.size();
  }
  for (std::size_t i = 0; i < batch.target.size() && use_pairs; ++i) {
    const auto& g = batch.target[i];
    if (g.paired_source == nullptr) continue;
    paired_task[i] = tasks.size();
    Task t;
    t.image = g.paired_source;
    t.actions = &g.actions;
    tasks.push_back(std::move(t));
    pair_rows += g.actions.size();
  }
  if (use_pairs && pair_rows == 0)
    throw ContractError("composite_loss: pairwise objective with gamma > 0 needs paired target rows");
  const std::size_t first_mmd = tasks.size();
  if (use_mmd) {
    for (const auto* img : batch.mmd_source) {
      Task t;
      t.image = img;
      t.conv1_only = true;
      tasks.push_back(std::move(t));
    }
    for (const auto* img : batch.mmd_target) {
      Task t;
      t.image = img;
      t.conv1_only = true;
      tasks.push_back(std::move(t));
    }
  }

  static const std::vector<data::Action> kNoActions;
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    Task& t = tasks[i];
    t.cache = nn::forward_features(*t.image, t.actions ? *t.actions : kNoActions, params, t.conv1_only);
    if (!t.conv1_only) t.predictions = nn::forward_head(t.cache, params);
  });

  CompositeResult result;
  LossTerms& terms = result.terms;
  terms.source_rows = source_rows;
  terms.target_rows = target_rows;
  terms.pair_rows = pair_rows;

  const auto task_term = [&](std::size_t task_index, const RowGroup& g, double weight, std::size_t rows) {
    Task& t = tasks[task_index];
    const auto l1 = task_loss_l1(as_vector(t.predictions), as_vector(g.labels));
    const double scale = weight / static_cast<double>(rows);
    if (weight > 0.0) {
      t.upstream.d_output.resize(g.actions.size());
      for (std::size_t k = 0; k < g.actions.size(); ++k) t.upstream.d_output[k] = scale * l1.grad(static_cast<Eigen::Index>(k));
    }
    return l1.value / static_cast<double>(rows);
  };
  for (std::size_t i = 0; i < batch.source.size(); ++i)
    terms.task_source += task_term(i, batch.source[i], weights.alpha, source_rows);
  for (std::size_t i = 0; i < batch.target.size(); ++i)
    terms.task_target += task_term(first_target + i, batch.target[i], weights.beta, target_rows);

  if (use_pairs) {
    const double scale = weights.gamma / static_cast<double>(pair_rows);
    for (std::size_t i = 0; i < batch.target.size(); ++i) {
      if (batch.target[i].paired_source == nullptr) continue;
      Task& tgt = tasks[first_target + i];
      Task& src = tasks[paired_task[i]];
      const std::size_t n = batch.target[i].actions.size();
      const Eigen::Index d = params.arch.feature_length();
      FeatureBatch<double> fs(static_cast<Eigen::Index>(n), d), ft(static_cast<Eigen::Index>(n), d);
      for (std::size_t k = 0; k < n; ++k) {
        fs.row(static_cast<Eigen::Index>(k)) = src.cache.actions[k].feature.transpose();
        ft.row(static_cast<Eigen::Index>(k)) = tgt.cache.actions[k].feature.transpose();
      }
      const auto pw = pairwise_loss(fs, ft);
      terms.alignment += pw.value / static_cast<double>(pair_rows);
      src.upstream.d_feature.resize(n);
      tgt.upstream.d_feature.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        src.upstream.d_feature[k] = scale * pw.grad_p.row(static_cast<Eigen::Index>(k)).transpose();
        tgt.upstream.d_feature[k] = scale * pw.grad_q.row(static_cast<Eigen::Index>(k)).transpose();
      }
    }
  }

  result.grad = params.zeros_like();

  if (use_mmd) {
    const std::size_t n = batch.mmd_source.size();
    std::vector<const nn::ForwardCache*> caches;
    for (std::size_t i = first_mmd; i < tasks.size(); ++i) caches.push_back(&tasks[i].cache);
    const nn::HookBatch hook = nn::forward_mmd_hook(caches, params);
    const auto hs = hook.outputs.topRows(static_cast<Eigen::Index>(n));
    const auto ht = hook.outputs.bottomRows(static_cast<Eigen::Index>(n));
    const double sigma = kernel.resolve(hs, ht);
    const auto mmd = mmd_linear(hs, ht, sigma);
    terms.alignment = mmd.value;
    nn::Tensor d_hook(hook.outputs.rows(), hook.outputs.cols());
    d_hook.topRows(static_cast<Eigen::Index>(n)) = weights.gamma * mmd.grad_p;
    d_hook.bottomRows(static_cast<Eigen::Index>(n)) = weights.gamma * mmd.grad_q;
    const nn::Tensor d_conv1 = nn::backward_mmd_hook(hook, d_hook, params, result.grad);
    for (std::size_t i = first_mmd; i < tasks.size(); ++i)
      tasks[i].upstream.d_conv1 = d_conv1.row(static_cast<Eigen::Index>(i - first_mmd));
  }

  terms.total = weights.alpha * terms.task_source + weights.beta * terms.task_target + weights.gamma * terms.alignment;

  // Per-task gradients, reduced in task order so the sum does not depend on threads.
  std::vector<nn::NetworkGrad> partial(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t i) {
    Task& t = tasks[i];
    if (t.upstream.d_output.empty() && t.upstream.d_feature.empty() && t.upstream.d_conv1.size() == 0) return;
    nn::NetworkGrad g = params.zeros_like(/*include_hook=*/false);
    nn::backward(t.upstream, t.cache, params, g);
    partial[i] = std::move(g);
  });
  for (const auto& g : partial)
    if (g.conv1_w.size() > 0) result.grad += g;
  return result;
}

}  // namespace simreal::loss
