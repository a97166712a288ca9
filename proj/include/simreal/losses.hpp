#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "simreal/common.hpp"
#include "simreal/net.hpp"

namespace simreal::loss {

// Feature batches hold one vector per row.
template <typename Scalar>
using FeatureBatch = RowMatrix<Scalar>;

template <typename Scalar>
struct ValueAndGrad {
  Scalar value{};
  Vector<Scalar> grad;
};

template <typename Scalar>
struct PairGrad {
  Scalar value{};
  FeatureBatch<Scalar> grad_p;
  FeatureBatch<Scalar> grad_q;
};

// Σ|pred − label| and its subgradient sign(pred − label), sign(0) = 0.
template <typename D1, typename D2>
ValueAndGrad<typename D1::Scalar> task_loss_l1(const Eigen::MatrixBase<D1>& predictions,
                                               const Eigen::MatrixBase<D2>& labels) {
  using Scalar = typename D1::Scalar;
  if (predictions.size() != labels.size() || predictions.size() < 1)
    throw ContractError("task_loss_l1: predictions and labels need equal length >= 1");
  const auto diff = (predictions.derived().reshaped() - labels.derived().reshaped()).eval();
  ValueAndGrad<Scalar> out;
  out.value = diff.cwiseAbs().sum();
  out.grad = diff.unaryExpr([](Scalar d) { return d > Scalar(0) ? Scalar(1) : (d < Scalar(0) ? Scalar(-1) : Scalar(0)); });
  return out;
}

// Σ_i ‖s_i − t_i‖₂ over paired rows; zero-norm pairs get zero gradient.
template <typename D1, typename D2>
PairGrad<typename D1::Scalar> pairwise_loss(const Eigen::MatrixBase<D1>& source, const Eigen::MatrixBase<D2>& target) {
  using Scalar = typename D1::Scalar;
  if (source.rows() != target.rows() || source.cols() != target.cols())
    throw ContractError("pairwise_loss: batches must have identical shape");
  PairGrad<Scalar> out;
  out.grad_p = FeatureBatch<Scalar>::Zero(source.rows(), source.cols());
  out.grad_q = FeatureBatch<Scalar>::Zero(source.rows(), source.cols());
  for (Eigen::Index i = 0; i < source.rows(); ++i) {
    const auto diff = (source.row(i) - target.row(i)).eval();
    const Scalar norm = diff.norm();
    out.value += norm;
    if (norm > Scalar(0)) {
      out.grad_p.row(i) = diff / norm;
      out.grad_q.row(i) = -diff / norm;
    }
  }
  return out;
}

template <typename D1, typename D2>
typename D1::Scalar rbf(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& y, typename D1::Scalar sigma) {
  return std::exp(-(x - y).squaredNorm() / (2 * sigma * sigma));
}

// Unbiased quadratic-time estimate of MMD² with an RBF kernel.
template <typename D1, typename D2>
typename D1::Scalar mmd_quadratic(const Eigen::MatrixBase<D1>& p, const Eigen::MatrixBase<D2>& q,
                                  typename D1::Scalar sigma) {
  using Scalar = typename D1::Scalar;
  const Eigen::Index m = p.rows(), n = q.rows();
  if (m < 2 || n < 2) throw ContractError("mmd_quadratic: each batch needs at least 2 vectors");
  if (p.cols() != q.cols()) throw ContractError("mmd_quadratic: feature lengths differ");
  Scalar pp = 0, qq = 0, pq = 0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) pp += rbf(p.row(i), p.row(j), sigma);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) qq += rbf(q.row(i), q.row(j), sigma);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) pq += rbf(p.row(i), q.row(j), sigma);
  return pp / Scalar(m * (m - 1)) + qq / Scalar(n * (n - 1)) - 2 * pq / Scalar(m * n);
}

// Linear-time unbiased estimate: rows are consumed two at a time in order,
//   (2/n) Σ_i [k(p₂ᵢ, p₂ᵢ₊₁) + k(q₂ᵢ, q₂ᵢ₊₁) − k(p₂ᵢ, q₂ᵢ₊₁) − k(p₂ᵢ₊₁, q₂ᵢ)].
// The bandwidth is treated as a constant.
template <typename D1, typename D2>
PairGrad<typename D1::Scalar> mmd_linear(const Eigen::MatrixBase<D1>& p, const Eigen::MatrixBase<D2>& q,
                                         typename D1::Scalar sigma) {
  using Scalar = typename D1::Scalar;
  const Eigen::Index n = p.rows();
  if (q.rows() != n) throw ContractError("mmd_linear: batches need equal size");
  if (n < 2 || n % 2 != 0) throw ContractError("mmd_linear: batch size must be even and >= 2");
  if (p.cols() != q.cols()) throw ContractError("mmd_linear: feature lengths differ");
  PairGrad<Scalar> out;
  out.grad_p = FeatureBatch<Scalar>::Zero(n, p.cols());
  out.grad_q = FeatureBatch<Scalar>::Zero(n, p.cols());
  const Scalar scale = Scalar(2) / Scalar(n);
  const Scalar inv_s2 = Scalar(1) / (sigma * sigma);
  // Adds sign * k(x, y) to the estimate and its gradient to gx, gy.
  const auto term = [&](auto x, auto y, auto gx, auto gy, Scalar sign) {
    const auto diff = (x - y).eval();
    const Scalar k = std::exp(-diff.squaredNorm() * inv_s2 / 2);
    out.value += sign * k;
    gx -= sign * scale * k * inv_s2 * diff;
    gy += sign * scale * k * inv_s2 * diff;
  };
  for (Eigen::Index i = 0; i + 1 < n; i += 2) {
    term(p.row(i), p.row(i + 1), out.grad_p.row(i), out.grad_p.row(i + 1), Scalar(1));
    term(q.row(i), q.row(i + 1), out.grad_q.row(i), out.grad_q.row(i + 1), Scalar(1));
    term(p.row(i), q.row(i + 1), out.grad_p.row(i), out.grad_q.row(i + 1), Scalar(-1));
    term(p.row(i + 1), q.row(i), out.grad_p.row(i + 1), out.grad_q.row(i), Scalar(-1));
  }
  out.value *= scale;
  return out;
}

inline constexpr double kBandwidthFloor = 1e-8;
inline constexpr Eigen::Index kMedianSubsample = 256;

// Median pairwise Euclidean distance over the joint batch (evenly spaced
// subsample of at most 256 vectors), floored at 1e-8.
template <typename D1, typename D2>
typename D1::Scalar median_heuristic(const Eigen::MatrixBase<D1>& p, const Eigen::MatrixBase<D2>& q) {
  using Scalar = typename D1::Scalar;
  const Eigen::Index total = p.rows() + q.rows();
  if (total < 2) throw ContractError("median_heuristic: need at least 2 vectors");
  const Eigen::Index used = std::min(total, kMedianSubsample);
  std::vector<Eigen::Index> picks(static_cast<std::size_t>(used));
  for (Eigen::Index i = 0; i < used; ++i) picks[static_cast<std::size_t>(i)] = i * total / used;
  const auto row = [&](Eigen::Index idx) -> Vector<Scalar> {
    return idx < p.rows() ? Vector<Scalar>(p.row(idx).transpose()) : Vector<Scalar>(q.row(idx - p.rows()).transpose());
  };
  std::vector<Vector<Scalar>> rows;
  rows.reserve(picks.size());
  for (auto idx : picks) rows.push_back(row(idx));
  std::vector<Scalar> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) dists.push_back((rows[i] - rows[j]).norm());
  std::sort(dists.begin(), dists.end());
  const std::size_t mid = dists.size() / 2;
  const Scalar median = dists.size() % 2 ? dists[mid] : (dists[mid - 1] + dists[mid]) / 2;
  return std::max(median, Scalar(kBandwidthFloor));
}

struct KernelConfig {
  enum class Bandwidth { Fixed, Median };
  Bandwidth bandwidth = Bandwidth::Median;
  double sigma = 1.0;

  template <typename D1, typename D2>
  double resolve(const Eigen::MatrixBase<D1>& p, const Eigen::MatrixBase<D2>& q) const {
    if (bandwidth == Bandwidth::Fixed) {
      if (!(sigma > 0.0)) throw ConfigError("kernel: fixed sigma must be > 0");
      return sigma;
    }
    return median_heuristic(p, q);
  }
};

struct LossWeights {
  double alpha = 1.0;   // source task
  double beta = 0.1;    // target task
  double gamma = 0.1;   // alignment (pairwise or MMD)

  void validate() const {
    if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
};

// Which alignment term the composite uses.
enum class Objective {
  Pairwise,  // α·task(source) + β·task(target) + γ·pairwise(pool3)
  Mmd,       // α·task(source) + γ·MMD²(hook(source), hook(target))
};

// Labeled rows sharing one image. With `paired_source` set, the rows also
// form (I_S, I_T, a) triples with that image as I_S.
struct RowGroup {
  const scene::DepthImage* image = nullptr;
  std::vector<data::Action> actions;
  std::vector<double> labels;
  const scene::DepthImage* paired_source = nullptr;
};

struct TrainingBatch {
  std::vector<RowGroup> source;
  std::vector<RowGroup> target;
  std::vector<const scene::DepthImage*> mmd_source;
  std::vector<const scene::DepthImage*> mmd_target;
};

// Raw terms are per-row means; total = α·task_source + β·task_target + γ·alignment.
struct LossTerms {
  double task_source = 0.0;
  double task_target = 0.0;
  double alignment = 0.0;
  double total = 0.0;
  std::size_t source_rows = 0;
  std::size_t target_rows = 0;
  std::size_t pair_rows = 0;
};

struct CompositeResult {
  LossTerms terms;
  nn::NetworkGrad grad;
};

CompositeResult composite_loss(Objective mode, const TrainingBatch& batch, const nn::NetworkParams& params,
                               const LossWeights& weights, const KernelConfig& kernel, int threads = 1);

}  // namespace simreal::loss
