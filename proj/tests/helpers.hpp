#pragma once

#include <cmath>
#include <functional>

#include "simreal/net.hpp"

namespace simreal::testing {

// About 1.3k parameters with the hook, small enough for full finite differences.
inline nn::Architecture tiny_arch(int mmd_width = 3) {
  nn::Architecture a;
  a.image_size = 16;
  a.conv1_kernel = 3;
  a.conv1_channels = 2;
  a.conv2_kernel = 3;
  a.conv2_channels = 3;
  a.conv3_kernel = 1;
  a.conv3_channels = 2;
  a.dense1 = 4;
  a.dense2 = 3;
  a.mmd_width = mmd_width;
  a.action_bound = 0.03;
  return a;
}

// Depths in [0.2, 0.4] with a few missing pixels.
inline scene::DepthImage random_image(int size, Rng& rng) {
  std::uniform_real_distribution<double> u(0.2, 0.4), coin(0.0, 1.0);
  scene::DepthImage img(size, size);
  for (int i = 0; i < img.size(); ++i) img.data()[i] = coin(rng) < 0.1 ? 0.0 : u(rng);
  return img;
}

inline std::vector<data::Action> random_actions(int n, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<data::Action> out(static_cast<std::size_t>(n));
  for (auto& a : out) a = {u(rng), u(rng)};
  return out;
}

// The scaled network's biases get small positive offsets so ReLUs are not dead.
inline nn::NetworkParams tiny_params(std::uint64_t seed, int mmd_width = 3) {
  Rng rng(seed);
  nn::NetworkParams p = nn::init_params(tiny_arch(mmd_width), rng);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  p.for_each([&](std::string_view name, nn::Tensor& t) {
    if (name.ends_with("_b"))
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  });
  return p;
}

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

// Central differences of `f` over every parameter; returns the worst relative error
// against `analytic`, and the count of compared coordinates in `compared`.
inline double worst_gradient_error(nn::NetworkParams& params, const nn::NetworkGrad& analytic,
                                   const std::function<double(const nn::NetworkParams&)>& f, double eps,
                                   std::size_t* compared = nullptr, std::string* worst_name = nullptr) {
  std::vector<const nn::Tensor*> g;
  analytic.for_each([&](std::string_view, const nn::Tensor& t) { g.push_back(&t); });
  double worst = 0.0;
  std::size_t count = 0, i = 0;
  params.for_each([&](std::string_view name, nn::Tensor& t) {
    const nn::Tensor& gt = *g[i++];
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      const double keep = t.data()[k];
      t.data()[k] = keep + eps;
      const double up = f(params);
      t.data()[k] = keep - eps;
      const double down = f(params);
      t.data()[k] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double a = gt.size() ? gt.data()[k] : 0.0;
      const double err = relative_error(a, numeric);
      if (err > worst) {
        worst = err;
        if (worst_name) *worst_name = std::string(name) + "[" + std::to_string(k) + "]";
      }
      ++count;
    }
  });
  if (compared) *compared = count;
  return worst;
}

}  // namespace simreal::testing

namespace simreal::testing {

// Full 64 x 64 input with narrow layers: fast enough for end-to-end training tests.
inline nn::Architecture narrow_arch(int mmd_width = 0) {
  nn::Architecture a;
  a.conv1_channels = 4;
  a.conv2_channels = 4;
  a.conv3_channels = 4;
  a.dense1 = 16;
  a.dense2 = 16;
  a.mmd_width = mmd_width;
  return a;
}

}  // namespace simreal::testing
