#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simreal/dataset.hpp"
#include "simreal/layers.hpp"

namespace simreal::nn {

using data::Action;
using scene::DepthImage;
using Tensor = RowMatrix<double>;
using Vec = Vector<double>;

// d(I, a) network layout. Convolutions use valid padding; pools are 2x2.
//
//   image -> conv1+ReLU -> [+2 constant action channels] -> pool1
//         -> conv2+ReLU -> pool2 -> conv3+ReLU -> pool3 -> feature f(I, a)
//   f -> dense+ReLU -> dense+ReLU -> dense(1)            (head g)
//   flatten(conv1 activation) -> dense+ReLU              (MMD hook)
//
// With the defaults the pool3 feature is 32 x 5 x 5 = 800 values and the
// MMD hook maps 16 x 60 x 60 = 57600 conv1 activations to 512 channels.
struct Architecture {
  int image_size = scene::kImageSize;
  int conv1_kernel = 5;
  int conv1_channels = 16;
  int conv2_kernel = 5;
  int conv2_channels = 32;
  int conv3_kernel = 3;
  int conv3_channels = 32;
  int dense1 = 64;
  int dense2 = 64;
  int mmd_width = 512;  // 0 disables the hook
  double action_bound = 0.03;

  int conv1_size() const { return image_size - conv1_kernel + 1; }
  int pool1_size() const { return conv1_size() / 2; }
  int conv2_size() const { return pool1_size() - conv2_kernel + 1; }
  int pool2_size() const { return conv2_size() / 2; }
  int conv3_size() const { return pool2_size() - conv3_kernel + 1; }
  int pool3_size() const { return conv3_size() / 2; }
  int feature_length() const { return conv3_channels * pool3_size() * pool3_size(); }
  int hook_input_length() const { return conv1_channels * conv1_size() * conv1_size(); }

  void validate() const;
  bool operator==(const Architecture&) const = default;
};

// θ_f = conv1..conv3 (+ MMD projection), θ_g = fc1, fc2, out. conv2_w holds
// (conv1_channels + 2) * k * k columns; the last 2 * k * k act on the action channels.
struct NetworkParams {
  Architecture arch;
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor conv3_w, conv3_b;
  Tensor fc1_w, fc1_b;
  Tensor fc2_w, fc2_b;
  Tensor out_w, out_b;
  Tensor mmd_w, mmd_b;

  template <typename F>
  void for_each(F&& f) {
    for_each_impl(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    for_each_impl(*this, f);
  }

  std::size_t parameter_count() const;
  // Same shapes, all zeros. Without the hook, mmd_w and mmd_b stay empty.
  NetworkParams zeros_like(bool include_hook = true) const;
  // Empty tensors on the right-hand side count as zero.
  NetworkParams& operator+=(const NetworkParams& other);
  bool bitwise_equal(const NetworkParams& other) const;

 private:
  template <typename Self, typename F>
  static void for_each_impl(Self& self, F& f) {
    f("conv1_w", self.conv1_w);
    f("conv1_b", self.conv1_b);
    f("conv2_w", self.conv2_w);
    f("conv2_b", self.conv2_b);
    f("conv3_w", self.conv3_w);
    f("conv3_b", self.conv3_b);
    f("fc1_w", self.fc1_w);
    f("fc1_b", self.fc1_b);
    f("fc2_w", self.fc2_w);
    f("fc2_b", self.fc2_b);
    f("out_w", self.out_w);
    f("out_b", self.out_b);
    f("mmd_w", self.mmd_w);
    f("mmd_b", self.mmd_b);
  }
};

using NetworkGrad = NetworkParams;

// He-normal weights (variance 2 / fan_in) and zero biases; the output layer is scaled by kOutputInitScale.
inline constexpr double kOutputInitScale = 0.01;
NetworkParams init_params(const Architecture& arch, Rng& rng);

struct ActionCache {
  Action action;
  Tensor p2;       // pool2 output, ReLU(pool(z2_image) + offset)
  Tensor cols3;    // conv3 patches of p2
  Tensor a3;
  IndexMap arg3;
  Vec feature;     // flattened pool3
  bool has_head = false;
  Vec h1, h2;
  double output = 0.0;
};

// Activations of one image evaluated under one or more actions. conv1 and
// the image part of conv2 are shared by every action.
struct ForwardCache {
  Tensor input;    // 1 x (H*W)
  Tensor a1;       // conv1 activation (post-ReLU)
  IndexMap arg1;
  Tensor p1;
  Tensor z2_image; // conv2 pre-activation without the action channels
  // The action adds a per-channel constant to conv2 and ReLU is monotone, so
  // pooling commutes with both: pool2 is taken once per image.
  Tensor p2_image;
  IndexMap arg2;
  bool conv1_only = false;
  std::vector<ActionCache> actions;
};

// Features for every action. `conv1_only` stops after conv1 (MMD-only images).
ForwardCache forward_features(const DepthImage& image, std::span<const Action> actions, const NetworkParams& params,
                              bool conv1_only = false);

// Runs the head on every cached feature; returns the predictions.
std::vector<double> forward_head(ForwardCache& cache, const NetworkParams& params);
double forward_head(const Vec& feature, const NetworkParams& params);

// ReLU(W * flatten(conv1 activation) + b); never depends on the action.
Vec forward_mmd_hook(const ForwardCache& cache, const NetworkParams& params);

// Batched MMD hook over several images; rows are images.
struct HookBatch {
  Tensor inputs;   // n x hook_input_length
  Tensor outputs;  // n x mmd_width
};
HookBatch forward_mmd_hook(std::span<const ForwardCache* const> caches, const NetworkParams& params);
// Accumulates hook parameter gradients and returns d(loss)/d(conv1 activation), one row per image.
Tensor backward_mmd_hook(const HookBatch& batch, const Tensor& d_outputs, const NetworkParams& params,
                         NetworkGrad& grad);

// Upstream gradients for one ForwardCache; empty members mean zero.
struct Upstream {
  std::vector<double> d_output;  // per action, head output
  std::vector<Vec> d_feature;    // per action, pool3 feature
  Tensor d_conv1;                // 1 x hook_input_length, conv1 activation
};

void backward(const Upstream& upstream, const ForwardCache& cache, const NetworkParams& params, NetworkGrad& grad);

// Predictions for many candidate actions on one image without retaining caches.
std::vector<double> predict(const NetworkParams& params, const DepthImage& image, std::span<const Action> actions);

// "PSNN" checkpoint: magic, u16 version, architecture, layer table, raw doubles.
inline constexpr std::uint16_t kCheckpointVersion = 1;
std::vector<char> encode_checkpoint(const NetworkParams& params);
NetworkParams decode_checkpoint(const std::vector<char>& bytes, const std::string& what = "checkpoint");
void save_checkpoint(const NetworkParams& params, const std::string& path);
NetworkParams load_checkpoint(const std::string& path);

}  // namespace simreal::nn
