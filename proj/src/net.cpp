#include "simreal/net.hpp"

#include <cmath>
#include <cstring>

#include "simreal/binio.hpp"

namespace simreal::nn {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'N', 'N'};

Tensor he_normal(int rows, int cols, int fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

void check_params(const NetworkParams& p) {
  const Architecture& a = p.arch;
  const auto expect = [](const Tensor& t, Eigen::Index r, Eigen::Index c, const char* name) {
    if (t.rows() != r || t.cols() != c)
      throw ConfigError(std::string("network parameter ") + name + " has shape " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()) + ", expected " + std::to_string(r) + "x" + std::to_string(c));
  };
  const int k1 = a.conv1_kernel, k2 = a.conv2_kernel, k3 = a.conv3_kernel;
  expect(p.conv1_w, a.conv1_channels, k1 * k1, "conv1_w");
  expect(p.conv1_b, a.conv1_channels, 1, "conv1_b");
  expect(p.conv2_w, a.conv2_channels, (a.conv1_channels + 2) * k2 * k2, "conv2_w");
  expect(p.conv2_b, a.conv2_channels, 1, "conv2_b");
  expect(p.conv3_w, a.conv3_channels, a.conv2_channels * k3 * k3, "conv3_w");
  expect(p.conv3_b, a.conv3_channels, 1, "conv3_b");
  expect(p.fc1_w, a.dense1, a.feature_length(), "fc1_w");
  expect(p.fc1_b, a.dense1, 1, "fc1_b");
  expect(p.fc2_w, a.dense2, a.dense1, "fc2_w");
  expect(p.fc2_b, a.dense2, 1, "fc2_b");
  expect(p.out_w, 1, a.dense2, "out_w");
  expect(p.out_b, 1, 1, "out_b");
  if (a.mmd_width > 0) {
    expect(p.mmd_w, a.mmd_width, a.hook_input_length(), "mmd_w");
    expect(p.mmd_b, a.mmd_width, 1, "mmd_b");
  } else {
    expect(p.mmd_w, 0, 0, "mmd_w");
    expect(p.mmd_b, 0, 0, "mmd_b");
  }
}

// Conv2 response to the two constant action channels: with valid padding
// every output sees the whole kernel, so it is a per-channel offset.
Vec action_offset(const NetworkParams& p, const Action& action) {
  const int kk = p.arch.conv2_kernel * p.arch.conv2_kernel;
  const int base = p.arch.conv1_channels * kk;
  const double ux = action.dx / p.arch.action_bound;
  const double uy = action.dy / p.arch.action_bound;
  return ux * p.conv2_w.middleCols(base, kk).rowwise().sum() + uy * p.conv2_w.middleCols(base + kk, kk).rowwise().sum();
}

void forward_action(const ForwardCache& base, const Action& action, const NetworkParams& p, ActionCache& out) {
  const Architecture& a = p.arch;
  out.action = action;
  out.p2 = base.p2_image;
  out.p2.colwise() += action_offset(p, action);
  out.p2 = relu(out.p2);
  im2col(out.p2, a.pool2_size(), a.pool2_size(), a.conv3_kernel, out.cols3);
  out.a3.noalias() = p.conv3_w * out.cols3;
  out.a3.colwise() += p.conv3_b.col(0);
  out.a3 = relu(out.a3);
  Tensor p3;
  maxpool2(out.a3, a.conv3_size(), a.conv3_size(), p3, out.arg3);
  out.feature = Eigen::Map<const Vec>(p3.data(), p3.size());
  out.has_head = false;
}

void head(ActionCache& c, const NetworkParams& p) {
  c.h1 = relu(p.fc1_w * c.feature + p.fc1_b.col(0));
  c.h2 = relu(p.fc2_w * c.h1 + p.fc2_b.col(0));
  c.output = (p.out_w * c.h2)(0) + p.out_b(0, 0);
  c.has_head = true;
}

}  // namespace

void Architecture::validate() const {
  if (image_size < 1 || conv1_kernel < 1 || conv2_kernel < 1 || conv3_kernel < 1 || conv1_channels < 1 ||
      conv2_channels < 1 || conv3_channels < 1 || dense1 < 1 || dense2 < 1 || mmd_width < 0)
    throw ConfigError("architecture: sizes must be positive");
  if (pool3_size() < 1) throw ConfigError("architecture: image too small for the layer stack");
  if (!(action_bound > 0.0)) throw ConfigError("architecture: action_bound must be > 0");
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, const Tensor& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

NetworkParams NetworkParams::zeros_like(bool include_hook) const {
  NetworkParams z;
  z.arch = arch;
  std::vector<const Tensor*> src;
  for_each([&](std::string_view, const Tensor& t) { src.push_back(&t); });
  std::size_t i = 0;
  z.for_each([&](std::string_view name, Tensor& t) {
    const Tensor& s = *src[i++];
    if (include_hook || name.substr(0, 4) != "mmd_") t = Tensor::Zero(s.rows(), s.cols());
  });
  return z;
}

NetworkParams& NetworkParams::operator+=(const NetworkParams& other) {
  std::vector<const Tensor*> rhs;
  other.for_each([&](std::string_view, const Tensor& t) { rhs.push_back(&t); });
  std::size_t i = 0;
  for_each([&](std::string_view name, Tensor& t) {
    if (rhs[i]->size() == 0) {
      ++i;
      return;
    }
    if (t.rows() != rhs[i]->rows() || t.cols() != rhs[i]->cols())
      throw ContractError("parameter accumulation: shape mismatch in " + std::string(name));
    t += *rhs[i++];
  });
  return *this;
}

bool NetworkParams::bitwise_equal(const NetworkParams& other) const {
  if (!(arch == other.arch)) return false;
  std::vector<const Tensor*> rhs;
  other.for_each([&](std::string_view, const Tensor& t) { rhs.push_back(&t); });
  bool equal = true;
  std::size_t i = 0;
  for_each([&](std::string_view, const Tensor& t) {
    const Tensor& o = *rhs[i++];
    equal = equal && t.rows() == o.rows() && t.cols() == o.cols() &&
            (t.size() == 0 || std::memcmp(t.data(), o.data(), sizeof(double) * t.size()) == 0);
  });
  return equal;
}

NetworkParams init_params(const Architecture& arch, Rng& rng) {
  arch.validate();
  NetworkParams p;
  p.arch = arch;
  const int k1 = arch.conv1_kernel, k2 = arch.conv2_kernel, k3 = arch.conv3_kernel;
  const int c2_in = (arch.conv1_channels + 2) * k2 * k2;
  p.conv1_w = he_normal(arch.conv1_channels, k1 * k1, k1 * k1, rng);
  p.conv1_b = Tensor::Zero(arch.conv1_channels, 1);
  p.conv2_w = he_normal(arch.conv2_channels, c2_in, c2_in, rng);
  p.conv2_b = Tensor::Zero(arch.conv2_channels, 1);
  p.conv3_w = he_normal(arch.conv3_channels, arch.conv2_channels * k3 * k3, arch.conv2_channels * k3 * k3, rng);
  p.conv3_b = Tensor::Zero(arch.conv3_channels, 1);
  p.fc1_w = he_normal(arch.dense1, arch.feature_length(), arch.feature_length(), rng);
  p.fc1_b = Tensor::Zero(arch.dense1, 1);
  p.fc2_w = he_normal(arch.dense2, arch.dense1, arch.dense1, rng);
  p.fc2_b = Tensor::Zero(arch.dense2, 1);
  // Labels are centimetres in metre units; a full-scale output layer starts
  // predictions near 1 m and the first updates kill the hidden ReLUs.
  p.out_w = kOutputInitScale * he_normal(1, arch.dense2, arch.dense2, rng);
  p.out_b = Tensor::Zero(1, 1);
  if (arch.mmd_width > 0) {
    p.mmd_w = he_normal(arch.mmd_width, arch.hook_input_length(), arch.hook_input_length(), rng);
    p.mmd_b = Tensor::Zero(arch.mmd_width, 1);
  }
  return p;
}

ForwardCache forward_features(const DepthImage& image, std::span<const Action> actions, const NetworkParams& p,
                              bool conv1_only) {
  const Architecture& a = p.arch;
  if (image.rows() != a.image_size || image.cols() != a.image_size)
    throw ConfigError("forward_features: image is " + std::to_string(image.rows()) + "x" +
                      std::to_string(image.cols()) + ", network expects " + std::to_string(a.image_size));
  check_params(p);
  ForwardCache c;
  c.conv1_only = conv1_only;
  c.input = Eigen::Map<const Tensor>(image.data(), 1, image.size());
  Tensor cols1;
  im2col(c.input, a.image_size, a.image_size, a.conv1_kernel, cols1);
  c.a1.noalias() = p.conv1_w * cols1;
  c.a1.colwise() += p.conv1_b.col(0);
  c.a1 = relu(c.a1);
  if (conv1_only) return c;

  maxpool2(c.a1, a.conv1_size(), a.conv1_size(), c.p1, c.arg1);
  Tensor cols2;
  im2col(c.p1, a.pool1_size(), a.pool1_size(), a.conv2_kernel, cols2);
  const int image_cols = a.conv1_channels * a.conv2_kernel * a.conv2_kernel;
  c.z2_image.noalias() = p.conv2_w.leftCols(image_cols) * cols2;
  c.z2_image.colwise() += p.conv2_b.col(0);
  maxpool2(c.z2_image, a.conv2_size(), a.conv2_size(), c.p2_image, c.arg2);

  c.actions.resize(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i) forward_action(c, actions[i], p, c.actions[i]);
  return c;
}

std::vector<double> forward_head(ForwardCache& cache, const NetworkParams& params) {
  std::vector<double> out;
  out.reserve(cache.actions.size());
  for (auto& ac : cache.actions) {
    head(ac, params);
    out.push_back(ac.output);
  }
  return out;
}

double forward_head(const Vec& feature, const NetworkParams& params) {
  if (feature.size() != params.fc1_w.cols())
    throw ConfigError("forward_head: feature length " + std::to_string(feature.size()) + ", expected " +
                      std::to_string(params.fc1_w.cols()));
  ActionCache c;
  c.feature = feature;
  head(c, params);
  return c.output;
}

Vec forward_mmd_hook(const ForwardCache& cache, const NetworkParams& params) {
  const ForwardCache* one[1] = {&cache};
  const HookBatch b = forward_mmd_hook(std::span<const ForwardCache* const>(one, 1), params);
  return b.outputs.row(0).transpose();
}

HookBatch forward_mmd_hook(std::span<const ForwardCache* const> caches, const NetworkParams& params) {
  if (params.arch.mmd_width == 0) throw ContractError("forward_mmd_hook: network has no MMD hook");
  HookBatch b;
  const Eigen::Index d = params.arch.hook_input_length();
  b.inputs.resize(static_cast<Eigen::Index>(caches.size()), d);
  for (std::size_t i = 0; i < caches.size(); ++i) {
    if (caches[i]->a1.size() != d) throw ContractError("forward_mmd_hook: cache lacks the conv1 activation");
    b.inputs.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Tensor>(caches[i]->a1.data(), 1, d);
  }
  b.outputs.noalias() = b.inputs * params.mmd_w.transpose();
  b.outputs.rowwise() += params.mmd_b.col(0).transpose();
  b.outputs = relu(b.outputs);
  return b;
}

Tensor backward_mmd_hook(const HookBatch& batch, const Tensor& d_outputs, const NetworkParams& params,
                         NetworkGrad& grad) {
  if (d_outputs.rows() != batch.outputs.rows() || d_outputs.cols() != batch.outputs.cols())
    throw ContractError("backward_mmd_hook: upstream gradient shape mismatch");
  Tensor dz = d_outputs;
  relu_backward_inplace(dz, batch.outputs);
  grad.mmd_w.noalias() += dz.transpose() * batch.inputs;
  grad.mmd_b += dz.colwise().sum().transpose();
  Tensor d_inputs;
  d_inputs.noalias() = dz * params.mmd_w;
  return d_inputs;
}

void backward(const Upstream& up, const ForwardCache& cache, const NetworkParams& p, NetworkGrad& grad) {
  const Architecture& a = p.arch;
  const std::size_t n_actions = cache.actions.size();
  const bool has_out = !up.d_output.empty();
  const bool has_feat = !up.d_feature.empty();
  if (has_out && up.d_output.size() != n_actions) throw ContractError("backward: d_output size mismatch");
  if (has_feat && up.d_feature.size() != n_actions) throw ContractError("backward: d_feature size mismatch");
  if (cache.a1.size() == 0) throw ContractError("backward: missing forward cache");
  if (cache.conv1_only && (has_out || has_feat))
    throw ContractError("backward: conv1-only cache cannot take head or feature gradients");

  const int kk2 = a.conv2_kernel * a.conv2_kernel;
  const int image_cols = a.conv1_channels * kk2;
  Tensor da1 = Tensor::Zero(cache.a1.rows(), cache.a1.cols());

  if (!cache.conv1_only && (has_out || has_feat)) {
    Tensor dp2_sum = Tensor::Zero(cache.p2_image.rows(), cache.p2_image.cols());
    for (std::size_t i = 0; i < n_actions; ++i) {
      const ActionCache& ac = cache.actions[i];
      Vec dfeat = Vec::Zero(a.feature_length());
      if (has_out && up.d_output[i] != 0.0) {
        if (!ac.has_head) throw ContractError("backward: missing head cache for action " + std::to_string(i));
        const double dout = up.d_output[i];
        grad.out_w += dout * ac.h2.transpose();
        grad.out_b(0, 0) += dout;
        Vec dh2 = dout * p.out_w.row(0).transpose();
        relu_backward_inplace(dh2, ac.h2);
        grad.fc2_w.noalias() += dh2 * ac.h1.transpose();
        grad.fc2_b.col(0) += dh2;
        Vec dh1 = p.fc2_w.transpose() * dh2;
        relu_backward_inplace(dh1, ac.h1);
        grad.fc1_w.noalias() += dh1 * ac.feature.transpose();
        grad.fc1_b.col(0) += dh1;
        dfeat.noalias() += p.fc1_w.transpose() * dh1;
      }
      if (has_feat && up.d_feature[i].size() > 0) {
        if (up.d_feature[i].size() != dfeat.size()) throw ContractError("backward: d_feature length mismatch");
        dfeat += up.d_feature[i];
      }
      if (!dfeat.any()) continue;

      const Eigen::Index p3 = a.pool3_size() * a.pool3_size();
      const Tensor dp3 = Eigen::Map<const Tensor>(dfeat.data(), a.conv3_channels, p3);
      Tensor dz3 = Tensor::Zero(ac.a3.rows(), ac.a3.cols());
      maxpool2_backward(dp3, ac.arg3, dz3);
      relu_backward_inplace(dz3, ac.a3);
      grad.conv3_w.noalias() += dz3 * ac.cols3.transpose();
      grad.conv3_b.col(0) += dz3.rowwise().sum();
      Tensor dcols3;
      dcols3.noalias() = p.conv3_w.transpose() * dz3;
      Tensor dp2 = Tensor::Zero(ac.p2.rows(), ac.p2.cols());
      col2im_add(dcols3, a.conv2_channels, a.pool2_size(), a.pool2_size(), a.conv3_kernel, dp2);
      relu_backward_inplace(dp2, ac.p2);

      const Vec channel_sum = dp2.rowwise().sum();
      const double ux = ac.action.dx / a.action_bound;
      const double uy = ac.action.dy / a.action_bound;
      grad.conv2_w.middleCols(image_cols, kk2).colwise() += ux * channel_sum;
      grad.conv2_w.middleCols(image_cols + kk2, kk2).colwise() += uy * channel_sum;
      dp2_sum += dp2;
    }
    Tensor dz2_sum = Tensor::Zero(cache.z2_image.rows(), cache.z2_image.cols());
    maxpool2_backward(dp2_sum, cache.arg2, dz2_sum);

    Tensor cols2;
    im2col(cache.p1, a.pool1_size(), a.pool1_size(), a.conv2_kernel, cols2);
    grad.conv2_w.leftCols(image_cols).noalias() += dz2_sum * cols2.transpose();
    grad.conv2_b.col(0) += dz2_sum.rowwise().sum();
    Tensor dcols2;
    dcols2.noalias() = p.conv2_w.leftCols(image_cols).transpose() * dz2_sum;
    Tensor dp1 = Tensor::Zero(cache.p1.rows(), cache.p1.cols());
    col2im_add(dcols2, a.conv1_channels, a.pool1_size(), a.pool1_size(), a.conv2_kernel, dp1);
    maxpool2_backward(dp1, cache.arg1, da1);
  }

  if (up.d_conv1.size() > 0) {
    if (up.d_conv1.size() != da1.size()) throw ContractError("backward: d_conv1 length mismatch");
    da1 += Eigen::Map<const Tensor>(up.d_conv1.data(), da1.rows(), da1.cols());
  }
  if (!da1.any()) return;
  relu_backward_inplace(da1, cache.a1);
  Tensor cols1;
  im2col(cache.input, a.image_size, a.image_size, a.conv1_kernel, cols1);
  grad.conv1_w.noalias() += da1 * cols1.transpose();
  grad.conv1_b.col(0) += da1.rowwise().sum();
}

std::vector<double> predict(const NetworkParams& params, const DepthImage& image, std::span<const Action> actions) {
  const ForwardCache base = forward_features(image, std::span<const Action>{}, params);
  std::vector<double> out(actions.size());
  ActionCache scratch;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    forward_action(base, actions[i], params, scratch);
    head(scratch, params);
    out[i] = scratch.output;
  }
  return out;
}

std::vector<char> encode_checkpoint(const NetworkParams& params) {
  check_params(params);
  const Architecture& a = params.arch;
  binio::Writer w;
  w.put_bytes(std::string_view(kMagic, 4));
  w.put<std::uint16_t>(kCheckpointVersion);
  const std::int32_t ints[10] = {a.image_size,    a.conv1_kernel,   a.conv1_channels, a.conv2_kernel, a.conv2_channels,
                                 a.conv3_kernel,  a.conv3_channels, a.dense1,         a.dense2,       a.mmd_width};
  for (auto v : ints) w.put<std::int32_t>(v);
  w.put<double>(a.action_bound);
  std::uint32_t layers = 0;
  params.for_each([&](std::string_view, const Tensor&) { ++layers; });
  w.put<std::uint32_t>(layers);
  params.for_each([&](std::string_view name, const Tensor& t) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.cols()));
  });
  params.for_each([&](std::string_view, const Tensor& t) { w.put_doubles(t.data(), static_cast<std::size_t>(t.size())); });
  return w.bytes();
}

NetworkParams decode_checkpoint(const std::vector<char>& bytes, const std::string& what) {
  if (bytes.empty()) throw TruncatedError(what + ": truncated file (empty)");
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(what + ": format mismatch (bad magic bytes)");
  binio::Reader r(bytes.data(), bytes.size(), what);
  r.get_bytes(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) throw VersionError(what + ": unsupported version " + std::to_string(version));
  NetworkParams p;
  Architecture& a = p.arch;
  int* ints[10] = {&a.image_size,   &a.conv1_kernel,   &a.conv1_channels, &a.conv2_kernel, &a.conv2_channels,
                   &a.conv3_kernel, &a.conv3_channels, &a.dense1,         &a.dense2,       &a.mmd_width};
  for (auto* v : ints) *v = r.get<std::int32_t>();
  a.action_bound = r.get<double>();
  a.validate();
  const auto layers = r.get<std::uint32_t>();
  std::vector<std::pair<std::string, std::pair<std::uint32_t, std::uint32_t>>> table;
  for (std::uint32_t i = 0; i < layers; ++i) {
    std::string name = r.get_bytes(r.get<std::uint16_t>());
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    table.push_back({std::move(name), {rows, cols}});
  }
  std::size_t i = 0;
  p.for_each([&](std::string_view name, Tensor& t) {
    if (i >= table.size() || table[i].first != name)
      throw FormatError(what + ": layer table does not match the network layout at " + std::string(name));
    t.resize(table[i].second.first, table[i].second.second);
    ++i;
  });
  if (i != table.size()) throw FormatError(what + ": unexpected extra layers");
  p.for_each([&](std::string_view, Tensor& t) { r.get_doubles(t.data(), static_cast<std::size_t>(t.size())); });
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after parameters");
  check_params(p);
  return p;
}

void save_checkpoint(const NetworkParams& params, const std::string& path) {
  binio::write_file(path, encode_checkpoint(params));
}

NetworkParams load_checkpoint(const std::string& path) { return decode_checkpoint(binio::read_file(path), path); }

}  // namespace simreal::nn
