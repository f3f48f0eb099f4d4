// Small configurable U-Net: two 3x3 conv + ReLU blocks per level, 2x2 max
// pooling on the way down, nearest-neighbor upsampling followed by a 3x3
// conv on the way up, skip connections by channel concatenation. The
// forward pass exposes both the penultimate activation (the feature map
// consumed by the recurrent part) and the 1x1-conv class logits.

#pragma once

#include <array>
#include <cstdint>

#include "aoseg/adam.hpp"
#include "aoseg/ops.hpp"

namespace aoseg {

struct UNetConfig {
  int depth = 3;           // resolution levels; depth-1 poolings
  int base_channels = 16;  // channels at full resolution
  int input_channels = 1;
  int num_classes = 3;       // background, AAo, DAo
  int feature_channels = 16; // channels of the penultimate activation

  void validate() const {
    if (depth < 1) throw Error("unet: depth must be >= 1");
    if (base_channels < 1 || feature_channels < 1 || input_channels < 1)
      throw Error("unet: channel counts must be positive");
    if (num_classes < 2) throw Error("unet: num_classes must be >= 2");
  }

  int level_channels(int level) const { return base_channels << level; }
  int divisor() const { return 1 << (depth - 1); }
};

template <class S>
struct ConvLayer {
  Tensor<S> kernel;
  Tensor<S> bias;
};

template <class S>
struct UNetParams {
  UNetConfig config;
  std::vector<std::array<ConvLayer<S>, 2>> enc;  // per level
  std::vector<ConvLayer<S>> up;                  // per decoder level
  std::vector<std::array<ConvLayer<S>, 2>> dec;  // per decoder level
  ConvLayer<S> head;                             // 1x1 classification conv

  std::vector<NamedTensor<S>> named_params() const {
    std::vector<NamedTensor<S>> out;
    auto push = [&out](const std::string& n, const Tensor<S>& t) {
      out.push_back({n, t});
    };
    for (std::size_t l = 0; l < enc.size(); ++l)
      for (int j = 0; j < 2; ++j) {
        const std::string p = "unet.enc" + std::to_string(l) + ".conv" + std::to_string(j);
        push(p + ".kernel", enc[l][j].kernel);
        push(p + ".bias", enc[l][j].bias);
      }
    for (std::size_t l = 0; l < up.size(); ++l) {
      const std::string p = "unet.up" + std::to_string(l);
      push(p + ".kernel", up[l].kernel);
      push(p + ".bias", up[l].bias);
    }
    for (std::size_t l = 0; l < dec.size(); ++l)
      for (int j = 0; j < 2; ++j) {
        const std::string p = "unet.dec" + std::to_string(l) + ".conv" + std::to_string(j);
        push(p + ".kernel", dec[l][j].kernel);
        push(p + ".bias", dec[l][j].bias);
      }
    push("unet.head.kernel", head.kernel);
    push("unet.head.bias", head.bias);
    return out;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& nt : named_params()) n += nt.tensor.size();
    return n;
  }

  void set_tracked(bool on) {
    for (auto& nt : named_params()) {
      Tensor<S> t = nt.tensor;
      t.set_tracked(on);
    }
  }
};

namespace detail {

// Zero-mean uniform init with bound sqrt(6 / (fan_in + fan_out)).
template <class S>
Tensor<S> glorot_kernel(int cout, int cin, int k, Rng& rng) {
  Tensor<S> t({cout, cin, k, k});
  const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * k * k +
                                        static_cast<double>(cout) * k * k));
  for (std::int64_t i = 0; i < t.size(); ++i)
    t.values()[i] = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

template <class S>
ConvLayer<S> conv_layer(int cout, int cin, int k, Rng& rng) {
  return {glorot_kernel<S>(cout, cin, k, rng), Tensor<S>({cout})};
}

}  // namespace detail

template <class S>
UNetParams<S> build_unet(const UNetConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  UNetParams<S> p;
  p.config = config;
  for (int l = 0; l < config.depth; ++l) {
    const int cin = l == 0 ? config.input_channels : config.level_channels(l - 1);
    const int ch = config.level_channels(l);
    p.enc.push_back({detail::conv_layer<S>(ch, cin, 3, rng),
                     detail::conv_layer<S>(ch, ch, 3, rng)});
  }
  p.up.resize(config.depth > 0 ? config.depth - 1 : 0);
  p.dec.resize(p.up.size());
  for (int l = config.depth - 2; l >= 0; --l) {
    const int ch = config.level_channels(l);
    const int ch_below = config.level_channels(l + 1);
    const int out_ch = l == 0 ? config.feature_channels : ch;
    p.up[l] = detail::conv_layer<S>(ch, ch_below, 3, rng);
    p.dec[l] = {detail::conv_layer<S>(ch, 2 * ch, 3, rng),
                detail::conv_layer<S>(out_ch, ch, 3, rng)};
  }
  const int head_in = config.depth == 1 ? config.level_channels(0) : config.feature_channels;
  p.head = detail::conv_layer<S>(config.num_classes, head_in, 1, rng);
  return p;
}

template <class S>
struct UNetOutput {
  Tensor<S> features;  // penultimate activation [N, F, H, W]
  Tensor<S> logits;    // class scores [N, C, H, W]
};

template <class S>
UNetOutput<S> unet_forward(const UNetParams<S>& p, const Tensor<S>& image,
                           Graph<S>* g = nullptr) {
  detail::require_rank(image.shape(), 4, "unet_forward");
  const UNetConfig& cfg = p.config;
  const int h = image.dim(2), w = image.dim(3);
  if (h % cfg.divisor() != 0 || w % cfg.divisor() != 0)
    throw Error("unet_forward: spatial extents of " + shape_str(image.shape()) +
                " must be divisible by " + std::to_string(cfg.divisor()));
  if (image.dim(1) != cfg.input_channels)
    throw Error("unet_forward: expected " + std::to_string(cfg.input_channels) +
                " input channels, got " + shape_str(image.shape()));

  std::vector<Tensor<S>> skips;
  Tensor<S> cur = image;
  for (int l = 0; l < cfg.depth; ++l) {
    if (l > 0) cur = maxpool2(cur, g);
    cur = relu(conv2d(cur, p.enc[l][0].kernel, p.enc[l][0].bias, 1, g), g);
    cur = relu(conv2d(cur, p.enc[l][1].kernel, p.enc[l][1].bias, 1, g), g);
    if (l < cfg.depth - 1) skips.push_back(cur);
  }
  for (int l = cfg.depth - 2; l >= 0; --l) {
    cur = upsample2(cur, g);
    cur = relu(conv2d(cur, p.up[l].kernel, p.up[l].bias, 1, g), g);
    cur = concat_channels(skips[l], cur, g);
    cur = relu(conv2d(cur, p.dec[l][0].kernel, p.dec[l][0].bias, 1, g), g);
    cur = relu(conv2d(cur, p.dec[l][1].kernel, p.dec[l][1].bias, 1, g), g);
  }
  Tensor<S> logits = conv2d(cur, p.head.kernel, p.head.bias, 0, g);
  return {cur, logits};
}

// Radius (in input pixels) of the dependency cone of one output pixel;
// used to exclude border effects in translation-equivariance checks.
inline int receptive_field_radius(const UNetConfig& cfg) {
  int r = 0;
  for (int l = 0; l < cfg.depth; ++l) r += 2 * (1 << l);
  for (int l = 0; l < cfg.depth - 1; ++l) r += 3 * (1 << l);
  return r;
}

}  // namespace aoseg
