// Full sequence-segmentation model: shared U-Net feature extractor, one
// C-LSTM per temporal direction, and a 1x1 fusion head with per-pixel
// softmax. Also the tensor <-> sequence glue (one-hot encoding, argmax).

#pragma once

#include "aoseg/clstm.hpp"
#include "aoseg/sequence.hpp"
#include "aoseg/unet.hpp"

namespace aoseg {

template <class S>
struct SegModel {
  UNetParams<S> unet;
  CLSTMParams<S> fwd;
  CLSTMParams<S> bwd;
  HeadParams<S> head;

  std::vector<NamedTensor<S>> named_params() const {
    std::vector<NamedTensor<S>> out = unet.named_params();
    for (auto scope : {std::pair{&fwd, "clstm_fwd"}, std::pair{&bwd, "clstm_bwd"}})
      for (auto& nt : scope.first->named_params(scope.second)) out.push_back(nt);
    for (auto& nt : head.named_params("head")) out.push_back(nt);
    return out;
  }

  std::vector<Tensor<S>> param_tensors() const {
    std::vector<Tensor<S>> out;
    for (auto& nt : named_params()) out.push_back(nt.tensor);
    return out;
  }

  void set_tracked(bool on) {
    for (auto& nt : named_params()) {
      Tensor<S> t = nt.tensor;
      t.set_tracked(on);
    }
  }
};

struct ModelConfig {
  UNetConfig unet;
  int hidden_channels = 16;
  int clstm_kernel = 3;
};

template <class S>
SegModel<S> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  SegModel<S> m;
  m.unet = build_unet<S>(cfg.unet, child_seed(seed, 0));
  m.fwd = build_clstm<S>(cfg.unet.feature_channels, cfg.hidden_channels, cfg.clstm_kernel,
                         child_seed(seed, 1));
  m.bwd = build_clstm<S>(cfg.unet.feature_channels, cfg.hidden_channels, cfg.clstm_kernel,
                         child_seed(seed, 2));
  m.head = build_head<S>(2 * cfg.hidden_channels, cfg.unet.num_classes, child_seed(seed, 3));
  return m;
}

// Wraps one grayscale frame as a [1,1,H,W] tensor.
template <class S>
Tensor<S> frame_tensor(const float* pixels, int h, int w) {
  Tensor<S> t({1, 1, h, w});
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i)
    t.values()[i] = static_cast<S>(pixels[i]);
  return t;
}

// One-hot class target [1,C,H,W] from a label frame.
template <class S>
Tensor<S> onehot_tensor(const std::uint8_t* labels, int h, int w, int num_classes) {
  Tensor<S> t({1, num_classes, h, w});
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
    const std::uint8_t c = labels[i];
    if (c >= num_classes)
      throw Error("onehot: class index " + std::to_string(c) + " out of range");
    t.values()[c * h * w + i] = S(1);
  }
  return t;
}

// Per-pixel argmax over channels; ties resolve to the lowest class index.
template <class S>
std::vector<std::uint8_t> argmax_frame(const Tensor<S>& scores) {
  const int c = scores.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(scores.dim(2)) * scores.dim(3);
  std::vector<std::uint8_t> out(plane);
  for (std::int64_t p = 0; p < plane; ++p) {
    int best = 0;
    S bv = scores.values()[p];
    for (int ch = 1; ch < c; ++ch) {
      const S v = scores.values()[ch * plane + p];
      if (v > bv) {
        bv = v;
        best = ch;
      }
    }
    out[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

// Per-frame class logits for a window of frames (shared U-Net, then the
// bidirectional C-LSTM, then the fusion head).
template <class S>
std::vector<Tensor<S>> model_logits_sequence(const SegModel<S>& m,
                                             const std::vector<Tensor<S>>& images,
                                             Graph<S>* g = nullptr) {
  if (images.empty()) throw Error("model: empty image window");
  std::vector<Tensor<S>> features(images.size());
  for (std::size_t t = 0; t < images.size(); ++t)
    features[t] = unet_forward(m.unet, images[t], g).features;
  std::vector<Tensor<S>> fused = bidirectional_unroll(features, m.fwd, m.bwd, g);
  std::vector<Tensor<S>> logits(fused.size());
  for (std::size_t t = 0; t < fused.size(); ++t) logits[t] = head_logits(fused[t], m.head, g);
  return logits;
}

// Per-frame class probability maps over a full sequence (test-time
// unrolling runs over the entire sequence, whatever the training window).
template <class S>
std::vector<Tensor<S>> predict_sequence(const SegModel<S>& m, const ImageSequence& seq) {
  std::vector<Tensor<S>> images(seq.frames);
  for (int t = 0; t < seq.frames; ++t)
    images[t] = frame_tensor<S>(seq.frame(t), seq.height, seq.width);
  std::vector<Tensor<S>> logits = model_logits_sequence(m, images);
  for (auto& l : logits) l = softmax_channels(l);
  return logits;
}

// Hard label maps for a full sequence; provenance marks all frames as
// model output (propagated).
template <class S>
LabelSequence predict_labels(const SegModel<S>& m, const ImageSequence& seq) {
  std::vector<Tensor<S>> probs = predict_sequence(m, seq);
  LabelSequence out;
  out.frames = seq.frames;
  out.height = seq.height;
  out.width = seq.width;
  out.num_classes = static_cast<std::uint8_t>(m.unet.config.num_classes);
  out.provenance.assign(seq.frames, kProvenancePropagated);
  out.data.resize(seq.frames * seq.frame_size());
  for (int t = 0; t < seq.frames; ++t) {
    std::vector<std::uint8_t> lab = argmax_frame(probs[t]);
    std::copy(lab.begin(), lab.end(), out.frame(t));
  }
  return out;
}

// Per-frame U-Net prediction (the spatial-only baseline).
template <class S>
std::vector<std::uint8_t> unet_predict_frame(const UNetParams<S>& p, const float* pixels,
                                             int h, int w) {
  Tensor<S> img = frame_tensor<S>(pixels, h, w);
  return argmax_frame(unet_forward(p, img).logits);
}

template <class S>
LabelSequence unet_predict_labels(const UNetParams<S>& p, const ImageSequence& seq) {
  LabelSequence out;
  out.frames = seq.frames;
  out.height = seq.height;
  out.width = seq.width;
  out.num_classes = static_cast<std::uint8_t>(p.config.num_classes);
  out.provenance.assign(seq.frames, kProvenancePropagated);
  out.data.resize(seq.frames * seq.frame_size());
  for (int t = 0; t < seq.frames; ++t) {
    std::vector<std::uint8_t> lab =
        unet_predict_frame(p, seq.frame(t), seq.height, seq.width);
    std::copy(lab.begin(), lab.end(), out.frame(t));
  }
  return out;
}

}  // namespace aoseg
