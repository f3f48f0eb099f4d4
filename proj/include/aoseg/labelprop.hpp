// Propagation of temporally sparse annotations along registered motion
// chains, and the exponentially weighted training loss over a window
// centered at an annotated frame.
//
// Sequences are treated as cyclic (one cardiac cycle), so frame distances
// and propagation paths may wrap around the boundary.

#pragma once

#include "aoseg/ops.hpp"
#include "aoseg/registration.hpp"
#include "aoseg/sequence.hpp"

namespace aoseg {

struct WeightConfig {
  int radius = 4;         // R; window length T = 2R + 1
  double exponent = 0.1;  // r

  int window_length() const { return 2 * radius + 1; }
  void validate() const {
    if (radius < 1) throw Error("weight: radius must be >= 1");
    if (exponent < 0.0) throw Error("weight: exponent must be >= 0");
  }
};

// Index of the nearest annotated frame (cyclic distance, ties toward the
// smaller index, i.e. ED).
int nearest_annotation(int t, const SparseAnnotations& annotations);

// w(d) = (1 - d/R)^r for a frame at distance d from its nearest
// annotation. d must not exceed the window radius.
double propagation_weight(int distance, const WeightConfig& cfg);

inline double weight(int t, int s, const WeightConfig& cfg) {
  return propagation_weight(std::abs(t - s), cfg);
}

struct PropagatedLabels {
  LabelSequence labels;
  std::vector<int> source;    // nearest annotated frame per frame
  std::vector<int> distance;  // cyclic distance to the source
  std::vector<std::pair<int, int>> warned_pairs;  // (from, to) of registrations that struggled
};

// Estimates motion between successive frames, composes the fields along
// the shortest cyclic path from each frame's nearest annotation, and warps
// that annotation once. Annotated frames pass through untouched.
PropagatedLabels propagate(const ImageSequence& sequence, const SparseAnnotations& annotations,
                           const RegConfig& reg);

// One frame of a training window.
template <class S>
struct WindowFrame {
  Tensor<S> logits;         // [1, C, H, W]
  Tensor<S> target_onehot;  // [1, C, H, W]
  int distance = 0;         // |t - s| to the nearest annotation
};

// Eq-style weighted window loss: sum_t w(d_t) * CE_t, normalized by the
// weight sum so the learning rate stays decoupled from T and r. CE_t is
// the per-pixel-mean cross-entropy of frame t.
template <class S>
Tensor<S> weighted_sequence_loss(const std::vector<WindowFrame<S>>& frames,
                                 const WeightConfig& cfg, Graph<S>* g = nullptr) {
  cfg.validate();
  if (frames.empty()) throw Error("weighted_sequence_loss: empty window");
  const Shape& ls = frames[0].logits.shape();
  Tensor<S> unit_weights({ls[0], 1, ls[2], ls[3]}, S(1));

  double wsum = 0.0;
  Tensor<S> acc;
  for (const auto& f : frames) {
    const double w = propagation_weight(f.distance, cfg);
    wsum += w;
    if (w == 0.0) continue;  // zero-weight frames contribute nothing
    Tensor<S> ce = softmax_cross_entropy(f.logits, f.target_onehot, unit_weights, g);
    Tensor<S> term = scale(ce, static_cast<S>(w), g);
    acc = acc.size() == 0 ? term : add(acc, term, g);
  }
  // w(0) = 1 at the central annotated frame, so wsum > 0 always
  return scale(acc, static_cast<S>(1.0 / wsum), g);
}

}  // namespace aoseg
