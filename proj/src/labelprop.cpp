#include "aoseg/labelprop.hpp"

#include <cmath>

namespace aoseg {

int nearest_annotation(int t, const SparseAnnotations& annotations) {
  annotations.validate();
  if (t < 0 || t >= annotations.total_frames)
    throw Error("nearest_annotation: frame " + std::to_string(t) + " outside sequence");
  int best = -1, best_d = annotations.total_frames + 1;
  for (const auto& [idx, labels] : annotations.frames) {
    const int d = cyclic_distance(t, idx, annotations.total_frames);
    if (d < best_d) {  // map iterates ascending, so ties keep the smaller index
      best_d = d;
      best = idx;
    }
  }
  return best;
}

double propagation_weight(int distance, const WeightConfig& cfg) {
  cfg.validate();
  if (distance < 0) distance = -distance;
  if (distance > cfg.radius)
    throw Error("weight: frame distance " + std::to_string(distance) +
                " outside window radius " + std::to_string(cfg.radius));
  const double base = 1.0 - static_cast<double>(distance) / cfg.radius;
  return std::pow(base, cfg.exponent);  // pow(0, 0) == 1, matching r = 0
}

PropagatedLabels propagate(const ImageSequence& sequence, const SparseAnnotations& annotations,
                           const RegConfig& reg) {
  sequence.validate();
  annotations.validate();
  if (annotations.total_frames != sequence.frames ||
      annotations.height != sequence.height || annotations.width != sequence.width)
    throw Error("propagate: annotations do not match the sequence geometry");

  const int total = sequence.frames;
  const int h = sequence.height, w = sequence.width;

  PropagatedLabels out;
  out.labels.frames = total;
  out.labels.height = h;
  out.labels.width = w;
  out.labels.num_classes = annotations.num_classes;
  out.labels.provenance.assign(total, kProvenancePropagated);
  out.labels.data.resize(static_cast<std::size_t>(total) * h * w);
  out.source.resize(total);
  out.distance.resize(total);

  // Assign each frame its source annotation and path direction (+1/-1
  // around the cycle; forward preferred on equidistant paths).
  std::vector<int> dir(total, 0);
  for (int t = 0; t < total; ++t) {
    const int s = nearest_annotation(t, annotations);
    out.source[t] = s;
    out.distance[t] = cyclic_distance(t, s, total);
    const int fwd_steps = ((t - s) % total + total) % total;
    dir[t] = (fwd_steps == out.distance[t]) ? +1 : -1;
  }

  for (const auto& [s, labels] : annotations.frames) {
    std::copy(labels.begin(), labels.end(), out.labels.frame(s));
    out.labels.provenance[s] = kProvenanceHuman;
  }

  auto frame_view = [&](int t) { return frame_from(sequence.frame(t), h, w); };

  // Walk each ray (annotation, direction) outward, composing the chain of
  // successive-pair fields, and warp the annotation once per frame.
  for (const auto& [s, labels] : annotations.frames) {
    for (int step : {+1, -1}) {
      DisplacementField chain;
      for (int k = 1; k < total; ++k) {
        const int t = ((s + step * k) % total + total) % total;
        if (out.source[t] != s || out.distance[t] != k || dir[t] != step) break;
        const int prev = ((s + step * (k - 1)) % total + total) % total;
        // field pulling content of `prev` onto the grid of `t`
        RegResult rr = register_pair(frame_view(t), frame_view(prev), reg);
        if (rr.warning) out.warned_pairs.emplace_back(prev, t);
        chain = (k == 1) ? rr.field : compose(rr.field, chain);
        std::vector<std::uint8_t> warped =
            warp_labels(labels.data(), h, w, annotations.num_classes, chain);
        std::copy(warped.begin(), warped.end(), out.labels.frame(t));
      }
    }
  }
  return out;
}

}  // namespace aoseg
