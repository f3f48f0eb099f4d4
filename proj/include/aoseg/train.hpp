// Two-stage training: (1) the U-Net alone on the human-annotated static
// frames, (2) the full model end-to-end on propagated label windows with
// the exponentially weighted loss. Both stages use Adam with a single
// step decay (lr / 10 after the configured fraction of iterations).

#pragma once

#include "aoseg/labelprop.hpp"
#include "aoseg/model.hpp"
#include "aoseg/phantom.hpp"

namespace aoseg {

struct LrSchedule {
  double base_lr = 1e-3;
  double decay_fraction = 0.25;  // mirrors 5k of 20k iterations
  double decay_factor = 0.1;

  double lr_at(int iteration, int total_iterations) const {
    const int decay_at = static_cast<int>(decay_fraction * total_iterations);
    return iteration >= decay_at ? base_lr * decay_factor : base_lr;
  }
};

struct TrainLogRow {
  int iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct AnnotatedImage {
  int height = 0;
  int width = 0;
  std::vector<float> image;
  std::vector<std::uint8_t> label;
};

struct StageConfig {
  int iterations = 500;
  int batch = 4;
  LrSchedule schedule;
  bool augment = true;
  AugmentRanges ranges;
  std::uint64_t seed = 0;
};

// Stage 1: static segmentation on annotated frames only.
std::vector<TrainLogRow> train_unet_static(UNetParams<float>& params,
                                           const std::vector<AnnotatedImage>& data,
                                           const StageConfig& cfg);

struct TrainSequence {
  ImageSequence images;
  LabelSequence labels;        // propagated labels, human at annotated frames
  std::vector<int> distance;   // per frame, cyclic distance to nearest annotation
  std::vector<int> annotated;  // training window centers
};

// Stage 2: the pre-trained U-Net connected with the recurrent part and
// trained together end-to-end on windows of length 2R+1 centered at
// annotated frames (cyclic indexing).
std::vector<TrainLogRow> train_full(SegModel<float>& model,
                                    const std::vector<TrainSequence>& data,
                                    const StageConfig& cfg, const WeightConfig& weights);

}  // namespace aoseg
