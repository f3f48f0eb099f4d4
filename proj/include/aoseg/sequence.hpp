// Sequence containers: grayscale image sequences with pixel spacing,
// per-pixel class label sequences with annotation provenance, and the
// sparse manual annotations available at a few frames.

#pragma once

#include <cstdint>
#include <map>

#include "aoseg/common.hpp"

namespace aoseg {

// Per-frame annotation provenance.
inline constexpr std::uint8_t kProvenancePropagated = 0;
inline constexpr std::uint8_t kProvenanceHuman = 1;

struct ImageSequence {
  int frames = 0;
  int height = 0;
  int width = 0;
  float spacing_y = 1.0f;  // mm per pixel
  float spacing_x = 1.0f;
  std::vector<float> data;  // frames * height * width, row-major per frame

  std::int64_t frame_size() const { return static_cast<std::int64_t>(height) * width; }
  float* frame(int t) { return data.data() + t * frame_size(); }
  const float* frame(int t) const { return data.data() + t * frame_size(); }

  void validate() const {
    if (frames <= 0 || height <= 0 || width <= 0)
      throw Error("image sequence: nonpositive dimensions");
    if (static_cast<std::int64_t>(data.size()) != frames * frame_size())
      throw Error("image sequence: buffer size does not match dimensions");
  }
};

struct LabelSequence {
  int frames = 0;
  int height = 0;
  int width = 0;
  std::uint8_t num_classes = 3;
  std::vector<std::uint8_t> provenance;  // one flag per frame
  std::vector<std::uint8_t> data;        // class indices

  std::int64_t frame_size() const { return static_cast<std::int64_t>(height) * width; }
  std::uint8_t* frame(int t) { return data.data() + t * frame_size(); }
  const std::uint8_t* frame(int t) const { return data.data() + t * frame_size(); }

  void validate() const {
    if (frames <= 0 || height <= 0 || width <= 0)
      throw Error("label sequence: nonpositive dimensions");
    if (static_cast<std::int64_t>(data.size()) != frames * frame_size())
      throw Error("label sequence: buffer size does not match dimensions");
    if (static_cast<int>(provenance.size()) != frames)
      throw Error("label sequence: provenance length does not match frame count");
  }
};

// Manual annotations at a few frame indices of a cyclic sequence.
struct SparseAnnotations {
  int total_frames = 0;
  int height = 0;
  int width = 0;
  std::uint8_t num_classes = 3;
  std::map<int, std::vector<std::uint8_t>> frames;  // index -> label map

  void validate() const {
    if (frames.empty()) throw Error("annotations: at least one annotated frame required");
    for (const auto& [idx, labels] : frames) {
      if (idx < 0 || idx >= total_frames)
        throw Error("annotations: frame index " + std::to_string(idx) + " outside sequence");
      if (static_cast<std::int64_t>(labels.size()) !=
          static_cast<std::int64_t>(height) * width)
        throw Error("annotations: label size mismatch at frame " + std::to_string(idx));
    }
  }
};

// Shortest distance between frames of a cyclic sequence.
inline int cyclic_distance(int a, int b, int total_frames) {
  int d = a - b;
  if (d < 0) d = -d;
  d %= total_frames;
  return std::min(d, total_frames - d);
}

}  // namespace aoseg
