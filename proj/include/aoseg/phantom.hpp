// Synthetic pulsating-vessel sequences: two bright quasi-circular
// structures (a larger and a smaller one) with sinusoidal radius
// modulation over one cycle, smooth per-sample boundary perturbation, an
// optional distractor vessel of similar intensity near the larger one,
// slight whole-frame drift, and additive Gaussian noise. Dense labels are
// rasterized from the same analytic shapes, so every frame has
// oracle-grade ground truth; sparse annotations are taken at ED and ES.

#pragma once

#include <array>
#include <filesystem>
#include <json.hpp>

#include "aoseg/sequence.hpp"

namespace aoseg {

struct PhantomConfig {
  int size = 64;
  int frames = 20;
  double spacing_mm = 1.6;
  double aao_radius = 9.0;
  double aao_amplitude = 1.5;
  double dao_radius = 5.5;
  double dao_amplitude = 0.8;
  bool distractor = true;
  double noise_sigma = 0.02;
  double background = 0.15;
  double vessel_intensity = 0.85;
  double distractor_intensity = 0.82;
  double drift_amplitude = 0.7;
  std::uint64_t seed = 1;

  void validate() const {
    if (size < 16) throw Error("phantom: image size must be >= 16");
    if (frames < 3) throw Error("phantom: need at least 3 frames");
    if (spacing_mm <= 0) throw Error("phantom: spacing must be positive");
    if (noise_sigma < 0) throw Error("phantom: noise sigma must be >= 0");
  }
};

void to_json(nlohmann::json& j, const PhantomConfig& c);
void from_json(const nlohmann::json& j, PhantomConfig& c);

// Analytic state of one structure at one frame; the label oracle is
// |p - c| <= radius * (1 + sum_k amp_k * cos(k' theta + phase_k)).
struct ShapeState {
  double cy = 0, cx = 0;
  double radius = 0;
  std::array<double, 2> perturb_amp{};    // harmonics k = 2, 3
  std::array<double, 2> perturb_phase{};
};

struct PhantomSample {
  ImageSequence images;
  LabelSequence truth;  // dense ground truth, every frame
  SparseAnnotations annotations;
  int ed = 0;
  int es = 0;
  std::vector<std::array<ShapeState, 3>> shapes;  // per frame: AAo, DAo, distractor
};

double boundary_radius(const ShapeState& s, double theta);

PhantomSample generate(const PhantomConfig& config);

struct SampleEntry {
  int id = 0;
  std::string image_file;
  std::string truth_file;
  bool train = true;
  int ed = 0;
  int es = 0;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  PhantomConfig config;
  std::vector<SampleEntry> samples;

  std::vector<const SampleEntry*> split(bool train) const {
    std::vector<const SampleEntry*> out;
    for (const auto& s : samples)
      if (s.train == train) out.push_back(&s);
    return out;
  }
};

// Generates n samples with per-sample seeds derived from the master seed,
// writes sequence/label files plus dataset_manifest.json under dir.
DatasetManifest generate_dataset(int n, double train_fraction, const PhantomConfig& config,
                                 std::uint64_t master_seed,
                                 const std::filesystem::path& dir);

DatasetManifest load_manifest(const std::filesystem::path& dir);

// Sequence-consistent augmentation: the same similarity transform
// (translation, rotation about the image center, isotropic scale) applied
// to every frame of a window; images resample bilinearly, labels
// nearest-neighbor.
struct AugmentParams {
  double dy = 0, dx = 0;
  double rot_deg = 0;
  double scale = 1.0;
};

struct AugmentRanges {
  double translate_px = 4.0;
  double rotate_deg = 15.0;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
};

AugmentParams sample_augment(Rng& rng, const AugmentRanges& ranges);
AugmentParams inverse_of(const AugmentParams& p);

void augment_frames(std::vector<std::vector<float>>& images,
                    std::vector<std::vector<std::uint8_t>>& labels, int h, int w,
                    const AugmentParams& p);

}  // namespace aoseg
