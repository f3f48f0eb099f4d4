// Experiment orchestration behind the CLI: dataset generation, label
// propagation, two-stage training, evaluation with baseline comparison
// (tables, paired t-tests, SVG time-area plots), and parameter sweeps.

#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>

#include "aoseg/io.hpp"
#include "aoseg/labelprop.hpp"
#include "aoseg/metrics.hpp"
#include "aoseg/model.hpp"
#include "aoseg/phantom.hpp"
#include "aoseg/train.hpp"

namespace aoseg {

struct DataConfig {
  int num_sequences = 20;
  double train_fraction = 0.8;
};

struct TrainPlanConfig {
  int stage1_iterations = 500;
  int stage1_batch = 4;
  int stage2_iterations = 500;
  int stage2_batch = 1;
  LrSchedule schedule;
  bool augment = true;
  AugmentRanges ranges;
};

struct SweepConfig {
  std::vector<int> t_values = {5, 9, 13, 17, 21};
  std::vector<double> r_values = {0.0, 0.1, 1.0, 10.0, 100.0};
  int iterations = 200;
};

struct EvalConfig {
  bool cyclic_curvature = false;
  int plot_subjects = 4;
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  std::filesystem::path out_dir = "runs/exp";
  DataConfig data;
  PhantomConfig phantom;
  UNetConfig unet;
  int clstm_hidden_channels = 16;
  int clstm_kernel_size = 3;
  WeightConfig weight;
  RegConfig registration;
  TrainPlanConfig train;
  SweepConfig sweep;
  EvalConfig evaluate;

  ModelConfig model_config() const {
    ModelConfig m;
    m.unet = unet;
    m.hidden_channels = clstm_hidden_channels;
    m.clstm_kernel = clstm_kernel_size;
    return m;
  }
  std::filesystem::path data_dir() const { return out_dir / "data"; }
  std::filesystem::path prop_dir() const { return out_dir / "prop"; }
  std::filesystem::path ckpt_dir() const { return out_dir / "checkpoints"; }
  std::filesystem::path log_dir() const { return out_dir / "logs"; }
  std::filesystem::path eval_dir() const { return out_dir / "eval"; }
  std::filesystem::path sweep_dir() const { return out_dir / "sweep"; }
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config_file(const std::filesystem::path& path);
std::string config_hash(const ExperimentConfig& cfg);

// Commands. Each writes its outputs under out_dir and a deterministic
// run_<command>.json manifest recording the config hash and seed.
void run_generate(const ExperimentConfig& cfg);
void run_propagate(const ExperimentConfig& cfg);
void run_train(const ExperimentConfig& cfg, const std::string& stage);

struct EvaluateOptions {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> baseline;
};
void run_evaluate(const ExperimentConfig& cfg, const EvaluateOptions& opts);

void run_sweep(const ExperimentConfig& cfg);

// Shared helpers (also used by tests and the acceptance suite).
std::vector<AnnotatedImage> load_annotated_images(const ExperimentConfig& cfg,
                                                  const DatasetManifest& manifest);
std::vector<TrainSequence> load_train_sequences(const ExperimentConfig& cfg,
                                                const DatasetManifest& manifest);
SparseAnnotations annotations_from_truth(const LabelSequence& truth, int ed, int es);

LabelSequence predict_with_checkpoint(const ExperimentConfig& cfg, const Checkpoint& ckpt,
                                      const ImageSequence& seq);

struct SubjectEval {
  int id = 0;
  MetricsReport report;
};

std::vector<SubjectEval> evaluate_split(const ExperimentConfig& cfg, const Checkpoint& ckpt,
                                        const DatasetManifest& manifest, bool train_split);

void write_area_svg(const std::filesystem::path& path, const std::string& title,
                    const std::vector<double>& proposed,
                    const std::vector<double>* baseline,
                    const std::vector<std::pair<int, double>>& reference_dots);

}  // namespace aoseg
