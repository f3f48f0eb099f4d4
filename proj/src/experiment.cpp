#include "aoseg/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "aoseg/io.hpp"
#include "aoseg/stats.hpp"

namespace aoseg {

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::ofstream open_text(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                const char* scope) {
  for (auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok)
      throw UsageError(std::string("config: unknown key '") + key + "' in " + scope);
  }
}

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void write_run_manifest(const ExperimentConfig& cfg, const std::string& command) {
  nlohmann::json j;
  j["command"] = command;
  j["seed"] = cfg.seed;
  j["config_hash"] = config_hash(cfg);
  j["tool_version"] = kToolVersion;
  std::ofstream f = open_text(cfg.out_dir / ("run_" + command + ".json"));
  f << j.dump(2) << "\n";
}

std::filesystem::path prop_file(const ExperimentConfig& cfg, int id) {
  char name[32];
  std::snprintf(name, sizeof name, "prop_%03d.aolb", id);
  return cfg.prop_dir() / name;
}

}  // namespace

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir.string();
  j["data"] = {{"num_sequences", cfg.data.num_sequences},
               {"train_fraction", cfg.data.train_fraction}};
  j["phantom"] = cfg.phantom;
  j["unet"] = {{"depth", cfg.unet.depth},
               {"base_channels", cfg.unet.base_channels},
               {"input_channels", cfg.unet.input_channels},
               {"num_classes", cfg.unet.num_classes},
               {"feature_channels", cfg.unet.feature_channels}};
  j["clstm"] = {{"hidden_channels", cfg.clstm_hidden_channels},
                {"kernel_size", cfg.clstm_kernel_size}};
  j["weight"] = {{"radius", cfg.weight.radius}, {"exponent", cfg.weight.exponent}};
  j["registration"] = {{"control_spacing", cfg.registration.control_spacing},
                       {"pyramid_levels", cfg.registration.pyramid_levels},
                       {"iterations_per_level", cfg.registration.iterations_per_level},
                       {"step_size", cfg.registration.step_size},
                       {"bending_weight", cfg.registration.bending_weight},
                       {"max_displacement_factor", cfg.registration.max_displacement_factor}};
  j["train"] = {{"stage1_iterations", cfg.train.stage1_iterations},
                {"stage1_batch", cfg.train.stage1_batch},
                {"stage2_iterations", cfg.train.stage2_iterations},
                {"stage2_batch", cfg.train.stage2_batch},
                {"base_lr", cfg.train.schedule.base_lr},
                {"decay_fraction", cfg.train.schedule.decay_fraction},
                {"decay_factor", cfg.train.schedule.decay_factor},
                {"augment", cfg.train.augment},
                {"augment_translate_px", cfg.train.ranges.translate_px},
                {"augment_rotate_deg", cfg.train.ranges.rotate_deg},
                {"augment_scale_lo", cfg.train.ranges.scale_lo},
                {"augment_scale_hi", cfg.train.ranges.scale_hi}};
  j["sweep"] = {{"T_values", cfg.sweep.t_values},
                {"r_values", cfg.sweep.r_values},
                {"iterations", cfg.sweep.iterations}};
  j["evaluate"] = {{"cyclic_curvature", cfg.evaluate.cyclic_curvature},
                   {"plot_subjects", cfg.evaluate.plot_subjects}};
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  check_keys(j, {"seed", "out_dir", "data", "phantom", "unet", "clstm", "weight",
                 "registration", "train", "sweep", "evaluate"},
             "top level");
  maybe(j, "seed", cfg.seed);
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"num_sequences", "train_fraction"}, "data");
    maybe(d, "num_sequences", cfg.data.num_sequences);
    maybe(d, "train_fraction", cfg.data.train_fraction);
  }
  if (j.contains("phantom")) cfg.phantom = j.at("phantom").get<PhantomConfig>();
  if (j.contains("unet")) {
    const auto& u = j.at("unet");
    check_keys(u, {"depth", "base_channels", "input_channels", "num_classes",
                   "feature_channels"},
               "unet");
    maybe(u, "depth", cfg.unet.depth);
    maybe(u, "base_channels", cfg.unet.base_channels);
    maybe(u, "input_channels", cfg.unet.input_channels);
    maybe(u, "num_classes", cfg.unet.num_classes);
    maybe(u, "feature_channels", cfg.unet.feature_channels);
  }
  if (j.contains("clstm")) {
    const auto& c = j.at("clstm");
    check_keys(c, {"hidden_channels", "kernel_size"}, "clstm");
    maybe(c, "hidden_channels", cfg.clstm_hidden_channels);
    maybe(c, "kernel_size", cfg.clstm_kernel_size);
  }
  if (j.contains("weight")) {
    const auto& w = j.at("weight");
    check_keys(w, {"radius", "exponent"}, "weight");
    maybe(w, "radius", cfg.weight.radius);
    maybe(w, "exponent", cfg.weight.exponent);
  }
  if (j.contains("registration")) {
    const auto& r = j.at("registration");
    check_keys(r, {"control_spacing", "pyramid_levels", "iterations_per_level",
                   "step_size", "bending_weight", "max_displacement_factor"},
               "registration");
    maybe(r, "control_spacing", cfg.registration.control_spacing);
    maybe(r, "pyramid_levels", cfg.registration.pyramid_levels);
    maybe(r, "iterations_per_level", cfg.registration.iterations_per_level);
    maybe(r, "step_size", cfg.registration.step_size);
    maybe(r, "bending_weight", cfg.registration.bending_weight);
    maybe(r, "max_displacement_factor", cfg.registration.max_displacement_factor);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t,
               {"stage1_iterations", "stage1_batch", "stage2_iterations", "stage2_batch",
                "base_lr", "decay_fraction", "decay_factor", "augment",
                "augment_translate_px", "augment_rotate_deg", "augment_scale_lo",
                "augment_scale_hi"},
               "train");
    maybe(t, "stage1_iterations", cfg.train.stage1_iterations);
    maybe(t, "stage1_batch", cfg.train.stage1_batch);
    maybe(t, "stage2_iterations", cfg.train.stage2_iterations);
    maybe(t, "stage2_batch", cfg.train.stage2_batch);
    maybe(t, "base_lr", cfg.train.schedule.base_lr);
    maybe(t, "decay_fraction", cfg.train.schedule.decay_fraction);
    maybe(t, "decay_factor", cfg.train.schedule.decay_factor);
    maybe(t, "augment", cfg.train.augment);
    maybe(t, "augment_translate_px", cfg.train.ranges.translate_px);
    maybe(t, "augment_rotate_deg", cfg.train.ranges.rotate_deg);
    maybe(t, "augment_scale_lo", cfg.train.ranges.scale_lo);
    maybe(t, "augment_scale_hi", cfg.train.ranges.scale_hi);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, {"T_values", "r_values", "iterations"}, "sweep");
    maybe(s, "T_values", cfg.sweep.t_values);
    maybe(s, "r_values", cfg.sweep.r_values);
    maybe(s, "iterations", cfg.sweep.iterations);
  }
  if (j.contains("evaluate")) {
    const auto& e = j.at("evaluate");
    check_keys(e, {"cyclic_curvature", "plot_subjects"}, "evaluate");
    maybe(e, "cyclic_curvature", cfg.evaluate.cyclic_curvature);
    maybe(e, "plot_subjects", cfg.evaluate.plot_subjects);
  }
  cfg.unet.validate();
  cfg.weight.validate();
  cfg.registration.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string dump = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void run_generate(const ExperimentConfig& cfg) {
  if (cfg.data.num_sequences < 2)
    throw UsageError("generate: data.num_sequences must be >= 2");
  generate_dataset(cfg.data.num_sequences, cfg.data.train_fraction, cfg.phantom, cfg.seed,
                   cfg.data_dir());
  write_run_manifest(cfg, "generate");
}

SparseAnnotations annotations_from_truth(const LabelSequence& truth, int ed, int es) {
  SparseAnnotations ann;
  ann.total_frames = truth.frames;
  ann.height = truth.height;
  ann.width = truth.width;
  ann.num_classes = truth.num_classes;
  for (int s : {ed, es})
    ann.frames[s] =
        std::vector<std::uint8_t>(truth.frame(s), truth.frame(s) + truth.frame_size());
  return ann;
}

void run_propagate(const ExperimentConfig& cfg) {
  const DatasetManifest manifest = load_manifest(cfg.data_dir());
  std::filesystem::create_directories(cfg.prop_dir());

  // per-distance Dice of the propagated labels against the dense truth
  std::map<int, std::array<double, 2>> quality_acc;
  std::map<int, int> quality_n;
  std::vector<std::tuple<int, int, int>> warnings;  // (sample, from, to)

  for (const SampleEntry* s : manifest.split(true)) {
    ImageSequence seq = load_sequence(cfg.data_dir() / s->image_file);
    LabelSequence truth = load_labels(cfg.data_dir() / s->truth_file);
    SparseAnnotations ann = annotations_from_truth(truth, s->ed, s->es);
    PropagatedLabels prop = propagate(seq, ann, cfg.registration);
    save_labels(prop.labels, prop_file(cfg, s->id));
    for (auto [from, to] : prop.warned_pairs) warnings.emplace_back(s->id, from, to);

    for (int t = 0; t < seq.frames; ++t) {
      for (int structure : {kClassAAo, kClassDAo}) {
        const double d = dice(mask_of_class(prop.labels, t, structure),
                              mask_of_class(truth, t, structure));
        quality_acc[prop.distance[t]][structure - 1] += d;
      }
      quality_n[prop.distance[t]] += 1;
    }
  }

  std::ofstream q = open_text(cfg.prop_dir() / "prop_quality.csv");
  q << "distance,dice_aao,dice_dao,n_frames\n";
  for (const auto& [d, acc] : quality_acc) {
    const int n = quality_n[d];
    q << d << "," << fmt6(acc[0] / n) << "," << fmt6(acc[1] / n) << "," << n << "\n";
  }
  std::ofstream wf = open_text(cfg.prop_dir() / "warnings.csv");
  wf << "sample,from_frame,to_frame\n";
  for (auto [id, from, to] : warnings) wf << id << "," << from << "," << to << "\n";

  write_run_manifest(cfg, "propagate");
}

std::vector<AnnotatedImage> load_annotated_images(const ExperimentConfig& cfg,
                                                  const DatasetManifest& manifest) {
  std::vector<AnnotatedImage> out;
  for (const SampleEntry* s : manifest.split(true)) {
    ImageSequence seq = load_sequence(cfg.data_dir() / s->image_file);
    LabelSequence truth = load_labels(cfg.data_dir() / s->truth_file);
    for (int frame : {s->ed, s->es}) {
      AnnotatedImage a;
      a.height = seq.height;
      a.width = seq.width;
      a.image.assign(seq.frame(frame), seq.frame(frame) + seq.frame_size());
      a.label.assign(truth.frame(frame), truth.frame(frame) + truth.frame_size());
      out.push_back(std::move(a));
    }
  }
  return out;
}

std::vector<TrainSequence> load_train_sequences(const ExperimentConfig& cfg,
                                                const DatasetManifest& manifest) {
  std::vector<TrainSequence> out;
  for (const SampleEntry* s : manifest.split(true)) {
    const std::filesystem::path pf = prop_file(cfg, s->id);
    if (!std::filesystem::exists(pf))
      throw Error("missing propagated labels " + pf.string() +
                  "; run the propagate command first");
    TrainSequence ts;
    ts.images = load_sequence(cfg.data_dir() / s->image_file);
    ts.labels = load_labels(pf);
    ts.annotated = {s->ed, s->es};
    SparseAnnotations ann;
    ann.total_frames = ts.images.frames;
    ann.height = ts.images.height;
    ann.width = ts.images.width;
    ann.num_classes = ts.labels.num_classes;
    ann.frames[s->ed] = {};
    ann.frames[s->es] = {};
    ts.distance.resize(ts.images.frames);
    for (int t = 0; t < ts.images.frames; ++t) {
      int best = ts.images.frames + 1;
      for (int a : {s->ed, s->es})
        best = std::min(best, cyclic_distance(t, a, ts.images.frames));
      ts.distance[t] = best;
    }
    out.push_back(std::move(ts));
  }
  return out;
}

namespace {

void write_loss_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  std::ofstream f = open_text(path);
  f << "iteration,lr,loss\n";
  for (const auto& row : log)
    f << row.iteration << "," << fmt6(row.lr) << "," << fmt6(row.loss) << "\n";
}

StageConfig stage_config(const ExperimentConfig& cfg, int iterations, int batch,
                         std::uint64_t salt) {
  StageConfig sc;
  sc.iterations = iterations;
  sc.batch = batch;
  sc.schedule = cfg.train.schedule;
  sc.augment = cfg.train.augment;
  sc.ranges = cfg.train.ranges;
  sc.seed = child_seed(cfg.seed, salt);
  return sc;
}

}  // namespace

void run_train(const ExperimentConfig& cfg, const std::string& stage) {
  const DatasetManifest manifest = load_manifest(cfg.data_dir());
  std::filesystem::create_directories(cfg.ckpt_dir());

  if (stage == "unet") {
    std::vector<AnnotatedImage> data = load_annotated_images(cfg, manifest);
    UNetParams<float> params = build_unet<float>(cfg.unet, child_seed(cfg.seed, 100));
    StageConfig sc = stage_config(cfg, cfg.train.stage1_iterations, cfg.train.stage1_batch, 101);
    std::vector<TrainLogRow> log = train_unet_static(params, data, sc);
    write_loss_log(cfg.log_dir() / "train_stage1.csv", log);
    save_checkpoint({"unet", config_to_json(cfg), params.named_params()},
                    cfg.ckpt_dir() / "unet.aock");
  } else if (stage == "full") {
    const std::filesystem::path unet_ckpt = cfg.ckpt_dir() / "unet.aock";
    if (!std::filesystem::exists(unet_ckpt))
      throw Error("stage full needs the stage-1 checkpoint " + unet_ckpt.string() +
                  "; run `aoseg train --stage unet` first");
    std::vector<TrainSequence> data = load_train_sequences(cfg, manifest);
    SegModel<float> model = build_model<float>(cfg.model_config(), child_seed(cfg.seed, 102));
    restore_named_tensors(load_checkpoint(unet_ckpt), model.unet.named_params());
    StageConfig sc = stage_config(cfg, cfg.train.stage2_iterations, cfg.train.stage2_batch, 103);
    std::vector<TrainLogRow> log = train_full(model, data, sc, cfg.weight);
    write_loss_log(cfg.log_dir() / "train_stage2.csv", log);
    save_checkpoint({"full", config_to_json(cfg), model.named_params()},
                    cfg.ckpt_dir() / "full.aock");
  } else {
    throw UsageError("train: unknown stage '" + stage + "' (expected unet or full)");
  }
  write_run_manifest(cfg, "train_" + stage);
}

LabelSequence predict_with_checkpoint(const ExperimentConfig& cfg, const Checkpoint& ckpt,
                                      const ImageSequence& seq) {
  if (ckpt.kind == "unet") {
    UNetParams<float> params = build_unet<float>(cfg.unet, 0);
    restore_named_tensors(ckpt, params.named_params());
    return unet_predict_labels(params, seq);
  }
  if (ckpt.kind == "full") {
    SegModel<float> model = build_model<float>(cfg.model_config(), 0);
    restore_named_tensors(ckpt, model.named_params());
    return predict_labels(model, seq);
  }
  throw Error("unknown checkpoint kind '" + ckpt.kind + "'");
}

std::vector<SubjectEval> evaluate_split(const ExperimentConfig& cfg, const Checkpoint& ckpt,
                                        const DatasetManifest& manifest, bool train_split) {
  std::vector<SubjectEval> out;
  for (const SampleEntry* s : manifest.split(train_split)) {
    ImageSequence seq = load_sequence(cfg.data_dir() / s->image_file);
    LabelSequence truth = load_labels(cfg.data_dir() / s->truth_file);
    SparseAnnotations ref = annotations_from_truth(truth, s->ed, s->es);
    LabelSequence predicted = predict_with_checkpoint(cfg, ckpt, seq);
    MetricsReport report = evaluate_method(predicted, ref, seq.spacing_y,
                                           cfg.evaluate.cyclic_curvature, &truth);
    out.push_back({s->id, std::move(report)});
  }
  return out;
}

namespace {

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<SubjectEval>& evals) {
  std::ofstream f = open_text(path);
  f << "subject,structure,dice,mcd_mm,area_err_mm2,mean_curvature\n";
  for (const auto& e : evals)
    for (auto [name, m] : {std::pair{"AAo", &e.report.aao}, std::pair{"DAo", &e.report.dao}})
      f << e.id << "," << name << "," << fmt6(m->dice) << "," << fmt6(m->mcd_mm) << ","
        << fmt6(m->area_err_mm2) << "," << fmt6(m->mean_curvature) << "\n";
}

void write_area_csv(const std::filesystem::path& path, const std::vector<SubjectEval>& evals,
                    bool dao) {
  std::ofstream f = open_text(path);
  f << "subject,frame,area_mm2\n";
  for (const auto& e : evals) {
    const auto& series = dao ? e.report.dao.area_series_mm2 : e.report.aao.area_series_mm2;
    for (std::size_t t = 0; t < series.size(); ++t)
      f << e.id << "," << t << "," << fmt6(series[t]) << "\n";
  }
}

void write_dense_dice_csv(const std::filesystem::path& path,
                          const std::vector<SubjectEval>& evals) {
  std::ofstream f = open_text(path);
  f << "subject,frame,dice_aao,dice_dao\n";
  for (const auto& e : evals) {
    if (!e.report.dense_dice) continue;
    const auto& rows = *e.report.dense_dice;
    for (std::size_t t = 0; t < rows.size(); ++t)
      f << e.id << "," << t << "," << fmt6(rows[t][0]) << "," << fmt6(rows[t][1]) << "\n";
  }
}

double mean_of(const std::vector<SubjectEval>& evals, double StructureMetrics::*field,
               bool dao) {
  double acc = 0.0;
  for (const auto& e : evals) acc += (dao ? e.report.dao : e.report.aao).*field;
  return acc / static_cast<double>(evals.size());
}

std::vector<double> column_of(const std::vector<SubjectEval>& evals,
                              double StructureMetrics::*field, bool dao) {
  std::vector<double> out;
  for (const auto& e : evals) out.push_back((dao ? e.report.dao : e.report.aao).*field);
  return out;
}

}  // namespace

void write_area_svg(const std::filesystem::path& path, const std::string& title,
                    const std::vector<double>& proposed,
                    const std::vector<double>* baseline,
                    const std::vector<std::pair<int, double>>& reference_dots) {
  const int width = 640, height = 400;
  const double ml = 60, mr = 20, mt = 40, mb = 45;
  double lo = proposed[0], hi = proposed[0];
  auto stretch = [&](const std::vector<double>& s) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  };
  stretch(proposed);
  if (baseline) stretch(*baseline);
  for (auto [t, v] : reference_dots) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const int n = static_cast<int>(proposed.size());
  auto px = [&](double t) { return ml + t / (n - 1) * (width - ml - mr); };
  auto py = [&](double v) { return height - mb - (v - lo) / (hi - lo) * (height - mt - mb); };

  auto polyline = [&](const std::vector<double>& s, const char* color, const char* dash) {
    std::string pts;
    for (int t = 0; t < static_cast<int>(s.size()); ++t)
      pts += fmt3(px(t)) + "," + fmt3(py(s[t])) + " ";
    return "  <polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"2\"" + (dash[0] ? " stroke-dasharray=\"" + std::string(dash) + "\"" : "") +
           " points=\"" + pts + "\"/>\n";
  };

  std::ofstream f = open_text(path);
  f << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
    << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  f << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  f << "  <text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << title << "</text>\n";
  // axes
  f << "  <line x1=\"" << fmt3(ml) << "\" y1=\"" << fmt3(height - mb) << "\" x2=\""
    << fmt3(width - mr) << "\" y2=\"" << fmt3(height - mb)
    << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  f << "  <line x1=\"" << fmt3(ml) << "\" y1=\"" << fmt3(mt) << "\" x2=\"" << fmt3(ml)
    << "\" y2=\"" << fmt3(height - mb) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  f << "  <text x=\"" << width / 2 << "\" y=\"" << height - 12
    << "\" text-anchor=\"middle\" font-size=\"12\">frame</text>\n";
  f << "  <text x=\"16\" y=\"" << height / 2
    << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
    << height / 2 << ")\">area (mm^2)</text>\n";
  f << "  <text x=\"" << fmt3(ml - 6) << "\" y=\"" << fmt3(py(lo + pad) + 4)
    << "\" text-anchor=\"end\" font-size=\"10\">" << fmt3(lo + pad) << "</text>\n";
  f << "  <text x=\"" << fmt3(ml - 6) << "\" y=\"" << fmt3(py(hi - pad) + 4)
    << "\" text-anchor=\"end\" font-size=\"10\">" << fmt3(hi - pad) << "</text>\n";

  if (baseline) f << polyline(*baseline, "#d62728", "6,4");
  f << polyline(proposed, "#1f77b4", "");
  for (auto [t, v] : reference_dots)
    f << "  <circle cx=\"" << fmt3(px(t)) << "\" cy=\"" << fmt3(py(v))
      << "\" r=\"5\" fill=\"green\"/>\n";
  // legend
  f << "  <text x=\"" << fmt3(width - mr - 6) << "\" y=\"" << fmt3(mt + 14)
    << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#1f77b4\">proposed</text>\n";
  if (baseline)
    f << "  <text x=\"" << fmt3(width - mr - 6) << "\" y=\"" << fmt3(mt + 30)
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#d62728\">baseline</text>\n";
  f << "</svg>\n";
}

void run_evaluate(const ExperimentConfig& cfg, const EvaluateOptions& opts) {
  const DatasetManifest manifest = load_manifest(cfg.data_dir());
  if (manifest.split(false).empty()) throw Error("evaluate: test split is empty");
  std::filesystem::create_directories(cfg.eval_dir());

  const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
  std::vector<SubjectEval> primary = evaluate_split(cfg, ckpt, manifest, false);
  write_metrics_csv(cfg.eval_dir() / "metrics_proposed.csv", primary);
  write_area_csv(cfg.eval_dir() / "area_series_proposed_aao.csv", primary, false);
  write_area_csv(cfg.eval_dir() / "area_series_proposed_dao.csv", primary, true);
  write_dense_dice_csv(cfg.eval_dir() / "dense_dice_proposed.csv", primary);

  if (!opts.baseline) {
    write_run_manifest(cfg, "evaluate");
    return;
  }

  const Checkpoint base_ckpt = load_checkpoint(*opts.baseline);
  std::vector<SubjectEval> baseline = evaluate_split(cfg, base_ckpt, manifest, false);
  write_metrics_csv(cfg.eval_dir() / "metrics_baseline.csv", baseline);
  write_area_csv(cfg.eval_dir() / "area_series_baseline_aao.csv", baseline, false);
  write_area_csv(cfg.eval_dir() / "area_series_baseline_dao.csv", baseline, true);
  write_dense_dice_csv(cfg.eval_dir() / "dense_dice_baseline.csv", baseline);

  // comparison table shaped like the classic two-method summary:
  // Dice, contour distance, area error, curvature for both structures
  {
    std::ofstream f = open_text(cfg.eval_dir() / "comparison.csv");
    f << "method,dice_aao,dice_dao,dist_aao_mm,dist_dao_mm,area_aao_mm2,area_dao_mm2,"
         "curv_aao,curv_dao\n";
    auto row = [&](const char* name, const std::vector<SubjectEval>& e) {
      f << name << "," << fmt6(mean_of(e, &StructureMetrics::dice, false)) << ","
        << fmt6(mean_of(e, &StructureMetrics::dice, true)) << ","
        << fmt6(mean_of(e, &StructureMetrics::mcd_mm, false)) << ","
        << fmt6(mean_of(e, &StructureMetrics::mcd_mm, true)) << ","
        << fmt6(mean_of(e, &StructureMetrics::area_err_mm2, false)) << ","
        << fmt6(mean_of(e, &StructureMetrics::area_err_mm2, true)) << ","
        << fmt6(mean_of(e, &StructureMetrics::mean_curvature, false)) << ","
        << fmt6(mean_of(e, &StructureMetrics::mean_curvature, true)) << "\n";
    };
    row("baseline", baseline);
    row("proposed", primary);
  }

  // per-subject paired differences and t-tests
  {
    std::ofstream f = open_text(cfg.eval_dir() / "paired_diffs.csv");
    f << "subject,metric,structure,proposed,baseline,diff\n";
    std::ofstream tf = open_text(cfg.eval_dir() / "paired_ttest.csv");
    tf << "metric,structure,n,mean_proposed,mean_baseline,mean_diff,t,p\n";
    const std::pair<const char*, double StructureMetrics::*> metrics[] = {
        {"dice", &StructureMetrics::dice},
        {"mcd_mm", &StructureMetrics::mcd_mm},
        {"area_err_mm2", &StructureMetrics::area_err_mm2},
        {"mean_curvature", &StructureMetrics::mean_curvature}};
    for (auto [mname, field] : metrics)
      for (bool dao : {false, true}) {
        const char* sname = dao ? "DAo" : "AAo";
        std::vector<double> a = column_of(primary, field, dao);
        std::vector<double> b = column_of(baseline, field, dao);
        for (std::size_t i = 0; i < a.size(); ++i)
          f << primary[i].id << "," << mname << "," << sname << "," << fmt6(a[i]) << ","
            << fmt6(b[i]) << "," << fmt6(a[i] - b[i]) << "\n";
        PairedTTest tt = paired_ttest(a, b);
        tf << mname << "," << sname << "," << tt.n << "," << fmt6(tt.mean_a) << ","
           << fmt6(tt.mean_b) << "," << fmt6(tt.mean_diff) << "," << fmt6(tt.t) << ","
           << fmt6(tt.p) << "\n";
      }
  }

  // time-area plots with annotated-frame reference dots
  const auto test_samples = manifest.split(false);
  const int plot_n = std::min<int>(cfg.evaluate.plot_subjects,
                                   static_cast<int>(test_samples.size()));
  for (int i = 0; i < plot_n; ++i) {
    const SampleEntry* s = test_samples[i];
    LabelSequence truth = load_labels(cfg.data_dir() / s->truth_file);
    const double spacing = manifest.config.spacing_mm;
    for (bool dao : {false, true}) {
      std::vector<double> truth_area =
          area_series(truth, dao ? kClassDAo : kClassAAo, spacing);
      std::vector<std::pair<int, double>> dots = {{s->ed, truth_area[s->ed]},
                                                  {s->es, truth_area[s->es]}};
      const auto& prop_series =
          dao ? primary[i].report.dao.area_series_mm2 : primary[i].report.aao.area_series_mm2;
      const auto& base_series = dao ? baseline[i].report.dao.area_series_mm2
                                    : baseline[i].report.aao.area_series_mm2;
      char name[48];
      std::snprintf(name, sizeof name, "area_%03d_%s.svg", s->id, dao ? "dao" : "aao");
      write_area_svg(cfg.eval_dir() / "plots" / name,
                     std::string(dao ? "DAo" : "AAo") + " time-area, subject " +
                         std::to_string(s->id),
                     prop_series, &base_series, dots);
    }
  }
  write_run_manifest(cfg, "evaluate");
}

void run_sweep(const ExperimentConfig& cfg) {
  for (int t : cfg.sweep.t_values)
    if (t % 2 == 0 || t < 3)
      throw UsageError("sweep: window length " + std::to_string(t) +
                       " must be odd and >= 3 (the window needs a center)");
  for (double r : cfg.sweep.r_values)
    if (r < 0) throw UsageError("sweep: exponent must be >= 0");

  const DatasetManifest manifest = load_manifest(cfg.data_dir());
  std::filesystem::create_directories(cfg.sweep_dir());

  // shared artifacts: propagation and the stage-1 checkpoint
  bool have_prop = true;
  for (const SampleEntry* s : manifest.split(true))
    if (!std::filesystem::exists(prop_file(cfg, s->id))) have_prop = false;
  if (!have_prop) run_propagate(cfg);
  const std::filesystem::path unet_ckpt = cfg.ckpt_dir() / "unet.aock";
  if (!std::filesystem::exists(unet_ckpt)) run_train(cfg, "unet");

  std::vector<TrainSequence> data = load_train_sequences(cfg, manifest);
  const Checkpoint stage1 = load_checkpoint(unet_ckpt);

  // union of the two one-dimensional sweeps, deduplicated
  std::vector<std::pair<int, double>> cells;
  auto add_cell = [&](int t, double r) {
    for (auto& c : cells)
      if (c.first == t && c.second == r) return;
    cells.emplace_back(t, r);
  };
  for (int t : cfg.sweep.t_values) add_cell(t, cfg.weight.exponent);
  for (double r : cfg.sweep.r_values) add_cell(cfg.weight.window_length(), r);

  std::ofstream f = open_text(cfg.sweep_dir() / "sweep.csv");
  f << "T,r,dice_aao,dice_dao\n";
  for (auto [t_len, r] : cells) {
    SegModel<float> model = build_model<float>(cfg.model_config(), child_seed(cfg.seed, 102));
    restore_named_tensors(stage1, model.unet.named_params());
    WeightConfig wc;
    wc.radius = (t_len - 1) / 2;
    wc.exponent = r;
    StageConfig sc = stage_config(cfg, cfg.sweep.iterations, cfg.train.stage2_batch, 103);
    train_full(model, data, sc, wc);

    Checkpoint ckpt{"full", config_to_json(cfg), model.named_params()};
    std::vector<SubjectEval> evals = evaluate_split(cfg, ckpt, manifest, false);
    f << t_len << "," << fmt6(r) << "," << fmt6(mean_of(evals, &StructureMetrics::dice, false))
      << "," << fmt6(mean_of(evals, &StructureMetrics::dice, true)) << "\n";
    f.flush();
  }
  write_run_manifest(cfg, "sweep");
}

}  // namespace aoseg
