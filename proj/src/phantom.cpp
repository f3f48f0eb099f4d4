#include "aoseg/phantom.hpp"

#include <cmath>
#include <fstream>

#include "aoseg/io.hpp"

namespace aoseg {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

double coverage(double signed_dist) {
  // linear 1 px edge ramp: 1 inside, 0 outside
  return std::clamp(0.5 - signed_dist, 0.0, 1.0);
}

}  // namespace

double boundary_radius(const ShapeState& s, double theta) {
  return s.radius * (1.0 + s.perturb_amp[0] * std::cos(2.0 * theta + s.perturb_phase[0]) +
                     s.perturb_amp[1] * std::cos(3.0 * theta + s.perturb_phase[1]));
}

void to_json(nlohmann::json& j, const PhantomConfig& c) {
  j = nlohmann::json{{"size", c.size},
                     {"frames", c.frames},
                     {"spacing_mm", c.spacing_mm},
                     {"aao_radius", c.aao_radius},
                     {"aao_amplitude", c.aao_amplitude},
                     {"dao_radius", c.dao_radius},
                     {"dao_amplitude", c.dao_amplitude},
                     {"distractor", c.distractor},
                     {"noise_sigma", c.noise_sigma},
                     {"background", c.background},
                     {"vessel_intensity", c.vessel_intensity},
                     {"distractor_intensity", c.distractor_intensity},
                     {"drift_amplitude", c.drift_amplitude},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PhantomConfig& c) {
  c = PhantomConfig{};
  for (auto& [key, value] : j.items()) {
    if (key == "size") value.get_to(c.size);
    else if (key == "frames") value.get_to(c.frames);
    else if (key == "spacing_mm") value.get_to(c.spacing_mm);
    else if (key == "aao_radius") value.get_to(c.aao_radius);
    else if (key == "aao_amplitude") value.get_to(c.aao_amplitude);
    else if (key == "dao_radius") value.get_to(c.dao_radius);
    else if (key == "dao_amplitude") value.get_to(c.dao_amplitude);
    else if (key == "distractor") value.get_to(c.distractor);
    else if (key == "noise_sigma") value.get_to(c.noise_sigma);
    else if (key == "background") value.get_to(c.background);
    else if (key == "vessel_intensity") value.get_to(c.vessel_intensity);
    else if (key == "distractor_intensity") value.get_to(c.distractor_intensity);
    else if (key == "drift_amplitude") value.get_to(c.drift_amplitude);
    else if (key == "seed") value.get_to(c.seed);
    else throw UsageError("phantom config: unknown key '" + key + "'");
  }
}

PhantomSample generate(const PhantomConfig& config) {
  config.validate();
  const int n = config.size, t_len = config.frames;
  Rng rng(config.seed);

  // Static per-sample boundary perturbations, drawn once per structure.
  std::array<ShapeState, 3> proto{};
  for (auto& s : proto)
    for (int k = 0; k < 2; ++k) {
      s.perturb_amp[k] = rng.uniform(0.01, 0.035);
      s.perturb_phase[k] = rng.uniform(0.0, kTau);
    }

  const double aao_cy = 0.38 * n, aao_cx = 0.34 * n;
  const double dao_cy = 0.62 * n, dao_cx = 0.66 * n;
  const double dis_cy = aao_cy - 0.17 * n, dis_cx = aao_cx + 0.19 * n;

  PhantomSample sample;
  sample.images.frames = t_len;
  sample.images.height = n;
  sample.images.width = n;
  sample.images.spacing_y = static_cast<float>(config.spacing_mm);
  sample.images.spacing_x = static_cast<float>(config.spacing_mm);
  sample.images.data.resize(static_cast<std::size_t>(t_len) * n * n);
  sample.truth.frames = t_len;
  sample.truth.height = n;
  sample.truth.width = n;
  sample.truth.num_classes = 3;
  sample.truth.provenance.assign(t_len, kProvenanceHuman);
  sample.truth.data.resize(static_cast<std::size_t>(t_len) * n * n);
  sample.shapes.resize(t_len);

  for (int t = 0; t < t_len; ++t) {
    const double ph = kTau * t / t_len;
    const double drift_y = config.drift_amplitude * std::sin(ph);
    const double drift_x = config.drift_amplitude * 0.6 * (1.0 - std::cos(ph));

    std::array<ShapeState, 3>& st = sample.shapes[t];
    st = proto;
    st[0].cy = aao_cy + drift_y;
    st[0].cx = aao_cx + drift_x;
    st[0].radius = config.aao_radius + config.aao_amplitude * std::cos(ph);
    st[1].cy = dao_cy + drift_y;
    st[1].cx = dao_cx + drift_x;
    st[1].radius = config.dao_radius + config.dao_amplitude * std::cos(ph);
    st[2].cy = dis_cy + drift_y + 0.5 * std::sin(ph + 0.7);
    st[2].cx = dis_cx + drift_x + 0.5 * std::cos(ph + 0.7);
    st[2].radius = config.distractor
                       ? 0.42 * config.dao_radius + 0.4 * std::cos(ph + kTau / 6.0)
                       : 0.0;

    // margin check: every structure stays >= 4 px inside the frame
    const int active = config.distractor ? 3 : 2;
    for (int s = 0; s < active; ++s) {
      const double rmax =
          st[s].radius * (1.0 + st[s].perturb_amp[0] + st[s].perturb_amp[1]);
      if (st[s].cy - rmax < 4.0 || st[s].cy + rmax > n - 5.0 || st[s].cx - rmax < 4.0 ||
          st[s].cx + rmax > n - 5.0)
        throw Error("phantom: structure " + std::to_string(s) +
                    " leaves the frame at t=" + std::to_string(t) +
                    "; shrink radii or amplitudes");
    }

    float* img = sample.images.frame(t);
    std::uint8_t* lab = sample.truth.frame(t);
    const double intensity[3] = {config.vessel_intensity, config.vessel_intensity,
                                 config.distractor_intensity};
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        double v = config.background;
        std::uint8_t cls = 0;
        for (int s = 0; s < active; ++s) {
          const double dy = y - st[s].cy, dx = x - st[s].cx;
          const double dist = std::sqrt(dy * dy + dx * dx);
          const double sd = dist - boundary_radius(st[s], std::atan2(dy, dx));
          v += coverage(sd) * (intensity[s] - config.background);
          if (s < 2 && sd <= 0.0) cls = static_cast<std::uint8_t>(s + 1);
        }
        img[y * n + x] = static_cast<float>(v);
        lab[y * n + x] = cls;
      }
    // noise after shape synthesis, fixed raster order
    for (int i = 0; i < n * n; ++i) {
      double v = img[i] + config.noise_sigma * rng.normal();
      img[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }

  // ED is frame 0; ES is the frame where the AAo area is farthest from ED's.
  auto analytic_area = [&](int t) {
    const double r = sample.shapes[t][0].radius;
    return r * r;
  };
  int es = 1;
  double best = 0.0;
  for (int t = 1; t < t_len; ++t) {
    const double d = std::abs(analytic_area(t) - analytic_area(0));
    if (d > best) {
      best = d;
      es = t;
    }
  }
  sample.ed = 0;
  sample.es = es;
  sample.annotations.total_frames = t_len;
  sample.annotations.height = n;
  sample.annotations.width = n;
  sample.annotations.num_classes = 3;
  for (int s : {sample.ed, sample.es})
    sample.annotations.frames[s] = std::vector<std::uint8_t>(
        sample.truth.frame(s), sample.truth.frame(s) + sample.truth.frame_size());
  return sample;
}

DatasetManifest generate_dataset(int n, double train_fraction, const PhantomConfig& config,
                                 std::uint64_t master_seed,
                                 const std::filesystem::path& dir) {
  if (n < 2) throw UsageError("generate_dataset: need at least 2 samples");
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw UsageError("generate_dataset: train fraction must lie in (0, 1)");
  std::filesystem::create_directories(dir);

  // deterministic shuffled split
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(master_seed);
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
  const int n_train = static_cast<int>(std::lround(n * train_fraction));
  std::vector<bool> is_train(n, false);
  for (int i = 0; i < n_train; ++i) is_train[order[i]] = true;

  DatasetManifest manifest;
  manifest.seed = master_seed;
  manifest.config = config;
  for (int i = 0; i < n; ++i) {
    PhantomConfig c = config;
    c.seed = child_seed(master_seed, static_cast<std::uint64_t>(i));
    PhantomSample sample = generate(c);
    char img_name[32], lab_name[32];
    std::snprintf(img_name, sizeof img_name, "seq_%03d.aosq", i);
    std::snprintf(lab_name, sizeof lab_name, "truth_%03d.aolb", i);
    save_sequence(sample.images, dir / img_name);
    save_labels(sample.truth, dir / lab_name);
    manifest.samples.push_back(
        {i, img_name, lab_name, is_train[i], sample.ed, sample.es});
  }

  nlohmann::json j;
  j["seed"] = manifest.seed;
  j["config"] = manifest.config;
  j["samples"] = nlohmann::json::array();
  for (const auto& s : manifest.samples)
    j["samples"].push_back({{"id", s.id},
                            {"image", s.image_file},
                            {"truth", s.truth_file},
                            {"split", s.train ? "train" : "test"},
                            {"ed", s.ed},
                            {"es", s.es}});
  std::ofstream f(dir / "dataset_manifest.json", std::ios::trunc);
  if (!f) throw Error("cannot write dataset manifest under " + dir.string());
  f << j.dump(2) << "\n";
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream f(dir / "dataset_manifest.json");
  if (!f) throw Error("no dataset manifest in " + dir.string() +
                      "; run the generate command first");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid dataset manifest: " + std::string(e.what()));
  }
  DatasetManifest manifest;
  manifest.seed = j.at("seed").get<std::uint64_t>();
  manifest.config = j.at("config").get<PhantomConfig>();
  for (const auto& entry : j.at("samples")) {
    SampleEntry s;
    s.id = entry.at("id").get<int>();
    s.image_file = entry.at("image").get<std::string>();
    s.truth_file = entry.at("truth").get<std::string>();
    s.train = entry.at("split").get<std::string>() == "train";
    s.ed = entry.at("ed").get<int>();
    s.es = entry.at("es").get<int>();
    manifest.samples.push_back(s);
  }
  return manifest;
}

AugmentParams sample_augment(Rng& rng, const AugmentRanges& ranges) {
  AugmentParams p;
  p.dy = rng.uniform(-ranges.translate_px, ranges.translate_px);
  p.dx = rng.uniform(-ranges.translate_px, ranges.translate_px);
  p.rot_deg = rng.uniform(-ranges.rotate_deg, ranges.rotate_deg);
  p.scale = rng.uniform(ranges.scale_lo, ranges.scale_hi);
  return p;
}

AugmentParams inverse_of(const AugmentParams& p) {
  const double th = -p.rot_deg * kTau / 360.0;
  const double c = std::cos(th), s = std::sin(th);
  AugmentParams inv;
  inv.scale = 1.0 / p.scale;
  inv.rot_deg = -p.rot_deg;
  inv.dy = -(c * p.dy - s * p.dx) / p.scale;
  inv.dx = -(s * p.dy + c * p.dx) / p.scale;
  return inv;
}

void augment_frames(std::vector<std::vector<float>>& images,
                    std::vector<std::vector<std::uint8_t>>& labels, int h, int w,
                    const AugmentParams& p) {
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double th = p.rot_deg * kTau / 360.0;
  const double cth = std::cos(th), sth = std::sin(th);
  // output pixel -> source point: inverse of q -> c + s R(theta) (q - c) + t
  auto source = [&](int y, int x, double& sy, double& sx) {
    const double vy = y - cy - p.dy, vx = x - cx - p.dx;
    sy = cy + (cth * vy + sth * vx) / p.scale;
    sx = cx + (-sth * vy + cth * vx) / p.scale;
  };

  for (auto& img : images) {
    std::vector<float> out(img.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double sy, sx;
        source(y, x, sy, sx);
        sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
        sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
        const int iy = std::min(static_cast<int>(sy), h - 2);
        const int ix = std::min(static_cast<int>(sx), w - 2);
        const double fy = sy - iy, fx = sx - ix;
        out[y * w + x] = static_cast<float>(
            (1 - fy) * ((1 - fx) * img[iy * w + ix] + fx * img[iy * w + ix + 1]) +
            fy * ((1 - fx) * img[(iy + 1) * w + ix] + fx * img[(iy + 1) * w + ix + 1]));
      }
    img = std::move(out);
  }
  for (auto& lab : labels) {
    std::vector<std::uint8_t> out(lab.size());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double sy, sx;
        source(y, x, sy, sx);
        const int iy = std::clamp(static_cast<int>(std::lround(sy)), 0, h - 1);
        const int ix = std::clamp(static_cast<int>(std::lround(sx)), 0, w - 1);
        out[y * w + x] = lab[iy * w + ix];
      }
    lab = std::move(out);
  }
}

}  // namespace aoseg
