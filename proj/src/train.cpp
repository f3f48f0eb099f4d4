#include "aoseg/train.hpp"

namespace aoseg {

namespace {

// Batched stage-1 tensors from (possibly augmented) frame buffers.
struct BatchBuffers {
  std::vector<std::vector<float>> images;
  std::vector<std::vector<std::uint8_t>> labels;
};

Tensor<float> batch_images(const BatchBuffers& b, int h, int w) {
  const int n = static_cast<int>(b.images.size());
  Tensor<float> t({n, 1, h, w});
  for (int i = 0; i < n; ++i)
    std::copy(b.images[i].begin(), b.images[i].end(),
              t.data() + static_cast<std::int64_t>(i) * h * w);
  return t;
}

Tensor<float> batch_onehot(const BatchBuffers& b, int h, int w, int classes) {
  const int n = static_cast<int>(b.labels.size());
  Tensor<float> t({n, classes, h, w});
  for (int i = 0; i < n; ++i)
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(h) * w; ++p) {
      const std::uint8_t c = b.labels[i][p];
      if (c >= classes) throw Error("train: label class out of range");
      t.values()[(static_cast<std::int64_t>(i) * classes + c) * h * w + p] = 1.0f;
    }
  return t;
}

}  // namespace

std::vector<TrainLogRow> train_unet_static(UNetParams<float>& params,
                                           const std::vector<AnnotatedImage>& data,
                                           const StageConfig& cfg) {
  if (data.empty()) throw Error("train_unet_static: empty dataset");
  const int h = data[0].height, w = data[0].width;
  const int classes = params.config.num_classes;
  for (const auto& d : data)
    if (d.height != h || d.width != w)
      throw Error("train_unet_static: samples disagree on image size");

  params.set_tracked(true);
  std::vector<Tensor<float>> tensors;
  for (auto& nt : params.named_params()) tensors.push_back(nt.tensor);
  AdamState<float> adam;
  Rng rng(cfg.seed);
  std::vector<TrainLogRow> log;
  log.reserve(cfg.iterations);

  for (int it = 0; it < cfg.iterations; ++it) {
    BatchBuffers batch;
    for (int b = 0; b < cfg.batch; ++b) {
      const AnnotatedImage& s = data[rng.uniform_int(static_cast<int>(data.size()))];
      batch.images.push_back(s.image);
      batch.labels.push_back(s.label);
      if (cfg.augment) {
        std::vector<std::vector<float>> img1(1, std::move(batch.images.back()));
        std::vector<std::vector<std::uint8_t>> lab1(1, std::move(batch.labels.back()));
        augment_frames(img1, lab1, h, w, sample_augment(rng, cfg.ranges));
        batch.images.back() = std::move(img1[0]);
        batch.labels.back() = std::move(lab1[0]);
      }
    }
    Tensor<float> images = batch_images(batch, h, w);
    Tensor<float> targets = batch_onehot(batch, h, w, classes);
    Tensor<float> weights({cfg.batch, 1, h, w}, 1.0f);

    Graph<float> g;
    Tensor<float> logits = unet_forward(params, images, &g).logits;
    Tensor<float> loss = softmax_cross_entropy(logits, targets, weights, &g);
    g.backward(loss);

    AdamConfig ac;
    ac.lr = cfg.schedule.lr_at(it, cfg.iterations);
    adam_step(tensors, adam, ac);
    zero_grads(tensors);
    log.push_back({it, ac.lr, static_cast<double>(loss.values()[0])});
  }
  return log;
}

std::vector<TrainLogRow> train_full(SegModel<float>& model,
                                    const std::vector<TrainSequence>& data,
                                    const StageConfig& cfg, const WeightConfig& weights) {
  if (data.empty()) throw Error("train_full: empty dataset");
  weights.validate();
  for (const auto& seq : data) {
    seq.images.validate();
    if (seq.annotated.empty()) throw Error("train_full: sequence without annotated frames");
    if (static_cast<int>(seq.distance.size()) != seq.images.frames)
      throw Error("train_full: distance table does not cover the sequence");
  }

  model.set_tracked(true);
  std::vector<Tensor<float>> tensors = model.param_tensors();
  AdamState<float> adam;
  Rng rng(cfg.seed);
  const int radius = weights.radius;
  const int classes = model.unet.config.num_classes;
  std::vector<TrainLogRow> log;
  log.reserve(cfg.iterations);

  for (int it = 0; it < cfg.iterations; ++it) {
    Graph<float> g;
    Tensor<float> total;
    for (int b = 0; b < cfg.batch; ++b) {
      const TrainSequence& seq = data[rng.uniform_int(static_cast<int>(data.size()))];
      const int center = seq.annotated[rng.uniform_int(static_cast<int>(seq.annotated.size()))];
      const int h = seq.images.height, w = seq.images.width;
      const int total_frames = seq.images.frames;

      std::vector<std::vector<float>> imgs;
      std::vector<std::vector<std::uint8_t>> labs;
      std::vector<int> dists;
      for (int off = -radius; off <= radius; ++off) {
        const int t = ((center + off) % total_frames + total_frames) % total_frames;
        imgs.emplace_back(seq.images.frame(t), seq.images.frame(t) + seq.images.frame_size());
        labs.emplace_back(seq.labels.frame(t), seq.labels.frame(t) + seq.labels.frame_size());
        dists.push_back(seq.distance[t]);
      }
      if (cfg.augment) augment_frames(imgs, labs, h, w, sample_augment(rng, cfg.ranges));

      std::vector<Tensor<float>> frames(imgs.size());
      for (std::size_t t = 0; t < imgs.size(); ++t)
        frames[t] = frame_tensor<float>(imgs[t].data(), h, w);
      std::vector<Tensor<float>> logits = model_logits_sequence(model, frames, &g);

      std::vector<WindowFrame<float>> window(imgs.size());
      for (std::size_t t = 0; t < imgs.size(); ++t) {
        window[t].logits = logits[t];
        window[t].target_onehot = onehot_tensor<float>(labs[t].data(), h, w, classes);
        window[t].distance = dists[t];
      }
      Tensor<float> loss = weighted_sequence_loss(window, weights, &g);
      total = total.size() == 0 ? loss : add(total, loss, &g);
    }
    if (cfg.batch > 1) total = scale(total, 1.0f / cfg.batch, &g);
    g.backward(total);

    AdamConfig ac;
    ac.lr = cfg.schedule.lr_at(it, cfg.iterations);
    adam_step(tensors, adam, ac);
    zero_grads(tensors);
    log.push_back({it, ac.lr, static_cast<double>(total.values()[0])});
  }
  return log;
}

}  // namespace aoseg
