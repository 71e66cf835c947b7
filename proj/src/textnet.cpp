#include "ttn/textnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ttn/error.hpp"
#include "ttn/image.hpp"
#include "ttn/io.hpp"
#include "ttn/rng.hpp"

namespace ttn::textnet {

nlohmann::json AugmentConfig::to_json() const {
  return {{"crop_size", crop_size}, {"mirror_prob", mirror_prob}, {"seed", seed}};
}

AugmentConfig AugmentConfig::from_json(const nlohmann::json& j) {
  AugmentConfig c;
  c.crop_size = j.value("crop_size", c.crop_size);
  c.mirror_prob = j.value("mirror_prob", c.mirror_prob);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string serialize(const Checkpoint& ckpt) {
  nlohmann::json extra = {{"kind", "checkpoint"},
                          {"iteration", ckpt.iteration},
                          {"seed", ckpt.seed},
                          {"sgd", ckpt.sgd.to_json()},
                          {"augment", ckpt.augment.to_json()},
                          {"lda_hash", ckpt.lda_hash},
                          {"head", ckpt.head == Head::Topics ? "topics" : "classes"}};
  return nn::serialize_weights(ckpt.spec, ckpt.params, extra);
}

Checkpoint deserialize(std::string_view bytes) {
  auto f = nn::deserialize_weights(bytes);
  Checkpoint c;
  c.spec = std::move(f.spec);
  c.params = std::move(f.params);
  try {
    const auto& h = f.header;
    c.iteration = h.value("iteration", std::size_t{0});
    c.seed = h.value("seed", std::uint64_t{0});
    if (h.contains("sgd")) c.sgd = nn::SgdConfig::from_json(h.at("sgd"));
    if (h.contains("augment")) c.augment = AugmentConfig::from_json(h.at("augment"));
    c.lda_hash = h.value("lda_hash", std::string());
    c.head = h.value("head", std::string("topics")) == "classes" ? Head::Classes : Head::Topics;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("checkpoint header: ") + e.what());
  }
  return c;
}

void save(const Checkpoint& ckpt, const std::filesystem::path& path) { io::write_atomic(path, serialize(ckpt)); }

Checkpoint load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

std::vector<TrainingPair> make_pairs(const std::vector<corpus::RawDocument>& docs, const lda::LdaModel& model,
                                     const std::filesystem::path& image_root, const WarningSink& warn) {
  std::vector<TrainingPair> pairs;
  for (const auto& doc : docs) {
    if (doc.image_paths.empty()) continue;
    auto it = model.doc_thetas.find(doc.doc_id);
    if (it == model.doc_thetas.end()) {
      if (warn) warn("document '" + doc.doc_id + "' has no topic distribution in the model; skipped");
      continue;
    }
    for (const auto& rel : doc.image_paths) {
      try {
        pairs.push_back({image::read_ppm(image_root / rel), it->second, doc.doc_id, rel});
      } catch (const Error& e) {
        if (warn) warn(std::string("skipping image: ") + e.what());
      }
    }
  }
  require(!pairs.empty(), ErrorCode::NoPairs, "no image could be decoded");
  return pairs;
}

Tensor augment(const Tensor& img, const AugmentConfig& cfg, std::uint64_t seed) {
  require(img.rank() == 3, ErrorCode::ShapeMismatch, "augment needs a (C, H, W) image");
  const std::size_t h = img.dim(1), w = img.dim(2);
  require(cfg.crop_size > 0 && cfg.crop_size <= h && cfg.crop_size <= w, ErrorCode::CropTooLarge,
          "crop " + std::to_string(cfg.crop_size) + " does not fit image " + shape_str(img.shape()));
  Rng rng(seed);
  const auto y = rng.below(h - cfg.crop_size + 1);
  const auto x = rng.below(w - cfg.crop_size + 1);
  auto out = image::crop(img, y, x, cfg.crop_size);
  if (rng.bernoulli(cfg.mirror_prob)) out = image::mirror(out);
  return out;
}

namespace {

using BatchLoss = std::function<nn::LossResult(const Tensor& logits, const std::vector<std::size_t>& indices)>;

TrainResult run_training(Checkpoint ckpt, const std::vector<const Tensor*>& images, const BatchLoss& loss_fn,
                         const TrainOptions& opts) {
  ckpt.sgd.validate();
  const std::size_t n = images.size();
  require(n > 0, ErrorCode::NoPairs, "no training data");
  const auto& cfg = ckpt.sgd;
  const auto& in = ckpt.spec.input;
  require(in[1] == ckpt.augment.crop_size && in[2] == ckpt.augment.crop_size, ErrorCode::ShapeMismatch,
          "network input " + shape_str(in) + " does not match crop size " + std::to_string(ckpt.augment.crop_size));

  TrainResult result;
  std::vector<std::size_t> perm(n);
  std::size_t perm_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> indices(cfg.batch_size);

  for (std::size_t it = ckpt.iteration; it < cfg.max_iters; ++it) {
    Tensor batch({cfg.batch_size, in[0], in[1], in[2]});
    for (std::size_t j = 0; j < cfg.batch_size; ++j) {
      const std::size_t pos = it * cfg.batch_size + j;
      const std::size_t epoch = pos / n;
      if (epoch != perm_epoch) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng rng(derive_seed(ckpt.seed, 1, epoch));
        rng.shuffle(perm.begin(), perm.end());
        perm_epoch = epoch;
      }
      indices[j] = perm[pos % n];
      const auto view = augment(*images[indices[j]], ckpt.augment, derive_seed(ckpt.seed, 2, it, j));
      require(view.size() == batch.item_size(), ErrorCode::ShapeMismatch, "image channels do not match network input");
      std::copy(view.values().begin(), view.values().end(), batch.item(j).begin());
    }

    auto fwd = nn::forward(ckpt.spec, ckpt.params, batch, opts.threads);
    auto loss = loss_fn(fwd.logits, indices);
    require(std::isfinite(loss.loss), ErrorCode::NonFiniteInput, "non-finite loss at iteration " + std::to_string(it));
    auto grads = nn::backward(ckpt.spec, ckpt.params, fwd.cache, loss.grad, false, opts.threads);
    nn::sgd_step(ckpt.params, grads, cfg, it);
    ckpt.iteration = it + 1;

    TrainRecord rec{it, nn::learning_rate(cfg, it), loss.loss};
    result.history.push_back(rec);
    if (opts.on_iteration) opts.on_iteration(rec);
    if (opts.checkpoint_every > 0 && ckpt.iteration % opts.checkpoint_every == 0 && opts.on_checkpoint) {
      opts.on_checkpoint(ckpt);
    }
  }
  result.checkpoint = std::move(ckpt);
  return result;
}

TrainResult resume_topics(Checkpoint start, const std::vector<TrainingPair>& pairs, const TrainOptions& opts) {
  require(!pairs.empty(), ErrorCode::NoPairs, "no training pairs");
  const std::size_t k = start.spec.output_dim();
  std::vector<const Tensor*> images;
  images.reserve(pairs.size());
  for (const auto& p : pairs) {
    require(p.target.size() == k, ErrorCode::ShapeMismatch,
            "target of '" + p.doc_id + "' has " + std::to_string(p.target.size()) + " topics, net outputs " +
                std::to_string(k));
    images.push_back(&p.image);
  }
  auto loss_fn = [&](const Tensor& logits, const std::vector<std::size_t>& idx) {
    Tensor targets(logits.shape());
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto& t = pairs[idx[b]].target.probs();
      std::copy(t.begin(), t.end(), targets.item(b).begin());
    }
    return nn::sigmoid_cross_entropy(logits, targets);
  };
  return run_training(std::move(start), images, loss_fn, opts);
}

}  // namespace

TrainResult train(const std::vector<TrainingPair>& pairs, const nn::NetSpec& spec, const nn::SgdConfig& sgd,
                  const AugmentConfig& aug, std::uint64_t seed, const TrainOptions& opts) {
  Checkpoint start;
  start.spec = spec;
  start.params = nn::init_params(spec, seed);
  start.sgd = sgd;
  start.augment = aug;
  start.seed = seed;
  start.lda_hash = opts.lda_hash;
  start.head = Head::Topics;
  return resume_topics(std::move(start), pairs, opts);
}

TrainResult resume(Checkpoint start, const std::vector<TrainingPair>& pairs, const TrainOptions& opts) {
  require(start.head == Head::Topics, ErrorCode::InvalidArgument, "checkpoint has a classification head");
  return resume_topics(std::move(start), pairs, opts);
}

std::vector<Tensor> test_views(const Tensor& img, std::size_t crop_size, std::size_t n_crops, CropMode mode,
                               std::uint64_t seed) {
  require(img.rank() == 3, ErrorCode::ShapeMismatch, "image must be (C, H, W)");
  require(n_crops >= 1, ErrorCode::InvalidArgument, "n_crops must be >= 1");
  const std::size_t h = img.dim(1), w = img.dim(2);
  require(crop_size > 0 && crop_size <= h && crop_size <= w, ErrorCode::CropTooLarge,
          "crop " + std::to_string(crop_size) + " does not fit image " + shape_str(img.shape()));
  std::vector<Tensor> views;
  if (mode == CropMode::TrueRandom) {
    AugmentConfig cfg{crop_size, 0.5, seed};
    for (std::size_t i = 0; i < n_crops; ++i) views.push_back(augment(img, cfg, derive_seed(seed, 4, i)));
    return views;
  }
  require(n_crops <= 10, ErrorCode::InvalidArgument, "standard evaluation supports at most 10 views");
  const std::size_t my = h - crop_size, mx = w - crop_size;
  const std::pair<std::size_t, std::size_t> corners[5] = {{my / 2, mx / 2}, {0, 0}, {0, mx}, {my, 0}, {my, mx}};
  for (std::size_t i = 0; i < n_crops; ++i) {
    const auto [y, x] = corners[i % 5];
    auto v = image::crop(img, y, x, crop_size);
    views.push_back(i < 5 ? std::move(v) : image::mirror(v));
  }
  return views;
}

namespace {

Tensor stack(const std::vector<Tensor>& views) {
  Shape s{views.size()};
  s.insert(s.end(), views.front().shape().begin(), views.front().shape().end());
  Tensor batch(s);
  for (std::size_t i = 0; i < views.size(); ++i) std::copy(views[i].values().begin(), views[i].values().end(), batch.item(i).begin());
  return batch;
}

}  // namespace

TopicDistribution predict_topics(const Checkpoint& ckpt, const Tensor& img, std::size_t n_crops, CropMode mode,
                                 std::uint64_t seed) {
  const auto views = test_views(img, ckpt.spec.input[1], n_crops, mode, seed);
  const auto fwd = nn::forward(ckpt.spec, ckpt.params, stack(views));
  const std::size_t k = fwd.logits.dim(1);
  std::vector<double> avg(k, 0.0);
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto row = fwd.logits.item(v);
    for (std::size_t t = 0; t < k; ++t) avg[t] += nn::sigmoid(row[t]);
  }
  for (auto& a : avg) a /= static_cast<double>(views.size());
  return TopicDistribution::normalized(avg);
}

std::vector<double> extract_features(const Checkpoint& ckpt, const Tensor& img, const std::string& layer_name) {
  const auto name = nn::resolve_layer_alias(ckpt.spec, layer_name);
  std::size_t act_index = 0;
  if (name != "input") {
    const auto idx = ckpt.spec.find(name);
    require(idx.has_value(), ErrorCode::UnknownLayer, "no layer named '" + layer_name + "'");
    act_index = *idx + 1;
  }
  const auto views = test_views(img, ckpt.spec.input[1], 1);
  const auto fwd = nn::forward(ckpt.spec, ckpt.params, stack(views));
  const auto& act = fwd.cache.activations[act_index];
  return {act.values().begin(), act.values().end()};
}

TrainResult fine_tune(const Checkpoint& ckpt, const std::vector<LabeledImage>& data, std::size_t n_classes,
                      const nn::SgdConfig& sgd, const AugmentConfig& aug, std::uint64_t seed,
                      const TrainOptions& opts) {
  require(n_classes >= 2, ErrorCode::InvalidArgument, "fine-tuning needs at least 2 classes");
  require(!data.empty(), ErrorCode::NoPairs, "no labeled images");
  require(!ckpt.spec.layers.empty() && ckpt.spec.layers.back().kind == nn::LayerKind::Dense,
          ErrorCode::InvalidArgument, "last layer must be dense to replace the head");

  Checkpoint start;
  start.spec = ckpt.spec;
  start.spec.layers.back().out = n_classes;
  start.params = ckpt.params;
  const std::size_t head = start.spec.layers.size() - 1;
  start.params.layers[head] = nn::init_layer(start.spec, head, derive_seed(seed, 3));
  for (std::size_t i = 0; i < start.params.velocity.size(); ++i) {
    auto& v = start.params.velocity[i];
    v.weight = v.weight.empty() ? Tensor() : Tensor(start.params.layers[i].weight.shape());
    v.bias = v.bias.empty() ? Tensor() : Tensor(start.params.layers[i].bias.shape());
  }
  start.sgd = sgd;
  start.augment = aug;
  start.seed = seed;
  start.lda_hash = ckpt.lda_hash;
  start.head = Head::Classes;

  std::vector<const Tensor*> images;
  images.reserve(data.size());
  for (const auto& d : data) {
    require(d.label < n_classes, ErrorCode::IndexOutOfRange, "class label out of range");
    images.push_back(&d.image);
  }
  auto loss_fn = [&](const Tensor& logits, const std::vector<std::size_t>& idx) {
    std::vector<std::size_t> labels(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) labels[b] = data[idx[b]].label;
    return nn::softmax_cross_entropy(logits, labels);
  };
  return run_training(std::move(start), images, loss_fn, opts);
}

std::size_t predict_class(const Checkpoint& ckpt, const Tensor& img, std::size_t n_crops) {
  const auto views = test_views(img, ckpt.spec.input[1], n_crops);
  const auto fwd = nn::forward(ckpt.spec, ckpt.params, stack(views));
  const std::size_t k = fwd.logits.dim(1);
  std::vector<double> avg(k, 0.0);
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto row = fwd.logits.item(v);
    const double m = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double x : row) z += std::exp(x - m);
    for (std::size_t c = 0; c < k; ++c) avg[c] += std::exp(row[c] - m) / z;
  }
  return static_cast<std::size_t>(std::max_element(avg.begin(), avg.end()) - avg.begin());
}

}  // namespace ttn::textnet
