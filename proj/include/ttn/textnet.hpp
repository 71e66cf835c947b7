#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ttn/corpus.hpp"
#include "ttn/lda.hpp"
#include "ttn/nn.hpp"
#include "ttn/tensor.hpp"
#include "ttn/topic.hpp"

namespace ttn::textnet {

struct TrainingPair {
  Tensor image;  // (3, H, W), values in [0, 1]
  TopicDistribution target;
  std::string doc_id;
  std::string image_path;
};

struct LabeledImage {
  Tensor image;
  std::size_t label = 0;
};

struct AugmentConfig {
  std::size_t crop_size = 32;
  double mirror_prob = 0.5;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static AugmentConfig from_json(const nlohmann::json& j);
  bool operator==(const AugmentConfig&) const = default;
};

enum class Head { Topics, Classes };

struct Checkpoint {
  nn::NetSpec spec;
  nn::NetParams params;
  std::size_t iteration = 0;
  nn::SgdConfig sgd;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  std::string lda_hash;
  Head head = Head::Topics;

  bool operator==(const Checkpoint&) const = default;
};

std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::string_view bytes);
void save(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

using WarningSink = std::function<void(const std::string&)>;

// One pair per (image, article); every image inherits its article's theta
// from the model. Unreadable images and articles unknown to the model are
// skipped with a warning. Throws NoPairs when nothing decodes.
std::vector<TrainingPair> make_pairs(const std::vector<corpus::RawDocument>& docs, const lda::LdaModel& model,
                                     const std::filesystem::path& image_root, const WarningSink& warn = {});

// Uniform random crop position, then a horizontal flip with probability
// mirror_prob. Throws CropTooLarge when the crop does not fit.
Tensor augment(const Tensor& image, const AugmentConfig& cfg, std::uint64_t seed);

struct TrainRecord {
  std::size_t iter = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainOptions {
  std::size_t threads = 1;
  std::size_t checkpoint_every = 0;  // 0 disables intermediate checkpoints
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::function<void(const TrainRecord&)> on_iteration;
  std::string lda_hash;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainRecord> history;
};

// Sigmoid cross-entropy regression of topic distributions. Batches are drawn
// from seeded per-epoch shuffles; augmentation seeds derive from
// (seed, iteration, slot), so a run resumed from a checkpoint follows the same
// trajectory as an uninterrupted one.
TrainResult train(const std::vector<TrainingPair>& pairs, const nn::NetSpec& spec, const nn::SgdConfig& sgd,
                  const AugmentConfig& aug, std::uint64_t seed, const TrainOptions& opts = {});
// Continues `start` until start.sgd.max_iters.
TrainResult resume(Checkpoint start, const std::vector<TrainingPair>& pairs, const TrainOptions& opts = {});

enum class CropMode { Standard, TrueRandom };

// Evaluation views. Standard: center, four corners, then the same five
// mirrored; the first n are used (n <= 10). TrueRandom: n uniformly placed
// crops, each mirrored with probability 1/2.
std::vector<Tensor> test_views(const Tensor& image, std::size_t crop_size, std::size_t n_crops,
                               CropMode mode = CropMode::Standard, std::uint64_t seed = 0);

// Element-wise sigmoid of each view's logits, averaged, renormalized to sum 1.
TopicDistribution predict_topics(const Checkpoint& ckpt, const Tensor& image, std::size_t n_crops = 10,
                                 CropMode mode = CropMode::Standard, std::uint64_t seed = 0);

// Flattened activation of `layer_name` on the center crop. Accepts "pool5"
// as an alias of the reference net's last pooling layer. Throws UnknownLayer.
std::vector<double> extract_features(const Checkpoint& ckpt, const Tensor& image, const std::string& layer_name);

// Replaces the final dense layer with an n_classes head (re-initialized from
// `seed`), keeps every other weight, resets momentum, and trains with softmax
// cross-entropy for sgd.max_iters iterations.
TrainResult fine_tune(const Checkpoint& ckpt, const std::vector<LabeledImage>& data, std::size_t n_classes,
                      const nn::SgdConfig& sgd, const AugmentConfig& aug, std::uint64_t seed,
                      const TrainOptions& opts = {});

// Argmax of the averaged softmax over the test views.
std::size_t predict_class(const Checkpoint& ckpt, const Tensor& image, std::size_t n_crops = 1);

}  // namespace ttn::textnet
