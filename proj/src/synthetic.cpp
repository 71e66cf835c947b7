#include "ttn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "ttn/error.hpp"
#include "ttn/image.hpp"
#include "ttn/io.hpp"
#include "ttn/rng.hpp"

namespace ttn::synthetic {

const std::vector<std::string>& topic_words(std::size_t topic) {
  static const std::vector<std::vector<std::string>> words = {
      {"airplane", "pilot", "runway", "cockpit", "airport", "jet", "wing", "propeller", "hangar", "altitude"},
      {"bird", "feather", "nest", "beak", "sparrow", "eagle", "parrot", "owl", "robin", "songbird"},
      {"horse", "saddle", "stable", "pony", "stallion", "mare", "gallop", "jockey", "hoof", "bridle"},
      {"ocean", "wave", "ship", "harbor", "sailor", "anchor", "tide", "coral", "dolphin", "whale"},
      {"mountain", "summit", "glacier", "valley", "climber", "rope", "peak", "snow", "ridge", "cliff"},
      {"music", "guitar", "piano", "melody", "concert", "violin", "drum", "rhythm", "singer", "chorus"},
      {"bread", "cheese", "kitchen", "recipe", "oven", "soup", "spice", "butter", "flour", "chef"},
      {"city", "street", "tower", "bridge", "traffic", "subway", "plaza", "avenue", "skyline", "mayor"},
  };
  require(topic < words.size(), ErrorCode::IndexOutOfRange, "planted topic out of range");
  return words[topic];
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> words = {"article", "history", "world", "people", "year",
                                                 "time",    "place",   "known", "part",   "famous"};
  return words;
}

namespace {

constexpr std::array<std::array<double, 3>, kMaxPlantedTopics> kColors = {{
    {0.90, 0.15, 0.15},
    {0.15, 0.80, 0.20},
    {0.20, 0.30, 0.90},
    {0.90, 0.85, 0.15},
    {0.85, 0.20, 0.85},
    {0.15, 0.85, 0.85},
    {0.95, 0.55, 0.10},
    {0.95, 0.95, 0.95},
}};

// Shape membership for a pixel offset (dx, dy) from the center, radius r.
bool inside_shape(std::size_t topic, double dx, double dy, double r) {
  switch (topic % 4) {
    case 0: return dx * dx + dy * dy <= r * r;                        // disc
    case 1: return std::abs(dx) <= r * 0.85 && std::abs(dy) <= r * 0.85;  // square
    case 2: return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) * 0.5;  // triangle
    default: return std::abs(dx) <= r * 0.3 || std::abs(dy) <= r * 0.3;   // cross
  }
}

}  // namespace

Tensor planted_image(std::size_t topic, std::size_t side, double noise, std::uint64_t seed) {
  require(topic < kMaxPlantedTopics, ErrorCode::IndexOutOfRange, "planted topic out of range");
  Rng rng(seed);
  Tensor img({3, side, side});
  const double bg = rng.uniform(0.3, 0.6);
  const double s = static_cast<double>(side);
  const double cx = s / 2 + rng.uniform(-s / 10, s / 10);
  const double cy = s / 2 + rng.uniform(-s / 10, s / 10);
  const double r = s * rng.uniform(0.2, 0.3);
  const auto& color = kColors[topic];
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const bool in = inside_shape(topic, static_cast<double>(x) + 0.5 - cx, static_cast<double>(y) + 0.5 - cy, r);
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = in ? color[c] : bg;
        img[(c * side + y) * side + x] = std::clamp(base + rng.uniform(-noise, noise), 0.0, 1.0);
      }
    }
  }
  return img;
}

PlantedDataset make_planted(const PlantedConfig& cfg) {
  require(cfg.topics >= 1 && cfg.topics <= kMaxPlantedTopics, ErrorCode::InvalidArgument,
          "planted topics must be in [1, 8]");
  PlantedDataset data;
  Rng rng(cfg.seed);
  const auto& fillers = filler_words();
  for (std::size_t d = 0; d < cfg.docs; ++d) {
    const std::size_t topic = d % cfg.topics;
    const auto& words = topic_words(topic);
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "%04zu", d);
    corpus::RawDocument doc;
    doc.doc_id = cfg.id_prefix + idbuf;

    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < cfg.tokens_per_doc; ++i) tokens.push_back(words[rng.below(words.size())]);
    for (const auto& f : fillers) {
      if (rng.bernoulli(cfg.filler_prob)) tokens.push_back(f);
    }
    rng.shuffle(tokens.begin(), tokens.end());
    std::string text = "The";
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      text += ' ';
      text += tokens[i];
      if (i % 7 == 6) text += i % 2 ? ". The" : ", and the";
    }
    doc.text = text + ".";

    for (std::size_t j = 0; j < cfg.images_per_doc; ++j) {
      const std::string path = doc.doc_id + "_" + std::to_string(j) + ".ppm";
      doc.image_paths.push_back(path);
      data.images.emplace(path, planted_image(topic, cfg.image_side, cfg.pixel_noise, derive_seed(cfg.seed, d, j)));
      data.image_topic.emplace(path, topic);
    }
    data.docs.push_back(std::move(doc));
    data.doc_topic.push_back(topic);
  }
  return data;
}

void write_dataset(const PlantedDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  io::write_atomic(dir / "corpus.jsonl", corpus::serialize_corpus(data.docs));
  for (const auto& [path, img] : data.images) image::write_ppm(dir / "images" / path, img);
  std::string labels;
  for (std::size_t i = 0; i < data.docs.size(); ++i) {
    labels += data.docs[i].doc_id + "," + std::to_string(data.doc_topic[i]) + "\n";
  }
  io::write_atomic(dir / "labels.csv", labels);
  std::string image_labels;
  for (const auto& [path, topic] : data.image_topic) image_labels += path + "," + std::to_string(topic) + "\n";
  io::write_atomic(dir / "image_labels.csv", image_labels);
}

std::vector<textnet::LabeledImage> make_stripes(std::size_t per_class, std::size_t side, std::uint64_t seed) {
  std::vector<textnet::LabeledImage> out;
  Rng rng(seed);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const std::size_t label = i % 2;
    Tensor img({3, side, side});
    std::array<double, 3> fg{}, bg{};
    for (auto& c : fg) c = rng.uniform(0.5, 1.0);
    for (auto& c : bg) c = rng.uniform(0.0, 0.4);
    const std::size_t period = 4 + rng.below(3);
    const std::size_t phase = rng.below(period);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const std::size_t coord = label == 0 ? y : x;
        const bool on = (coord + phase) % period < period / 2;
        for (std::size_t c = 0; c < 3; ++c) {
          img[(c * side + y) * side + x] = std::clamp((on ? fg[c] : bg[c]) + rng.uniform(-0.05, 0.05), 0.0, 1.0);
        }
      }
    }
    out.push_back({std::move(img), label});
  }
  return out;
}

}  // namespace ttn::synthetic
