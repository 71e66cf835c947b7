#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ttn/corpus.hpp"
#include "ttn/tensor.hpp"
#include "ttn/textnet.hpp"

namespace ttn::synthetic {

// Planted multi-modal data: topic t owns a 10-word vocabulary, a color and a
// shape. Every article is written from one topic's words plus shared filler
// words (present in most articles, so the max-df filter removes them) and
// stopwords; its images show the topic's shape in the topic's color.
struct PlantedConfig {
  std::size_t topics = 3;
  std::size_t docs = 200;
  std::size_t images_per_doc = 3;
  std::size_t tokens_per_doc = 40;
  double filler_prob = 0.7;
  std::size_t image_side = 40;
  double pixel_noise = 0.08;
  std::uint64_t seed = 1;
  std::string id_prefix = "doc";
};

inline constexpr std::size_t kMaxPlantedTopics = 8;

const std::vector<std::string>& topic_words(std::size_t topic);
const std::vector<std::string>& filler_words();

struct PlantedDataset {
  std::vector<corpus::RawDocument> docs;
  std::vector<std::size_t> doc_topic;                 // parallel to docs
  std::map<std::string, Tensor> images;               // relative path -> image
  std::map<std::string, std::size_t> image_topic;     // relative path -> topic
};

PlantedDataset make_planted(const PlantedConfig& cfg);

// (3, side, side) image of `topic`'s shape and color over a noisy background.
Tensor planted_image(std::size_t topic, std::size_t side, double noise, std::uint64_t seed);

// Writes corpus.jsonl, images under `images/`, and labels.csv (doc_id,topic)
// plus image_labels.csv (image path,topic). Image paths in the corpus are
// relative to the `images/` directory.
void write_dataset(const PlantedDataset& data, const std::filesystem::path& dir);

// Two classes of striped images: horizontal bars (0) and vertical bars (1),
// random colors.
std::vector<textnet::LabeledImage> make_stripes(std::size_t per_class, std::size_t side, std::uint64_t seed);

}  // namespace ttn::synthetic
