#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "ttn/corpus.hpp"
#include "ttn/eval.hpp"
#include "ttn/lda.hpp"
#include "ttn/nn.hpp"
#include "ttn/synthetic.hpp"
#include "ttn/textnet.hpp"

namespace ttn::pipeline {

// Effective configuration of a run. Built from defaults, then a JSON config
// file, then command-line overrides (each a JSON merge patch).
struct RunConfig {
  std::string corpus;
  std::string images;
  std::string output;
  std::size_t min_df = 20;
  double max_df_ratio = 0.5;
  lda::LdaHyperparams lda = lda::LdaHyperparams::with_defaults(40);
  nlohmann::json net = "tiny";  // "tiny" or an inline spec object
  nn::SgdConfig sgd = nn::SgdConfig::pretrain();
  textnet::AugmentConfig augment;
  std::uint64_t seed = 0;
  std::size_t n_crops = 10;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  // Builds the network spec for k topics.
  nn::NetSpec net_spec(std::size_t k) const;
};

RunConfig merge_config(const RunConfig& base, const nlohmann::json& patch);

// item_id,class_id[,class_id...]
std::map<std::string, std::set<std::size_t>> parse_labels(std::string_view csv);
std::map<std::string, std::set<std::size_t>> load_labels(const std::filesystem::path& path);

// Feature container: weights-file magic, header {"format": "ttn-features",
// "ids": [...], "dim": D}, then N x D float64 rows.
struct FeatureSet {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
};
std::string serialize_features(const FeatureSet& f);
FeatureSet deserialize_features(std::string_view bytes);

// Majority planted label of the training documents whose argmax topic is t;
// topics no document prefers map to their own index.
std::vector<std::size_t> map_topics_to_labels(const lda::LdaModel& model,
                                              const std::map<std::string, std::size_t>& doc_labels);

struct PlantedExperimentConfig {
  synthetic::PlantedConfig train_data{3, 200, 3, 40, 0.7, 40, 0.08, 11, "doc"};
  synthetic::PlantedConfig heldout_data{3, 30, 3, 40, 0.7, 40, 0.08, 12, "val"};
  std::size_t min_df = 20;
  double max_df_ratio = 0.5;
  lda::LdaHyperparams lda;
  nn::SgdConfig sgd;
  textnet::AugmentConfig augment;
  std::uint64_t seed = 7;
  std::size_t threads = 1;
  std::size_t n_crops = 10;

  static PlantedExperimentConfig defaults();
};

struct PlantedExperimentResult {
  std::size_t pairs = 0;
  std::vector<textnet::TrainRecord> history;
  double initial_loss = 0.0;  // mean of the first `window` iterations
  double final_loss = 0.0;    // mean of the last `window` iterations
  std::size_t window = 0;
  double heldout_accuracy = 0.0;
  double text_query_map = 0.0;
  std::size_t queries = 0;
  std::string checkpoint_bytes;
  std::string rankings;  // concatenated query TSVs
};

PlantedExperimentResult run_planted_experiment(const PlantedExperimentConfig& cfg);

// Validation purity of an LDA model: documents are clustered by argmax of
// the inferred theta and compared with their labels via
// eval::clustering_f_measure.
double validation_purity(const lda::LdaModel& model, const std::vector<corpus::BowDocument>& val,
                         const std::vector<std::size_t>& val_labels, std::uint64_t seed);

}  // namespace ttn::pipeline
