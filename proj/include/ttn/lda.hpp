#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ttn/corpus.hpp"
#include "ttn/rng.hpp"
#include "ttn/topic.hpp"

namespace ttn::lda {

struct LdaHyperparams {
  std::size_t k = 40;
  double alpha = 50.0 / 40.0;
  double beta_prior = 0.01;
  std::uint64_t seed = 0;
  std::size_t burn_in = 100;
  std::size_t n_iters = 500;
  std::size_t infer_iters = 100;
  // Average theta/phi over post-burn-in sweeps instead of using the last sample.
  bool average_samples = false;

  // alpha = 50 / k, beta = 0.01.
  static LdaHyperparams with_defaults(std::size_t k);
  void validate() const;

  nlohmann::json to_json() const;
  static LdaHyperparams from_json(const nlohmann::json& j);
  bool operator==(const LdaHyperparams&) const = default;
};

struct LdaModel {
  std::size_t vocab_size = 0;
  std::size_t k = 0;
  std::vector<double> phi;  // k x vocab_size, row-major, rows sum to 1
  LdaHyperparams hyper;
  std::map<std::string, TopicDistribution> doc_thetas;
  // Dictionary the model was trained on; may be empty for hand-built models.
  std::vector<std::string> words;

  std::span<const double> phi_row(std::size_t topic) const {
    return {phi.data() + topic * vocab_size, vocab_size};
  }
  double phi_at(std::size_t topic, std::size_t word) const { return phi[topic * vocab_size + word]; }

  // Row-stochastic checks on phi and theta; throws InvalidArgument.
  void validate() const;
  bool operator==(const LdaModel&) const = default;
};

// Collapsed Gibbs sampler state. Documents keep their token list expanded
// from the bag of words in ascending word-id order.
class GibbsState {
 public:
  GibbsState(const std::vector<corpus::BowDocument>& docs, std::size_t vocab_size, std::size_t k, Rng& rng);

  // One pass over every token of every document, in order.
  void sweep(double alpha, double beta, Rng& rng);

  std::size_t num_docs() const { return tokens_.size(); }
  std::size_t k() const { return k_; }
  std::size_t vocab_size() const { return vocab_size_; }
  const std::vector<std::vector<std::uint32_t>>& tokens() const { return tokens_; }
  const std::vector<std::vector<std::uint32_t>>& assignments() const { return z_; }
  std::uint32_t n_dk(std::size_t d, std::size_t k) const { return n_dk_[d * k_ + k]; }
  std::uint32_t n_kw(std::size_t k, std::size_t w) const { return n_kw_[k * vocab_size_ + w]; }
  std::uint32_t n_k(std::size_t k) const { return n_k_[k]; }

  // Recounts every matrix from the assignments and compares exactly.
  bool counts_consistent() const;

  std::vector<double> phi(double beta) const;
  std::vector<double> theta(std::size_t d, double alpha) const;

 private:
  std::size_t vocab_size_;
  std::size_t k_;
  std::vector<std::vector<std::uint32_t>> tokens_;
  std::vector<std::vector<std::uint32_t>> z_;
  std::vector<std::uint32_t> n_dk_;
  std::vector<std::uint32_t> n_kw_;
  std::vector<std::uint32_t> n_k_;
  std::vector<double> weights_;
};

// Documents are processed in doc_id order, so corpus order does not matter.
LdaModel train(const std::vector<corpus::BowDocument>& corpus, std::size_t vocab_size, const LdaHyperparams& hyper);
LdaModel train(const std::vector<corpus::BowDocument>& corpus, const corpus::Vocabulary& vocab,
               const LdaHyperparams& hyper);

// Fold-in Gibbs with phi held fixed.
TopicDistribution infer(const corpus::BowDocument& doc, const LdaModel& model, std::uint64_t seed);

// exp(-sum log P(w|d) / N) with P(w|d) = sum_k theta_dk phi_kw and theta
// from infer() seeded per document.
double perplexity(const std::vector<corpus::BowDocument>& corpus, const LdaModel& model, std::uint64_t seed = 0);

std::vector<std::pair<std::string, double>> top_words(const LdaModel& model, std::size_t topic, std::size_t n);

std::string serialize(const LdaModel& model);
LdaModel deserialize(std::string_view bytes);
void save(const LdaModel& model, const std::filesystem::path& path);
LdaModel load(const std::filesystem::path& path);

// Stable fingerprint of the serialized model.
std::string model_hash(const LdaModel& model);

}  // namespace ttn::lda
