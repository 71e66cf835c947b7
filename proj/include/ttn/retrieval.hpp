#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ttn/corpus.hpp"
#include "ttn/lda.hpp"
#include "ttn/tensor.hpp"
#include "ttn/textnet.hpp"
#include "ttn/topic.hpp"

namespace ttn::retrieval {

enum class Modality { Text, Image };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view s);

inline constexpr double kDefaultEpsilon = 1e-10;

// D(p~ || q~) with x~ = (x + eps) / (1 + K eps) applied to both arguments.
double kl_divergence(const TopicDistribution& p, const TopicDistribution& q, double epsilon = kDefaultEpsilon);
// D(p~ || q~) + D(q~ || p~).
double symmetric_kl(const TopicDistribution& p, const TopicDistribution& q, double epsilon = kDefaultEpsilon);

struct IndexEntry {
  std::string item_id;
  Modality modality = Modality::Text;
  TopicDistribution embedding;
  std::string payload_ref;

  bool operator==(const IndexEntry&) const = default;
};

class RetrievalIndex {
 public:
  // Throws Empty, DuplicateId, or DimensionMismatch.
  static RetrievalIndex build(std::vector<IndexEntry> entries, double epsilon = kDefaultEpsilon);

  const std::vector<IndexEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t dim() const { return entries_.front().embedding.size(); }
  double epsilon() const { return epsilon_; }

  // JSON Lines: {"id", "modality", "embedding": [K floats], "payload_ref"}.
  std::string to_jsonl() const;
  static RetrievalIndex from_jsonl(std::string_view text, double epsilon = kDefaultEpsilon);
  void save(const std::filesystem::path& path) const;
  static RetrievalIndex load(const std::filesystem::path& path, double epsilon = kDefaultEpsilon);

 private:
  std::vector<IndexEntry> entries_;
  double epsilon_ = kDefaultEpsilon;
};

struct Hit {
  std::string item_id;
  double distance = 0.0;
};

enum class Direction { QueryToEntry, Symmetric };

// Entries of `target` sorted by D(query || entry) ascending, ties by item_id.
// Throws EmptyModality when the index holds no entry of that modality.
std::vector<Hit> query(const RetrievalIndex& index, const TopicDistribution& q, Modality target, std::size_t top_n,
                       Direction direction = Direction::QueryToEntry);

// "rank\tid\tdivergence" lines, rank starting at 1.
std::string hits_to_tsv(const std::vector<Hit>& hits);

// Text -> LDA fold-in topic distribution. Throws EmptyDocument when no token
// is in the vocabulary.
TopicDistribution embed_text(std::string_view text, const corpus::Vocabulary& vocab, const lda::LdaModel& model,
                             std::uint64_t seed = 0, const corpus::Preprocessor& prep = {});
TopicDistribution embed_image(const Tensor& image, const textnet::Checkpoint& ckpt, std::size_t n_crops = 10);

enum class Metric { Cosine, Euclidean };

// Cosine distance is 1 - cosine similarity.
std::vector<Hit> feature_nn(const std::vector<std::pair<std::string, std::vector<double>>>& db,
                            const std::vector<double>& q, Metric metric, std::size_t top_n);

}  // namespace ttn::retrieval
