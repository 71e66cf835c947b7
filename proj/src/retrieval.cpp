#include "ttn/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ttn/error.hpp"
#include "ttn/io.hpp"

namespace ttn::retrieval {

std::string_view modality_name(Modality m) { return m == Modality::Text ? "text" : "image"; }

Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::Text;
  if (s == "image") return Modality::Image;
  fail(ErrorCode::InvalidArgument, "unknown modality '" + std::string(s) + "'");
}

double kl_divergence(const TopicDistribution& p, const TopicDistribution& q, double epsilon) {
  require(p.size() == q.size(), ErrorCode::DimensionMismatch,
          "distributions of size " + std::to_string(p.size()) + " and " + std::to_string(q.size()));
  require(epsilon > 0.0, ErrorCode::InvalidArgument, "epsilon must be > 0");
  const double norm = 1.0 + static_cast<double>(p.size()) * epsilon;
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double ps = (p[i] + epsilon) / norm;
    const double qs = (q[i] + epsilon) / norm;
    d += ps * std::log(ps / qs);
  }
  // Rounding can leave a tiny negative residue for p ~= q.
  return std::max(d, 0.0);
}

double symmetric_kl(const TopicDistribution& p, const TopicDistribution& q, double epsilon) {
  return kl_divergence(p, q, epsilon) + kl_divergence(q, p, epsilon);
}

RetrievalIndex RetrievalIndex::build(std::vector<IndexEntry> entries, double epsilon) {
  require(!entries.empty(), ErrorCode::Empty, "index needs at least one entry");
  require(epsilon > 0.0, ErrorCode::InvalidArgument, "epsilon must be > 0");
  std::set<std::string, std::less<>> ids;
  const std::size_t k = entries.front().embedding.size();
  for (const auto& e : entries) {
    require(ids.insert(e.item_id).second, ErrorCode::DuplicateId, "duplicate item id '" + e.item_id + "'");
    require(e.embedding.size() == k && k > 0, ErrorCode::DimensionMismatch,
            "embedding of '" + e.item_id + "' has size " + std::to_string(e.embedding.size()));
  }
  RetrievalIndex idx;
  idx.entries_ = std::move(entries);
  idx.epsilon_ = epsilon;
  return idx;
}

std::string RetrievalIndex::to_jsonl() const {
  std::string out;
  for (const auto& e : entries_) {
    nlohmann::json j = {{"id", e.item_id},
                        {"modality", modality_name(e.modality)},
                        {"embedding", e.embedding.probs()},
                        {"payload_ref", e.payload_ref}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

RetrievalIndex RetrievalIndex::from_jsonl(std::string_view text, double epsilon) {
  std::vector<IndexEntry> entries;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries.push_back({j.at("id").get<std::string>(), parse_modality(j.at("modality").get<std::string>()),
                         TopicDistribution(j.at("embedding").get<std::vector<double>>()),
                         j.value("payload_ref", std::string())});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::CorruptFile, std::string("index line: ") + e.what());
    }
  }
  return build(std::move(entries), epsilon);
}

void RetrievalIndex::save(const std::filesystem::path& path) const { io::write_atomic(path, to_jsonl()); }

RetrievalIndex RetrievalIndex::load(const std::filesystem::path& path, double epsilon) {
  return from_jsonl(io::read_file(path), epsilon);
}

namespace {

void rank(std::vector<Hit>& hits, std::size_t top_n) {
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.item_id < b.item_id;
  });
  if (hits.size() > top_n) hits.resize(top_n);
}

}  // namespace

std::vector<Hit> query(const RetrievalIndex& index, const TopicDistribution& q, Modality target, std::size_t top_n,
                       Direction direction) {
  require(top_n >= 1, ErrorCode::InvalidArgument, "top_n must be >= 1");
  require(q.size() == index.dim(), ErrorCode::DimensionMismatch,
          "query has " + std::to_string(q.size()) + " topics, index has " + std::to_string(index.dim()));
  std::vector<Hit> hits;
  for (const auto& e : index.entries()) {
    if (e.modality != target) continue;
    const double d = direction == Direction::Symmetric ? symmetric_kl(q, e.embedding, index.epsilon())
                                                       : kl_divergence(q, e.embedding, index.epsilon());
    hits.push_back({e.item_id, d});
  }
  require(!hits.empty(), ErrorCode::EmptyModality,
          "index has no " + std::string(modality_name(target)) + " entries");
  rank(hits, top_n);
  return hits;
}

std::string hits_to_tsv(const std::vector<Hit>& hits) {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < hits.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", hits[i].distance);
    out += std::to_string(i + 1) + "\t" + hits[i].item_id + "\t" + buf + "\n";
  }
  return out;
}

TopicDistribution embed_text(std::string_view text, const corpus::Vocabulary& vocab, const lda::LdaModel& model,
                             std::uint64_t seed, const corpus::Preprocessor& prep) {
  require(vocab.size() == model.vocab_size, ErrorCode::DimensionMismatch, "vocabulary does not match the model");
  const corpus::RawDocument doc{"query", std::string(text), {}};
  return lda::infer(corpus::doc_to_bow(doc, vocab, prep), model, seed);
}

TopicDistribution embed_image(const Tensor& image, const textnet::Checkpoint& ckpt, std::size_t n_crops) {
  return textnet::predict_topics(ckpt, image, n_crops);
}

std::vector<Hit> feature_nn(const std::vector<std::pair<std::string, std::vector<double>>>& db,
                            const std::vector<double>& q, Metric metric, std::size_t top_n) {
  require(top_n >= 1, ErrorCode::InvalidArgument, "top_n must be >= 1");
  auto sq_norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
  };
  const double qn = sq_norm(q);
  std::vector<Hit> hits;
  hits.reserve(db.size());
  for (const auto& [id, v] : db) {
    require(v.size() == q.size(), ErrorCode::DimensionMismatch,
            "feature '" + id + "' has dimension " + std::to_string(v.size()) + ", query " + std::to_string(q.size()));
    double d = 0.0;
    if (metric == Metric::Euclidean) {
      for (std::size_t i = 0; i < v.size(); ++i) d += (v[i] - q[i]) * (v[i] - q[i]);
      d = std::sqrt(d);
    } else {
      double dotp = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) dotp += v[i] * q[i];
      // sqrt of the product: exactly |v|^2 when v == q, so self-distance is 0
      const double denom = std::sqrt(sq_norm(v) * qn);
      d = denom > 0.0 ? std::max(0.0, 1.0 - dotp / denom) : 1.0;
    }
    hits.push_back({id, d});
  }
  rank(hits, top_n);
  return hits;
}

}  // namespace ttn::retrieval
