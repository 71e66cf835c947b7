#include "ttn/lda.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ttn/error.hpp"
#include "ttn/io.hpp"

namespace ttn::lda {

using corpus::BowDocument;

LdaHyperparams LdaHyperparams::with_defaults(std::size_t k) {
  LdaHyperparams h;
  h.k = k;
  h.alpha = 50.0 / static_cast<double>(k);
  h.beta_prior = 0.01;
  return h;
}

void LdaHyperparams::validate() const {
  require(k >= 2, ErrorCode::InvalidArgument, "k must be >= 2");
  require(alpha > 0.0 && std::isfinite(alpha), ErrorCode::InvalidArgument, "alpha must be > 0");
  require(beta_prior > 0.0 && std::isfinite(beta_prior), ErrorCode::InvalidArgument, "beta must be > 0");
  require(n_iters >= burn_in, ErrorCode::InvalidArgument, "n_iters must be >= burn_in");
}

nlohmann::json LdaHyperparams::to_json() const {
  return {{"k", k},
          {"alpha", alpha},
          {"beta", beta_prior},
          {"seed", seed},
          {"burn_in", burn_in},
          {"n_iters", n_iters},
          {"infer_iters", infer_iters},
          {"average_samples", average_samples}};
}

LdaHyperparams LdaHyperparams::from_json(const nlohmann::json& j) {
  LdaHyperparams h;
  h.k = j.at("k").get<std::size_t>();
  h.alpha = j.at("alpha").get<double>();
  h.beta_prior = j.at("beta").get<double>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.burn_in = j.at("burn_in").get<std::size_t>();
  h.n_iters = j.at("n_iters").get<std::size_t>();
  h.infer_iters = j.at("infer_iters").get<std::size_t>();
  h.average_samples = j.value("average_samples", false);
  return h;
}

void LdaModel::validate() const {
  require(phi.size() == k * vocab_size, ErrorCode::ShapeMismatch, "phi has wrong size");
  for (std::size_t t = 0; t < k; ++t) {
    double sum = 0.0;
    for (double p : phi_row(t)) {
      require(p > 0.0 && std::isfinite(p), ErrorCode::InvalidArgument, "phi entries must be positive");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= TopicDistribution::kSumTolerance, ErrorCode::InvalidArgument,
            "phi row does not sum to 1");
  }
  for (const auto& [id, theta] : doc_thetas) {
    require(theta.size() == k, ErrorCode::ShapeMismatch, "theta of '" + id + "' has wrong size");
  }
  require(words.empty() || words.size() == vocab_size, ErrorCode::ShapeMismatch, "word list size != V");
}

namespace {

std::vector<std::uint32_t> expand_tokens(const BowDocument& doc, std::size_t vocab_size) {
  std::vector<std::uint32_t> out;
  for (const auto& [w, c] : doc.counts) {
    require(w < vocab_size, ErrorCode::IndexOutOfRange, "word id outside vocabulary in '" + doc.doc_id + "'");
    out.insert(out.end(), c, static_cast<std::uint32_t>(w));
  }
  require(!out.empty(), ErrorCode::EmptyDocument, "document '" + doc.doc_id + "' has no in-vocabulary tokens");
  return out;
}

// Draws an index with probability proportional to weights[i].
std::size_t sample_discrete(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    u -= weights[i];
    if (u < 0.0) return i;
  }
  return weights.size() - 1;
}

std::vector<const BowDocument*> sorted_by_id(const std::vector<BowDocument>& docs) {
  std::vector<const BowDocument*> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(&d);
  std::stable_sort(out.begin(), out.end(),
                   [](const BowDocument* a, const BowDocument* b) { return a->doc_id < b->doc_id; });
  return out;
}

}  // namespace

GibbsState::GibbsState(const std::vector<BowDocument>& docs, std::size_t vocab_size, std::size_t k, Rng& rng)
    : vocab_size_(vocab_size), k_(k), n_dk_(docs.size() * k, 0), n_kw_(k * vocab_size, 0), n_k_(k, 0), weights_(k) {
  tokens_.reserve(docs.size());
  z_.reserve(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    tokens_.push_back(expand_tokens(docs[d], vocab_size));
    auto& z = z_.emplace_back(tokens_.back().size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const auto t = static_cast<std::uint32_t>(rng.below(k));
      z[i] = t;
      ++n_dk_[d * k + t];
      ++n_kw_[t * vocab_size + tokens_[d][i]];
      ++n_k_[t];
    }
  }
}

void GibbsState::sweep(double alpha, double beta, Rng& rng) {
  const double v_beta = static_cast<double>(vocab_size_) * beta;
  for (std::size_t d = 0; d < tokens_.size(); ++d) {
    const auto& words = tokens_[d];
    auto& z = z_[d];
    std::uint32_t* ndk = &n_dk_[d * k_];
    for (std::size_t i = 0; i < words.size(); ++i) {
      const std::uint32_t w = words[i];
      const std::uint32_t old = z[i];
      --ndk[old];
      --n_kw_[old * vocab_size_ + w];
      --n_k_[old];
      for (std::size_t t = 0; t < k_; ++t) {
        weights_[t] = (ndk[t] + alpha) * (n_kw_[t * vocab_size_ + w] + beta) / (n_k_[t] + v_beta);
      }
      const auto t = static_cast<std::uint32_t>(sample_discrete(weights_, rng));
      z[i] = t;
      ++ndk[t];
      ++n_kw_[t * vocab_size_ + w];
      ++n_k_[t];
    }
  }
}

bool GibbsState::counts_consistent() const {
  std::vector<std::uint32_t> dk(n_dk_.size(), 0), kw(n_kw_.size(), 0), kk(k_, 0);
  for (std::size_t d = 0; d < tokens_.size(); ++d) {
    for (std::size_t i = 0; i < tokens_[d].size(); ++i) {
      const auto t = z_[d][i];
      if (t >= k_) return false;
      ++dk[d * k_ + t];
      ++kw[t * vocab_size_ + tokens_[d][i]];
      ++kk[t];
    }
  }
  return dk == n_dk_ && kw == n_kw_ && kk == n_k_;
}

std::vector<double> GibbsState::phi(double beta) const {
  std::vector<double> out(k_ * vocab_size_);
  const double v_beta = static_cast<double>(vocab_size_) * beta;
  for (std::size_t t = 0; t < k_; ++t) {
    const double denom = n_k_[t] + v_beta;
    for (std::size_t w = 0; w < vocab_size_; ++w) out[t * vocab_size_ + w] = (n_kw_[t * vocab_size_ + w] + beta) / denom;
  }
  return out;
}

std::vector<double> GibbsState::theta(std::size_t d, double alpha) const {
  std::vector<double> out(k_);
  const double denom = static_cast<double>(tokens_[d].size()) + static_cast<double>(k_) * alpha;
  for (std::size_t t = 0; t < k_; ++t) out[t] = (n_dk_[d * k_ + t] + alpha) / denom;
  return out;
}

LdaModel train(const std::vector<BowDocument>& corpus, std::size_t vocab_size, const LdaHyperparams& hyper) {
  hyper.validate();
  require(!corpus.empty(), ErrorCode::InvalidArgument, "empty training corpus");
  require(vocab_size > 0, ErrorCode::InvalidArgument, "empty vocabulary");

  std::vector<BowDocument> docs;
  docs.reserve(corpus.size());
  for (const auto* d : sorted_by_id(corpus)) docs.push_back(*d);
  for (std::size_t i = 1; i < docs.size(); ++i) {
    require(docs[i].doc_id != docs[i - 1].doc_id, ErrorCode::DuplicateId, "duplicate doc id '" + docs[i].doc_id + "'");
  }

  Rng rng(hyper.seed);
  GibbsState state(docs, vocab_size, hyper.k, rng);

  std::vector<double> phi_sum;
  std::vector<std::vector<double>> theta_sum;
  std::size_t samples = 0;
  for (std::size_t it = 0; it < hyper.n_iters; ++it) {
    state.sweep(hyper.alpha, hyper.beta_prior, rng);
    if (hyper.average_samples && it >= hyper.burn_in) {
      auto phi = state.phi(hyper.beta_prior);
      if (phi_sum.empty()) {
        phi_sum.assign(phi.size(), 0.0);
        theta_sum.assign(docs.size(), std::vector<double>(hyper.k, 0.0));
      }
      for (std::size_t i = 0; i < phi.size(); ++i) phi_sum[i] += phi[i];
      for (std::size_t d = 0; d < docs.size(); ++d) {
        auto th = state.theta(d, hyper.alpha);
        for (std::size_t t = 0; t < hyper.k; ++t) theta_sum[d][t] += th[t];
      }
      ++samples;
    }
  }

  LdaModel model;
  model.vocab_size = vocab_size;
  model.k = hyper.k;
  model.hyper = hyper;
  if (samples > 0) {
    // Averages of row-stochastic rows are renormalized to absorb rounding.
    model.phi.resize(phi_sum.size());
    for (std::size_t t = 0; t < hyper.k; ++t) {
      auto row = std::span<const double>(phi_sum).subspan(t * vocab_size, vocab_size);
      const auto p = TopicDistribution::normalized(row);
      std::copy(p.probs().begin(), p.probs().end(), model.phi.begin() + static_cast<std::ptrdiff_t>(t * vocab_size));
    }
    for (std::size_t d = 0; d < docs.size(); ++d) {
      model.doc_thetas.emplace(docs[d].doc_id, TopicDistribution::normalized(theta_sum[d]));
    }
  } else {
    model.phi = state.phi(hyper.beta_prior);
    for (std::size_t d = 0; d < docs.size(); ++d) {
      model.doc_thetas.emplace(docs[d].doc_id, TopicDistribution(state.theta(d, hyper.alpha)));
    }
  }
  return model;
}

LdaModel train(const std::vector<BowDocument>& corpus, const corpus::Vocabulary& vocab, const LdaHyperparams& hyper) {
  auto model = train(corpus, vocab.size(), hyper);
  model.words = vocab.words();
  return model;
}

TopicDistribution infer(const BowDocument& doc, const LdaModel& model, std::uint64_t seed) {
  const auto words = expand_tokens(doc, model.vocab_size);
  const std::size_t k = model.k;
  const double alpha = model.hyper.alpha;
  Rng rng(seed);

  std::vector<std::uint32_t> z(words.size());
  std::vector<std::uint32_t> ndk(k, 0);
  for (auto& t : z) {
    t = static_cast<std::uint32_t>(rng.below(k));
    ++ndk[t];
  }

  const double denom = static_cast<double>(words.size()) + static_cast<double>(k) * alpha;
  auto current_theta = [&] {
    std::vector<double> th(k);
    for (std::size_t t = 0; t < k; ++t) th[t] = (ndk[t] + alpha) / denom;
    return th;
  };

  std::vector<double> weights(k);
  std::vector<double> theta_sum(k, 0.0);
  std::size_t samples = 0;
  const std::size_t avg_from = model.hyper.infer_iters / 2;
  for (std::size_t it = 0; it < model.hyper.infer_iters; ++it) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      --ndk[z[i]];
      for (std::size_t t = 0; t < k; ++t) weights[t] = (ndk[t] + alpha) * model.phi_at(t, words[i]);
      z[i] = static_cast<std::uint32_t>(sample_discrete(weights, rng));
      ++ndk[z[i]];
    }
    if (model.hyper.average_samples && it >= avg_from) {
      const auto th = current_theta();
      for (std::size_t t = 0; t < k; ++t) theta_sum[t] += th[t];
      ++samples;
    }
  }
  if (samples > 0) return TopicDistribution::normalized(theta_sum);
  return TopicDistribution(current_theta());
}

double perplexity(const std::vector<BowDocument>& corpus, const LdaModel& model, std::uint64_t seed) {
  require(!corpus.empty(), ErrorCode::InvalidArgument, "empty corpus");
  double log_lik = 0.0;
  double tokens = 0.0;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto& doc = corpus[d];
    const auto theta = infer(doc, model, derive_seed(seed, d));
    for (const auto& [w, c] : doc.counts) {
      double p = 0.0;
      for (std::size_t t = 0; t < model.k; ++t) p += theta[t] * model.phi_at(t, w);
      log_lik += static_cast<double>(c) * std::log(p);
      tokens += static_cast<double>(c);
    }
  }
  return std::exp(-log_lik / tokens);
}

std::vector<std::pair<std::string, double>> top_words(const LdaModel& model, std::size_t topic, std::size_t n) {
  require(topic < model.k, ErrorCode::IndexOutOfRange,
          "topic " + std::to_string(topic) + " out of range [0, " + std::to_string(model.k) + ")");
  auto name = [&](std::size_t w) { return model.words.empty() ? "#" + std::to_string(w) : model.words[w]; };
  std::vector<std::size_t> ids(model.vocab_size);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const auto row = model.phi_row(topic);
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    if (row[a] != row[b]) return row[a] > row[b];
    return name(a) < name(b);
  });
  ids.resize(std::min(n, ids.size()));
  std::vector<std::pair<std::string, double>> out;
  out.reserve(ids.size());
  for (auto w : ids) out.emplace_back(name(w), row[w]);
  return out;
}

std::string serialize(const LdaModel& model) {
  model.validate();
  std::uint64_t words_hash = io::fnv1a64("");
  for (const auto& w : model.words) {
    words_hash = io::fnv1a64(w, words_hash);
    words_hash = io::fnv1a64(std::string_view("\n", 1), words_hash);
  }
  nlohmann::json header = {{"format", "ttn-lda"},
                           {"version", 1},
                           {"K", model.k},
                           {"V", model.vocab_size},
                           {"hyperparams", model.hyper.to_json()},
                           {"word_list_hash", io::hex64(words_hash)},
                           {"words", model.words},
                           {"num_docs", model.doc_thetas.size()}};
  io::ByteWriter payload;
  payload.f64s(model.phi);
  for (const auto& [id, theta] : model.doc_thetas) {
    payload.str(id);
    payload.f64s(theta.probs());
  }
  return io::encode_container(io::kLdaMagic, header, payload.data());
}

LdaModel deserialize(std::string_view bytes) {
  auto c = io::decode_container(io::kLdaMagic, bytes);
  LdaModel m;
  std::size_t num_docs = 0;
  try {
    require(c.header.at("version").get<int>() == 1, ErrorCode::FormatVersionMismatch, "unsupported LDA version");
    m.k = c.header.at("K").get<std::size_t>();
    m.vocab_size = c.header.at("V").get<std::size_t>();
    m.hyper = LdaHyperparams::from_json(c.header.at("hyperparams"));
    m.words = c.header.at("words").get<std::vector<std::string>>();
    num_docs = c.header.at("num_docs").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("LDA header: ") + e.what());
  }
  io::ByteReader r(c.payload);
  require(m.k * m.vocab_size <= r.remaining() / 8, ErrorCode::CorruptFile, "phi payload truncated");
  m.phi.resize(m.k * m.vocab_size);
  r.f64s(m.phi);
  for (std::size_t d = 0; d < num_docs; ++d) {
    auto id = r.str();
    std::vector<double> theta(m.k);
    r.f64s(theta);
    try {
      m.doc_thetas.emplace(std::move(id), TopicDistribution(std::move(theta)));
    } catch (const Error& e) {
      fail(ErrorCode::CorruptFile, e.what());
    }
  }
  require(r.remaining() == 0, ErrorCode::CorruptFile, "trailing bytes after LDA payload");
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorCode::CorruptFile, e.what());
  }
  return m;
}

void save(const LdaModel& model, const std::filesystem::path& path) { io::write_atomic(path, serialize(model)); }

LdaModel load(const std::filesystem::path& path) { return deserialize(io::read_file(path)); }

std::string model_hash(const LdaModel& model) { return io::hex64(io::fnv1a64(serialize(model))); }

}  // namespace ttn::lda
