#include "ttn/pipeline.hpp"

#include <algorithm>
#include <sstream>

#include "ttn/error.hpp"
#include "ttn/io.hpp"
#include "ttn/retrieval.hpp"
#include "ttn/rng.hpp"

namespace ttn::pipeline {

nlohmann::json RunConfig::to_json() const {
  return {{"paths", {{"corpus", corpus}, {"images", images}, {"output", output}}},
          {"vocab", {{"min_df", min_df}, {"max_df_ratio", max_df_ratio}}},
          {"lda", lda.to_json()},
          {"net", net},
          {"sgd", sgd.to_json()},
          {"augment", augment.to_json()},
          {"seed", seed},
          {"n_crops", n_crops}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      c.corpus = p.value("corpus", c.corpus);
      c.images = p.value("images", c.images);
      c.output = p.value("output", c.output);
    }
    if (j.contains("vocab")) {
      c.min_df = j.at("vocab").value("min_df", c.min_df);
      c.max_df_ratio = j.at("vocab").value("max_df_ratio", c.max_df_ratio);
    }
    if (j.contains("lda")) {
      auto merged = c.lda.to_json();
      merged.merge_patch(j.at("lda"));
      c.lda = lda::LdaHyperparams::from_json(merged);
    }
    if (j.contains("net")) c.net = j.at("net");
    if (j.contains("sgd")) {
      auto merged = c.sgd.to_json();
      merged.merge_patch(j.at("sgd"));
      c.sgd = nn::SgdConfig::from_json(merged);
    }
    if (j.contains("augment")) {
      auto merged = c.augment.to_json();
      merged.merge_patch(j.at("augment"));
      c.augment = textnet::AugmentConfig::from_json(merged);
    }
    c.seed = j.value("seed", c.seed);
    c.n_crops = j.value("n_crops", c.n_crops);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  return c;
}

nn::NetSpec RunConfig::net_spec(std::size_t k) const {
  if (net.is_string()) {
    require(net.get<std::string>() == "tiny", ErrorCode::InvalidArgument,
            "unknown network '" + net.get<std::string>() + "'");
    return nn::tiny_topic_net(k, augment.crop_size);
  }
  auto spec = nn::NetSpec::from_json(net);
  require(spec.output_dim() == k, ErrorCode::ShapeMismatch,
          "network outputs " + std::to_string(spec.output_dim()) + " values, model has " + std::to_string(k) +
              " topics");
  return spec;
}

RunConfig merge_config(const RunConfig& base, const nlohmann::json& patch) {
  auto j = base.to_json();
  j.merge_patch(patch);
  return RunConfig::from_json(j);
}

std::map<std::string, std::set<std::size_t>> parse_labels(std::string_view csv) {
  std::map<std::string, std::set<std::size_t>> out;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, cls;
    std::getline(fields, id, ',');
    require(!id.empty(), ErrorCode::CorruptFile, "labels line " + std::to_string(line_no) + ": empty id");
    auto& labels = out[id];
    while (std::getline(fields, cls, ',')) {
      try {
        std::size_t used = 0;
        const auto v = std::stoul(cls, &used);
        require(used == cls.size(), ErrorCode::CorruptFile, "bad class id");
        labels.insert(v);
      } catch (const std::logic_error&) {
        fail(ErrorCode::CorruptFile, "labels line " + std::to_string(line_no) + ": bad class id '" + cls + "'");
      }
    }
  }
  return out;
}

std::map<std::string, std::set<std::size_t>> load_labels(const std::filesystem::path& path) {
  return parse_labels(io::read_file(path));
}

std::string serialize_features(const FeatureSet& f) {
  require(f.ids.size() == f.rows.size(), ErrorCode::DimensionMismatch, "ids/rows length mismatch");
  const std::size_t dim = f.rows.empty() ? 0 : f.rows.front().size();
  io::ByteWriter w;
  for (const auto& r : f.rows) {
    require(r.size() == dim, ErrorCode::DimensionMismatch, "ragged feature rows");
    w.f64s(r);
  }
  nlohmann::json header = {{"format", "ttn-features"}, {"version", 1}, {"ids", f.ids}, {"dim", dim}};
  return io::encode_container(io::kNetMagic, header, w.data());
}

FeatureSet deserialize_features(std::string_view bytes) {
  auto c = io::decode_container(io::kNetMagic, bytes);
  FeatureSet f;
  std::size_t dim = 0;
  try {
    require(c.header.at("format").get<std::string>() == "ttn-features", ErrorCode::FormatVersionMismatch,
            "not a feature file");
    f.ids = c.header.at("ids").get<std::vector<std::string>>();
    dim = c.header.at("dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("feature header: ") + e.what());
  }
  io::ByteReader r(c.payload);
  for (std::size_t i = 0; i < f.ids.size(); ++i) {
    std::vector<double> row(dim);
    r.f64s(row);
    f.rows.push_back(std::move(row));
  }
  require(r.remaining() == 0, ErrorCode::CorruptFile, "trailing bytes after features");
  return f;
}

std::vector<std::size_t> map_topics_to_labels(const lda::LdaModel& model,
                                              const std::map<std::string, std::size_t>& doc_labels) {
  std::vector<std::map<std::size_t, std::size_t>> votes(model.k);
  for (const auto& [id, theta] : model.doc_thetas) {
    auto it = doc_labels.find(id);
    if (it != doc_labels.end()) ++votes[theta.argmax()][it->second];
  }
  std::vector<std::size_t> mapping(model.k);
  for (std::size_t t = 0; t < model.k; ++t) {
    mapping[t] = t;
    std::size_t best = 0;
    for (const auto& [label, n] : votes[t]) {
      if (n > best) {
        best = n;
        mapping[t] = label;
      }
    }
  }
  return mapping;
}

PlantedExperimentConfig PlantedExperimentConfig::defaults() {
  PlantedExperimentConfig c;
  c.lda = lda::LdaHyperparams::with_defaults(3);
  c.lda.alpha = 0.1;
  c.lda.n_iters = 200;
  c.lda.burn_in = 100;
  c.lda.infer_iters = 50;
  c.lda.seed = 3;
  c.sgd = {0.01, 0.1, 1500, 0.9, 16, 2000};
  c.augment = {32, 0.5, 0};
  return c;
}

PlantedExperimentResult run_planted_experiment(const PlantedExperimentConfig& cfg) {
  const auto train_data = synthetic::make_planted(cfg.train_data);
  const auto heldout = synthetic::make_planted(cfg.heldout_data);

  const auto vocab = corpus::build_vocabulary(train_data.docs, cfg.min_df, cfg.max_df_ratio);
  std::vector<corpus::BowDocument> bows;
  std::map<std::string, std::size_t> doc_labels;
  for (std::size_t i = 0; i < train_data.docs.size(); ++i) {
    bows.push_back(corpus::doc_to_bow(train_data.docs[i], vocab));
    doc_labels[train_data.docs[i].doc_id] = train_data.doc_topic[i];
  }
  const auto model = lda::train(bows, vocab, cfg.lda);
  const auto topic_label = map_topics_to_labels(model, doc_labels);

  std::vector<textnet::TrainingPair> pairs;
  for (const auto& doc : train_data.docs) {
    const auto& theta = model.doc_thetas.at(doc.doc_id);
    for (const auto& path : doc.image_paths) pairs.push_back({train_data.images.at(path), theta, doc.doc_id, path});
  }

  textnet::TrainOptions opts;
  opts.threads = cfg.threads;
  opts.lda_hash = lda::model_hash(model);
  const auto spec = nn::tiny_topic_net(model.k, cfg.augment.crop_size);
  auto trained = textnet::train(pairs, spec, cfg.sgd, cfg.augment, cfg.seed, opts);

  PlantedExperimentResult res;
  res.pairs = pairs.size();
  res.history = trained.history;
  const std::size_t n = res.history.size();
  res.window = std::max<std::size_t>(1, std::min<std::size_t>(20, n / 4));
  if (n > 0) {
    for (std::size_t i = 0; i < res.window; ++i) {
      res.initial_loss += res.history[i].loss;
      res.final_loss += res.history[n - 1 - i].loss;
    }
    res.initial_loss /= static_cast<double>(res.window);
    res.final_loss /= static_cast<double>(res.window);
  }
  const auto& ckpt = trained.checkpoint;
  res.checkpoint_bytes = textnet::serialize(ckpt);

  std::vector<retrieval::IndexEntry> entries;
  std::size_t correct = 0;
  for (const auto& [path, img] : heldout.images) {
    const auto emb = textnet::predict_topics(ckpt, img, cfg.n_crops);
    if (topic_label[emb.argmax()] == heldout.image_topic.at(path)) ++correct;
    entries.push_back({path, retrieval::Modality::Image, emb, path});
  }
  res.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(heldout.images.size());

  const auto index = retrieval::RetrievalIndex::build(entries);
  std::vector<double> aps;
  for (std::size_t t = 0; t < cfg.train_data.topics; ++t) {
    for (const auto& word : synthetic::topic_words(t)) {
      const auto q = retrieval::embed_text(word, vocab, model, derive_seed(cfg.seed, 5, aps.size()));
      const auto hits = retrieval::query(index, q, retrieval::Modality::Image, index.size());
      std::vector<double> scores;
      std::vector<int> rel;
      for (const auto& h : hits) {
        scores.push_back(-h.distance);
        rel.push_back(heldout.image_topic.at(h.item_id) == t ? 1 : 0);
      }
      aps.push_back(eval::average_precision(scores, rel));
      res.rankings += "# query " + word + "\n" + retrieval::hits_to_tsv(hits);
    }
  }
  res.queries = aps.size();
  res.text_query_map = eval::mean_ap(aps);
  return res;
}

double validation_purity(const lda::LdaModel& model, const std::vector<corpus::BowDocument>& val,
                         const std::vector<std::size_t>& val_labels, std::uint64_t seed) {
  require(val.size() == val_labels.size(), ErrorCode::DimensionMismatch, "validation docs/labels mismatch");
  std::vector<std::size_t> clusters;
  clusters.reserve(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) clusters.push_back(lda::infer(val[i], model, derive_seed(seed, i)).argmax());
  return eval::clustering_f_measure(clusters, val_labels);
}

}  // namespace ttn::pipeline
