// ttn: command-line front end for the text-supervised topic network pipeline.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ttn/corpus.hpp"
#include "ttn/error.hpp"
#include "ttn/eval.hpp"
#include "ttn/image.hpp"
#include "ttn/io.hpp"
#include "ttn/lda.hpp"
#include "ttn/nn.hpp"
#include "ttn/pipeline.hpp"
#include "ttn/retrieval.hpp"
#include "ttn/rng.hpp"
#include "ttn/synthetic.hpp"
#include "ttn/textnet.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ttn;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return kExitUsage;
    case ErrorCode::NonFiniteInput: return kExitNumeric;
    default: return kExitData;
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
void set_if(json& patch, const std::string& pointer, const std::optional<T>& v) {
  if (v) patch[json::json_pointer(pointer)] = *v;
}

json read_json_file(const std::string& path) {
  const auto text = io::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, "config '" + path + "': " + e.what());
  }
}

// Defaults <- config file <- command-line flags. The default alpha is 50/K
// for whatever K wins, unless alpha itself was given somewhere.
pipeline::RunConfig effective_config(const std::string& config_path, const json& flags) {
  json patch = config_path.empty() ? json::object() : read_json_file(config_path);
  require(patch.is_object(), ErrorCode::InvalidArgument, "config must be a JSON object");
  patch.merge_patch(flags);
  auto cfg = pipeline::merge_config(pipeline::RunConfig{}, patch);
  if (!patch.contains(json::json_pointer("/lda/alpha"))) cfg.lda.alpha = 50.0 / static_cast<double>(cfg.lda.k);
  return cfg;
}

// The merged configuration is written next to the primary artifact.
void echo_config(const pipeline::RunConfig& cfg, const fs::path& artifact) {
  io::write_atomic(artifact.string() + ".config.json", cfg.to_json().dump(2) + "\n");
}

corpus::Preprocessor preprocessor(const std::string& stopwords_path) {
  corpus::Preprocessor p;
  if (!stopwords_path.empty()) p.stopwords = corpus::load_stopwords(stopwords_path);
  return p;
}

corpus::Vocabulary load_vocab(const std::string& path) {
  try {
    return corpus::Vocabulary::from_json(json::parse(io::read_file(path)));
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, "vocabulary '" + path + "': " + e.what());
  }
}

corpus::Vocabulary vocab_from_model(const lda::LdaModel& m) {
  require(m.words.size() == m.vocab_size, ErrorCode::CorruptFile, "model file carries no word list");
  return corpus::Vocabulary(m.words, std::vector<std::size_t>(m.words.size(), 0), 1, 1.0, 0);
}

std::vector<corpus::BowDocument> to_bows(const std::vector<corpus::RawDocument>& docs, const corpus::Vocabulary& v,
                                         const corpus::Preprocessor& prep) {
  std::vector<corpus::BowDocument> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(corpus::doc_to_bow(d, v, prep));
  return out;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    io::write_atomic(path, text);
  }
}

std::string join(const std::vector<double>& v, char sep = '\t') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? std::string(1, sep) : "") + num(v[i]);
  return s + "\n";
}

// First CSV column of every non-empty line.
std::vector<std::string> first_column(const std::string& path) {
  std::vector<std::string> out;
  for (const auto& [id, labels] : pipeline::load_labels(path)) out.push_back(id);
  return out;
}

std::vector<eval::LabeledFeature> labeled_features(const std::string& feats_path, const std::string& labels_path,
                                                   bool normalize) {
  const auto feats = pipeline::deserialize_features(io::read_file(feats_path));
  const auto labels = pipeline::load_labels(labels_path);
  std::vector<eval::LabeledFeature> out;
  for (std::size_t i = 0; i < feats.ids.size(); ++i) {
    const auto it = labels.find(feats.ids[i]);
    require(it != labels.end(), ErrorCode::CorruptFile, "no label for feature '" + feats.ids[i] + "'");
    out.push_back({normalize ? eval::l2_normalized(feats.rows[i]) : feats.rows[i], it->second});
  }
  return out;
}

void warn(const std::string& msg) { std::cerr << "ttn: warning: " << msg << "\n"; }

std::string loss_csv(const std::vector<textnet::TrainRecord>& history) {
  std::string s = "iter,lr,loss\n";
  for (const auto& r : history) s += std::to_string(r.iter) + "," + num(r.lr) + "," + num(r.loss) + "\n";
  return s;
}

// ---- subcommands ---------------------------------------------------------

struct SynthArgs {
  std::string out;
  synthetic::PlantedConfig cfg;
};

void run_synth(const SynthArgs& a) {
  const auto data = synthetic::make_planted(a.cfg);
  synthetic::write_dataset(data, a.out);
  std::string queries;
  for (std::size_t t = 0; t < a.cfg.topics; ++t)
    for (const auto& w : synthetic::topic_words(t)) queries += w + "," + std::to_string(t) + "\n";
  io::write_atomic(fs::path(a.out) / "queries.csv", queries);
  std::cout << "wrote " << data.docs.size() << " documents and " << data.images.size() << " images to " << a.out
            << "\n";
}

struct VocabArgs {
  std::string corpus, out, config, stopwords;
  std::optional<std::size_t> min_df;
  std::optional<double> max_df_ratio;
};

void run_vocab_build(const VocabArgs& a) {
  json flags = {{"paths", {{"corpus", a.corpus}, {"output", a.out}}}};
  set_if(flags, "/vocab/min_df", a.min_df);
  set_if(flags, "/vocab/max_df_ratio", a.max_df_ratio);
  const auto cfg = effective_config(a.config, flags);
  const auto docs = corpus::load_corpus(cfg.corpus);
  const auto vocab = corpus::build_vocabulary(docs, cfg.min_df, cfg.max_df_ratio, preprocessor(a.stopwords));
  io::write_atomic(a.out, vocab.to_json().dump() + "\n");
  echo_config(cfg, a.out);
  std::cout << "vocabulary: " << vocab.size() << " words from " << docs.size() << " documents\n";
}

struct LdaTrainArgs {
  std::string corpus, vocab, out, config, stopwords;
  std::optional<std::size_t> k, iters, burn_in, infer_iters;
  std::optional<double> alpha, beta;
  std::optional<std::uint64_t> seed;
  bool average = false;
};

void run_lda_train(const LdaTrainArgs& a) {
  json flags = {{"paths", {{"corpus", a.corpus}, {"output", a.out}}}};
  set_if(flags, "/lda/k", a.k);
  set_if(flags, "/lda/alpha", a.alpha);
  set_if(flags, "/lda/beta", a.beta);
  set_if(flags, "/lda/n_iters", a.iters);
  set_if(flags, "/lda/burn_in", a.burn_in);
  set_if(flags, "/lda/infer_iters", a.infer_iters);
  set_if(flags, "/lda/seed", a.seed);
  if (a.average) flags["lda"]["average_samples"] = true;
  auto cfg = effective_config(a.config, flags);
  if (cfg.lda.burn_in > cfg.lda.n_iters) cfg.lda.burn_in = cfg.lda.n_iters / 2;
  const auto vocab = load_vocab(a.vocab);
  const auto bows = to_bows(corpus::load_corpus(cfg.corpus), vocab, preprocessor(a.stopwords));
  const auto model = lda::train(bows, vocab, cfg.lda);
  lda::save(model, a.out);
  echo_config(cfg, a.out);
  std::cout << "LDA: K=" << model.k << " V=" << model.vocab_size << " docs=" << bows.size()
            << " alpha=" << num(cfg.lda.alpha) << " hash=" << lda::model_hash(model) << "\n";
}

void run_lda_topics(const std::string& model_path, std::size_t top_n, bool probs) {
  const auto m = lda::load(model_path);
  std::string out;
  for (std::size_t t = 0; t < m.k; ++t) {
    out += std::to_string(t);
    for (const auto& [w, p] : lda::top_words(m, t, top_n)) out += "\t" + (probs ? w + ":" + num(p) : w);
    out += "\n";
  }
  std::cout << out;
}

void run_lda_infer(const std::string& model_path, const std::string& text, std::uint64_t seed,
                   const std::string& stopwords) {
  const auto m = lda::load(model_path);
  const auto theta = retrieval::embed_text(text, vocab_from_model(m), m, seed, preprocessor(stopwords));
  std::cout << join(theta.probs());
}

void run_lda_perplexity(const std::string& model_path, const std::string& corpus_path, std::uint64_t seed,
                        const std::string& stopwords) {
  const auto m = lda::load(model_path);
  const auto bows = to_bows(corpus::load_corpus(corpus_path), vocab_from_model(m), preprocessor(stopwords));
  std::cout << num(lda::perplexity(bows, m, seed)) << "\n";
}

struct NetTrainArgs {
  std::string corpus, model, out, config, images, spec, log, resume;
  std::optional<std::size_t> iters, batch, lr_step, crop;
  std::optional<double> lr, lr_decay, momentum, mirror_prob;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::size_t checkpoint_every = 0;
  std::size_t log_every = 100;
};

void run_net_train(const NetTrainArgs& a) {
  json flags = {{"paths", {{"corpus", a.corpus}, {"output", a.out}}}};
  if (!a.images.empty()) flags["paths"]["images"] = a.images;
  if (!a.spec.empty()) flags["net"] = a.spec == "tiny" ? json("tiny") : read_json_file(a.spec);
  set_if(flags, "/sgd/max_iters", a.iters);
  set_if(flags, "/sgd/batch_size", a.batch);
  set_if(flags, "/sgd/base_lr", a.lr);
  set_if(flags, "/sgd/lr_step", a.lr_step);
  set_if(flags, "/sgd/lr_decay_factor", a.lr_decay);
  set_if(flags, "/sgd/momentum", a.momentum);
  set_if(flags, "/augment/crop_size", a.crop);
  set_if(flags, "/augment/mirror_prob", a.mirror_prob);
  set_if(flags, "/seed", a.seed);
  auto cfg = effective_config(a.config, flags);
  if (cfg.images.empty()) cfg.images = (fs::path(cfg.corpus).parent_path() / "images").string();

  const auto model = lda::load(a.model);
  const auto docs = corpus::load_corpus(cfg.corpus);
  const auto pairs = textnet::make_pairs(docs, model, cfg.images, warn);

  const std::string log_path = a.log.empty() ? a.out + ".loss.csv" : a.log;
  std::vector<textnet::TrainRecord> history;
  textnet::TrainOptions opts;
  opts.threads = a.threads;
  opts.lda_hash = lda::model_hash(model);
  opts.checkpoint_every = a.checkpoint_every;
  opts.on_iteration = [&](const textnet::TrainRecord& r) {
    history.push_back(r);
    if (a.log_every > 0 && (r.iter + 1) % a.log_every == 0)
      std::cerr << "iter " << r.iter + 1 << " lr " << num(r.lr) << " loss " << num(r.loss) << "\n";
  };
  opts.on_checkpoint = [&](const textnet::Checkpoint& c) {
    textnet::save(c, a.out);
    io::write_atomic(log_path, loss_csv(history));
  };

  textnet::TrainResult result;
  if (!a.resume.empty()) {
    auto start = textnet::load(a.resume);
    require(start.lda_hash == opts.lda_hash, ErrorCode::InvalidArgument,
            "checkpoint was trained against a different LDA model");
    if (a.iters) start.sgd.max_iters = *a.iters;
    if (fs::exists(log_path)) {
      // keep the log rows that precede the resumed iteration
      std::istringstream in(io::read_file(log_path));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        std::istringstream row(line);
        textnet::TrainRecord r;
        char comma = 0;
        if (row >> r.iter >> comma >> r.lr >> comma >> r.loss && r.iter < start.iteration) history.push_back(r);
      }
    }
    result = textnet::resume(std::move(start), pairs, opts);
  } else {
    result = textnet::train(pairs, cfg.net_spec(model.k), cfg.sgd, cfg.augment, cfg.seed, opts);
  }
  textnet::save(result.checkpoint, a.out);
  io::write_atomic(log_path, loss_csv(history));
  echo_config(cfg, a.out);
  std::cout << "trained " << result.checkpoint.iteration << " iterations on " << pairs.size() << " pairs";
  if (!history.empty()) std::cout << ", final loss " << num(history.back().loss);
  std::cout << "\n";
}

void run_net_embed(const std::string& ckpt_path, const std::string& image_path, const std::string& layer,
                   std::size_t n_crops, bool true_random, std::uint64_t seed) {
  const auto ckpt = textnet::load(ckpt_path);
  const auto img = image::read_ppm(image_path);
  if (!layer.empty()) {
    std::cout << join(textnet::extract_features(ckpt, img, layer));
    return;
  }
  require(ckpt.head == textnet::Head::Topics, ErrorCode::InvalidArgument,
          "checkpoint has a classification head; pass --layer");
  const auto mode = true_random ? textnet::CropMode::TrueRandom : textnet::CropMode::Standard;
  std::cout << join(textnet::predict_topics(ckpt, img, n_crops, mode, seed).probs());
}

void run_net_features(const std::string& ckpt_path, const std::string& list, const std::string& root,
                      const std::string& layer, const std::string& out) {
  const auto ckpt = textnet::load(ckpt_path);
  pipeline::FeatureSet f;
  for (const auto& id : first_column(list)) {
    f.ids.push_back(id);
    f.rows.push_back(textnet::extract_features(ckpt, image::read_ppm(fs::path(root) / id), layer));
  }
  io::write_atomic(out, pipeline::serialize_features(f));
  std::cout << "features: " << f.ids.size() << " x " << (f.rows.empty() ? 0 : f.rows[0].size()) << " from '" << layer
            << "'\n";
}

struct FinetuneArgs {
  std::string ckpt, labels, root, out;
  std::size_t classes = 2;
  std::size_t iters = 1000, batch = 64, threads = 1;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

void run_net_finetune(const FinetuneArgs& a) {
  const auto base = textnet::load(a.ckpt);
  std::vector<textnet::LabeledImage> data;
  for (const auto& [id, labels] : pipeline::load_labels(a.labels)) {
    require(!labels.empty(), ErrorCode::CorruptFile, "image '" + id + "' has no class");
    data.push_back({image::read_ppm(fs::path(a.root) / id), *labels.begin()});
  }
  auto sgd = nn::SgdConfig::finetune();
  sgd.base_lr = a.lr;
  sgd.batch_size = a.batch;
  sgd.max_iters = a.iters;
  textnet::TrainOptions opts;
  opts.threads = a.threads;
  const auto result = textnet::fine_tune(base, data, a.classes, sgd, base.augment, a.seed, opts);
  textnet::save(result.checkpoint, a.out);
  io::write_atomic(a.out + ".loss.csv", loss_csv(result.history));
  std::size_t correct = 0;
  for (const auto& d : data) correct += textnet::predict_class(result.checkpoint, d.image) == d.label;
  std::cout << "fine-tuned " << a.iters << " iterations, train accuracy "
            << num(static_cast<double>(correct) / static_cast<double>(data.size())) << "\n";
}

struct IndexArgs {
  std::string out, corpus, model, images, root, ckpt, stopwords;
  std::size_t n_crops = 10;
  std::uint64_t seed = 0;
};

void run_index_build(const IndexArgs& a) {
  require(!a.corpus.empty() || !a.images.empty(), ErrorCode::InvalidArgument, "give --corpus and/or --images");
  std::vector<retrieval::IndexEntry> entries;
  if (!a.corpus.empty()) {
    require(!a.model.empty(), ErrorCode::InvalidArgument, "--corpus needs --model");
    const auto m = lda::load(a.model);
    const auto vocab = vocab_from_model(m);
    const auto prep = preprocessor(a.stopwords);
    const auto docs = corpus::load_corpus(a.corpus);
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const auto theta = retrieval::embed_text(docs[i].text, vocab, m, derive_seed(a.seed, i), prep);
      entries.push_back({docs[i].doc_id, retrieval::Modality::Text, theta, docs[i].doc_id});
    }
  }
  if (!a.images.empty()) {
    require(!a.ckpt.empty(), ErrorCode::InvalidArgument, "--images needs --ckpt");
    const auto ckpt = textnet::load(a.ckpt);
    const fs::path root = a.root.empty() ? fs::path(a.images).parent_path() / "images" : fs::path(a.root);
    for (const auto& id : first_column(a.images)) {
      const auto theta = retrieval::embed_image(image::read_ppm(root / id), ckpt, a.n_crops);
      entries.push_back({id, retrieval::Modality::Image, theta, (root / id).string()});
    }
  }
  const auto index = retrieval::RetrievalIndex::build(std::move(entries));
  index.save(a.out);
  std::cout << "index: " << index.size() << " entries, K=" << index.dim() << "\n";
}

struct QueryArgs {
  std::string index, text, image, model, ckpt, target, out, stopwords;
  std::size_t top_n = 10, n_crops = 10;
  std::uint64_t seed = 0;
  bool symmetric = false;
};

void run_query(const QueryArgs& a) {
  require(a.text.empty() != a.image.empty(), ErrorCode::InvalidArgument, "give exactly one of --text or --image");
  const auto index = retrieval::RetrievalIndex::load(a.index);
  TopicDistribution q;
  retrieval::Modality target;
  if (!a.text.empty()) {
    require(!a.model.empty(), ErrorCode::InvalidArgument, "--text needs --model");
    const auto m = lda::load(a.model);
    q = retrieval::embed_text(a.text, vocab_from_model(m), m, a.seed, preprocessor(a.stopwords));
    target = retrieval::Modality::Image;
  } else {
    require(!a.ckpt.empty(), ErrorCode::InvalidArgument, "--image needs --ckpt");
    q = retrieval::embed_image(image::read_ppm(a.image), textnet::load(a.ckpt), a.n_crops);
    target = retrieval::Modality::Text;
  }
  if (!a.target.empty()) target = retrieval::parse_modality(a.target);
  const auto dir = a.symmetric ? retrieval::Direction::Symmetric : retrieval::Direction::QueryToEntry;
  write_or_print(a.out, retrieval::hits_to_tsv(retrieval::query(index, q, target, a.top_n, dir)));
}

struct SvmArgs {
  std::string train, train_labels, test, test_labels, val, val_labels, out;
  std::size_t classes = 0, epochs = 20;
  std::optional<double> lambda;
  std::uint64_t seed = 0;
  bool voc11 = false, raw = false;
};

void run_eval_svm(const SvmArgs& a) {
  const auto train = labeled_features(a.train, a.train_labels, !a.raw);
  const auto test = labeled_features(a.test, a.test_labels, !a.raw);
  std::size_t classes = a.classes;
  if (classes == 0)
    for (const auto& d : train)
      for (auto c : d.labels) classes = std::max(classes, c + 1);
  double lambda = 1e-3;
  if (a.lambda) {
    lambda = *a.lambda;
  } else if (!a.val.empty()) {
    lambda = eval::select_lambda(train, labeled_features(a.val, a.val_labels, !a.raw), classes, a.epochs, a.seed);
  }
  const auto model = eval::train_one_vs_rest(train, classes, lambda, a.epochs, a.seed);
  const auto aps = eval::per_class_ap(model, test, a.voc11 ? eval::ApMode::Voc11Point : eval::ApMode::NonInterpolated);
  std::string csv = "class,ap\n";
  for (std::size_t c = 0; c < aps.size(); ++c) csv += std::to_string(c) + "," + (std::isnan(aps[c]) ? "nan" : num(aps[c])) + "\n";
  csv += "mAP," + num(eval::summarize_map(aps)) + "\n";
  csv += "lambda," + num(lambda) + "\n";
  write_or_print(a.out, csv);
}

struct MapArgs {
  std::string index, model, queries, labels, out, target = "image", stopwords;
  std::uint64_t seed = 0;
};

void run_eval_map(const MapArgs& a) {
  const auto index = retrieval::RetrievalIndex::load(a.index);
  const auto m = lda::load(a.model);
  const auto vocab = vocab_from_model(m);
  const auto prep = preprocessor(a.stopwords);
  const auto labels = pipeline::load_labels(a.labels);
  const auto target = retrieval::parse_modality(a.target);
  std::string csv = "query,ap\n";
  std::vector<double> aps;
  for (const auto& [text, classes] : pipeline::load_labels(a.queries)) {
    const auto q = retrieval::embed_text(text, vocab, m, derive_seed(a.seed, aps.size()), prep);
    const auto hits = retrieval::query(index, q, target, index.size());
    std::vector<double> scores;
    std::vector<int> rel;
    for (const auto& h : hits) {
      scores.push_back(-h.distance);
      const auto it = labels.find(h.item_id);
      bool relevant = false;
      if (it != labels.end())
        for (auto c : classes) relevant = relevant || it->second.count(c);
      rel.push_back(relevant);
    }
    aps.push_back(eval::average_precision(scores, rel));
    csv += text + "," + num(aps.back()) + "\n";
  }
  csv += "MAP," + num(eval::mean_ap(aps)) + "\n";
  write_or_print(a.out, csv);
}

struct SweepArgs {
  std::string corpus, vocab, val_corpus, val_labels, out, config, stopwords;
  std::vector<std::size_t> ks;
  std::optional<std::size_t> iters, burn_in;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
};

void run_eval_sweep(const SweepArgs& a) {
  json flags = {{"paths", {{"corpus", a.corpus}}}};
  if (!a.out.empty()) flags["paths"]["output"] = a.out;
  set_if(flags, "/lda/alpha", a.alpha);
  set_if(flags, "/lda/n_iters", a.iters);
  set_if(flags, "/lda/burn_in", a.burn_in);
  set_if(flags, "/lda/seed", a.seed);
  const auto cfg = effective_config(a.config, flags);
  const bool fixed_alpha = a.alpha.has_value() || (!a.config.empty() && read_json_file(a.config).contains(
                                                                             json::json_pointer("/lda/alpha")));
  const auto prep = preprocessor(a.stopwords);
  const auto vocab = load_vocab(a.vocab);
  const auto bows = to_bows(corpus::load_corpus(cfg.corpus), vocab, prep);
  const auto val_docs = corpus::load_corpus(a.val_corpus);
  const auto val_bows = to_bows(val_docs, vocab, prep);
  const auto label_map = pipeline::load_labels(a.val_labels);
  std::vector<std::size_t> val_labels;
  for (const auto& d : val_docs) {
    const auto it = label_map.find(d.doc_id);
    require(it != label_map.end() && !it->second.empty(), ErrorCode::CorruptFile, "no label for '" + d.doc_id + "'");
    val_labels.push_back(*it->second.begin());
  }
  const auto res = eval::topic_sweep(a.ks, [&](std::size_t k) {
    auto h = cfg.lda;
    h.k = k;
    if (!fixed_alpha) h.alpha = 50.0 / static_cast<double>(k);
    if (h.burn_in > h.n_iters) h.burn_in = h.n_iters / 2;
    const auto m = lda::train(bows, vocab, h);
    const double s = pipeline::validation_purity(m, val_bows, val_labels, cfg.lda.seed);
    std::cerr << "K=" << k << " validation purity " << num(s) << "\n";
    return s;
  });
  std::string csv = "k,score\n";
  for (const auto& [k, s] : res.scores) csv += std::to_string(k) + "," + num(s) + "\n";
  csv += "best," + std::to_string(res.best_k) + "\n";
  write_or_print(a.out, csv);
  if (!a.out.empty() && a.out != "-") echo_config(cfg, a.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised image features from text topic models: LDA, topic-regression CNN, retrieval, "
               "evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ttn 1.0");
  const std::size_t default_threads = nn::default_threads();

  // synth
  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Write the planted multi-modal dataset");
  s_synth->add_option("out", synth.out, "Output directory")->required();
  s_synth->add_option("--topics", synth.cfg.topics, "Planted topics (1-8)")->capture_default_str();
  s_synth->add_option("--docs", synth.cfg.docs, "Documents")->capture_default_str();
  s_synth->add_option("--images-per-doc", synth.cfg.images_per_doc, "Images per document")->capture_default_str();
  s_synth->add_option("--tokens-per-doc", synth.cfg.tokens_per_doc, "Topic tokens per document")->capture_default_str();
  s_synth->add_option("--side", synth.cfg.image_side, "Stored image side in pixels")->capture_default_str();
  s_synth->add_option("--noise", synth.cfg.pixel_noise, "Pixel noise amplitude")->capture_default_str();
  s_synth->add_option("--seed", synth.cfg.seed, "Generator seed")->capture_default_str();
  s_synth->add_option("--prefix", synth.cfg.id_prefix, "Document id prefix")->capture_default_str();
  s_synth->callback([&] { run_synth(synth); });

  // vocab build
  VocabArgs vocab;
  auto* s_vocab = app.add_subcommand("vocab", "Vocabulary tools")->require_subcommand(1);
  auto* s_vbuild = s_vocab->add_subcommand("build", "Build the filtered vocabulary of a corpus");
  s_vbuild->add_option("corpus", vocab.corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  s_vbuild->add_option("--min-df", vocab.min_df, "Minimum document frequency [20]");
  s_vbuild->add_option("--max-df-ratio", vocab.max_df_ratio, "Maximum document frequency ratio [0.5]");
  s_vbuild->add_option("--stopwords", vocab.stopwords, "Stopword file (one per line)")->check(CLI::ExistingFile);
  s_vbuild->add_option("--config", vocab.config, "JSON config file")->check(CLI::ExistingFile);
  s_vbuild->add_option("-o,--output", vocab.out, "Vocabulary JSON")->required();
  s_vbuild->callback([&] { run_vocab_build(vocab); });

  // lda
  auto* s_lda = app.add_subcommand("lda", "Topic model tools")->require_subcommand(1);
  LdaTrainArgs lt;
  auto* s_ltrain = s_lda->add_subcommand("train", "Train LDA by collapsed Gibbs sampling");
  s_ltrain->add_option("corpus", lt.corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  s_ltrain->add_option("vocab", lt.vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  s_ltrain->add_option("-k,--topics", lt.k, "Number of topics [40]");
  s_ltrain->add_option("-a,--alpha", lt.alpha, "Document-topic prior [50/K]");
  s_ltrain->add_option("-b,--beta", lt.beta, "Topic-word prior [0.01]");
  s_ltrain->add_option("--iters", lt.iters, "Gibbs sweeps [500]");
  s_ltrain->add_option("--burn-in", lt.burn_in, "Burn-in sweeps [100]");
  s_ltrain->add_option("--infer-iters", lt.infer_iters, "Fold-in sweeps [100]");
  s_ltrain->add_option("--seed", lt.seed, "Sampler seed [0]");
  s_ltrain->add_flag("--average-samples", lt.average, "Average estimates over post-burn-in sweeps");
  s_ltrain->add_option("--stopwords", lt.stopwords, "Stopword file")->check(CLI::ExistingFile);
  s_ltrain->add_option("--config", lt.config, "JSON config file")->check(CLI::ExistingFile);
  s_ltrain->add_option("-o,--output", lt.out, "Model file")->required();
  s_ltrain->callback([&] { run_lda_train(lt); });

  std::string topics_model;
  std::size_t top_n = 10;
  bool with_probs = false;
  auto* s_ltopics = s_lda->add_subcommand("topics", "Print the top words of every topic");
  s_ltopics->add_option("model", topics_model, "Model file")->required()->check(CLI::ExistingFile);
  s_ltopics->add_option("--top-n", top_n, "Words per topic")->capture_default_str();
  s_ltopics->add_flag("--probs", with_probs, "Append word probabilities");
  s_ltopics->callback([&] { run_lda_topics(topics_model, top_n, with_probs); });

  std::string infer_model, infer_text, text_stopwords;
  std::uint64_t infer_seed = 0;
  auto* s_linfer = s_lda->add_subcommand("infer", "Fold-in topic distribution of a text");
  s_linfer->add_option("model", infer_model, "Model file")->required()->check(CLI::ExistingFile);
  s_linfer->add_option("--text", infer_text, "Text to embed")->required();
  s_linfer->add_option("--seed", infer_seed, "Sampler seed")->capture_default_str();
  s_linfer->add_option("--stopwords", text_stopwords, "Stopword file")->check(CLI::ExistingFile);
  s_linfer->callback([&] { run_lda_infer(infer_model, infer_text, infer_seed, text_stopwords); });

  std::string ppl_model, ppl_corpus;
  auto* s_lppl = s_lda->add_subcommand("perplexity", "Perplexity of a corpus under a model");
  s_lppl->add_option("model", ppl_model, "Model file")->required()->check(CLI::ExistingFile);
  s_lppl->add_option("corpus", ppl_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  s_lppl->add_option("--seed", infer_seed, "Fold-in seed")->capture_default_str();
  s_lppl->add_option("--stopwords", text_stopwords, "Stopword file")->check(CLI::ExistingFile);
  s_lppl->callback([&] { run_lda_perplexity(ppl_model, ppl_corpus, infer_seed, text_stopwords); });

  // net
  auto* s_net = app.add_subcommand("net", "Topic-regression network tools")->require_subcommand(1);
  NetTrainArgs nt;
  nt.threads = default_threads;
  auto* s_ntrain = s_net->add_subcommand("train", "Train the CNN to regress article topic distributions");
  s_ntrain->add_option("corpus", nt.corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
  s_ntrain->add_option("model", nt.model, "LDA model file")->required()->check(CLI::ExistingFile);
  s_ntrain->add_option("--images", nt.images, "Image root [<corpus dir>/images]");
  s_ntrain->add_option("--spec", nt.spec, "\"tiny\" or a network spec JSON file");
  s_ntrain->add_option("--iters", nt.iters, "Iterations [120000]");
  s_ntrain->add_option("--batch", nt.batch, "Batch size [64]");
  s_ntrain->add_option("--lr", nt.lr, "Base learning rate [0.001]");
  s_ntrain->add_option("--lr-step", nt.lr_step, "Iterations per decay [50000]");
  s_ntrain->add_option("--lr-decay", nt.lr_decay, "Decay factor [0.1]");
  s_ntrain->add_option("--momentum", nt.momentum, "Momentum [0.9]");
  s_ntrain->add_option("--crop", nt.crop, "Crop side [32]");
  s_ntrain->add_option("--mirror-prob", nt.mirror_prob, "Mirror probability [0.5]");
  s_ntrain->add_option("--seed", nt.seed, "Training seed [0]");
  s_ntrain->add_option("--threads", nt.threads, "Worker threads [TTN_THREADS or 1]");
  s_ntrain->add_option("--checkpoint-every", nt.checkpoint_every, "Save the checkpoint every N iterations");
  s_ntrain->add_option("--resume", nt.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  s_ntrain->add_option("--log", nt.log, "Loss CSV [<output>.loss.csv]");
  s_ntrain->add_option("--log-every", nt.log_every, "Progress line every N iterations (0 = quiet)")
      ->capture_default_str();
  s_ntrain->add_option("--config", nt.config, "JSON config file")->check(CLI::ExistingFile);
  s_ntrain->add_option("-o,--output", nt.out, "Checkpoint file")->required();
  s_ntrain->callback([&] { run_net_train(nt); });

  std::string embed_ckpt, embed_image, embed_layer;
  std::size_t embed_crops = 10;
  bool true_random = false;
  std::uint64_t embed_seed = 0;
  auto* s_nembed = s_net->add_subcommand("embed", "Topic vector (or layer features) of one image");
  s_nembed->add_option("ckpt", embed_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  s_nembed->add_option("--image", embed_image, "PPM image")->required()->check(CLI::ExistingFile);
  s_nembed->add_option("--layer", embed_layer, "Layer name (e.g. pool5, fc7); prints raw features");
  s_nembed->add_option("--n-crops", embed_crops, "Test-time views")->capture_default_str();
  s_nembed->add_flag("--true-random-crops", true_random, "Uniformly random crops instead of corners+center");
  s_nembed->add_option("--seed", embed_seed, "Seed for random crops")->capture_default_str();
  s_nembed->callback([&] { run_net_embed(embed_ckpt, embed_image, embed_layer, embed_crops, true_random, embed_seed); });

  std::string feat_ckpt, feat_list, feat_root, feat_layer = "fc7", feat_out;
  auto* s_nfeat = s_net->add_subcommand("features", "Extract layer features for a list of images");
  s_nfeat->add_option("ckpt", feat_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  s_nfeat->add_option("list", feat_list, "CSV whose first column is an image path")->required()->check(CLI::ExistingFile);
  s_nfeat->add_option("--root", feat_root, "Directory the image paths are relative to");
  s_nfeat->add_option("--layer", feat_layer, "Layer name")->capture_default_str();
  s_nfeat->add_option("-o,--output", feat_out, "Feature file")->required();
  s_nfeat->callback([&] { run_net_features(feat_ckpt, feat_list, feat_root, feat_layer, feat_out); });

  FinetuneArgs ft;
  ft.threads = default_threads;
  auto* s_nft = s_net->add_subcommand("finetune", "Replace the head and fine-tune on labeled images");
  s_nft->add_option("ckpt", ft.ckpt, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  s_nft->add_option("labels", ft.labels, "CSV image,class")->required()->check(CLI::ExistingFile);
  s_nft->add_option("--root", ft.root, "Directory the image paths are relative to");
  s_nft->add_option("--classes", ft.classes, "Number of classes")->capture_default_str();
  s_nft->add_option("--iters", ft.iters, "Iterations")->capture_default_str();
  s_nft->add_option("--batch", ft.batch, "Batch size")->capture_default_str();
  s_nft->add_option("--lr", ft.lr, "Base learning rate")->capture_default_str();
  s_nft->add_option("--seed", ft.seed, "Head initialization and shuffling seed")->capture_default_str();
  s_nft->add_option("--threads", ft.threads, "Worker threads");
  s_nft->add_option("-o,--output", ft.out, "Checkpoint file")->required();
  s_nft->callback([&] { run_net_finetune(ft); });

  // index build
  IndexArgs ix;
  auto* s_index = app.add_subcommand("index", "Retrieval index tools")->require_subcommand(1);
  auto* s_ibuild = s_index->add_subcommand("build", "Embed documents and/or images into a topic-space index");
  s_ibuild->add_option("--corpus", ix.corpus, "Corpus JSONL (text entries)")->check(CLI::ExistingFile);
  s_ibuild->add_option("--model", ix.model, "LDA model for text entries")->check(CLI::ExistingFile);
  s_ibuild->add_option("--images", ix.images, "CSV whose first column is an image path")->check(CLI::ExistingFile);
  s_ibuild->add_option("--root", ix.root, "Image root [<list dir>/images]");
  s_ibuild->add_option("--ckpt", ix.ckpt, "Checkpoint for image entries")->check(CLI::ExistingFile);
  s_ibuild->add_option("--n-crops", ix.n_crops, "Test-time views per image")->capture_default_str();
  s_ibuild->add_option("--seed", ix.seed, "Fold-in seed")->capture_default_str();
  s_ibuild->add_option("--stopwords", ix.stopwords, "Stopword file")->check(CLI::ExistingFile);
  s_ibuild->add_option("-o,--output", ix.out, "Index JSONL")->required();
  s_ibuild->callback([&] { run_index_build(ix); });

  // query
  QueryArgs qa;
  auto* s_query = app.add_subcommand("query", "Rank index entries by KL divergence from a query");
  s_query->add_option("index", qa.index, "Index JSONL")->required()->check(CLI::ExistingFile);
  s_query->add_option("--text", qa.text, "Text query (searches images by default)");
  s_query->add_option("--image", qa.image, "Image query (searches texts by default)")->check(CLI::ExistingFile);
  s_query->add_option("--model", qa.model, "LDA model for text queries")->check(CLI::ExistingFile);
  s_query->add_option("--ckpt", qa.ckpt, "Checkpoint for image queries")->check(CLI::ExistingFile);
  s_query->add_option("--target", qa.target, "Modality to search: text or image");
  s_query->add_option("--top-n", qa.top_n, "Results")->capture_default_str();
  s_query->add_option("--n-crops", qa.n_crops, "Test-time views for image queries")->capture_default_str();
  s_query->add_option("--seed", qa.seed, "Fold-in seed")->capture_default_str();
  s_query->add_flag("--symmetric", qa.symmetric, "Symmetric KL instead of D(query || entry)");
  s_query->add_option("--stopwords", qa.stopwords, "Stopword file")->check(CLI::ExistingFile);
  s_query->add_option("-o,--output", qa.out, "TSV output [stdout]");
  s_query->callback([&] { run_query(qa); });

  // eval
  auto* s_eval = app.add_subcommand("eval", "Evaluation")->require_subcommand(1);
  SvmArgs sv;
  auto* s_esvm = s_eval->add_subcommand("svm", "One-vs-rest linear SVMs on features; per-class AP and mAP");
  s_esvm->add_option("--train", sv.train, "Training features")->required()->check(CLI::ExistingFile);
  s_esvm->add_option("--train-labels", sv.train_labels, "Training labels CSV")->required()->check(CLI::ExistingFile);
  s_esvm->add_option("--test", sv.test, "Test features")->required()->check(CLI::ExistingFile);
  s_esvm->add_option("--test-labels", sv.test_labels, "Test labels CSV")->required()->check(CLI::ExistingFile);
  s_esvm->add_option("--val", sv.val, "Validation features (selects lambda)")->check(CLI::ExistingFile);
  s_esvm->add_option("--val-labels", sv.val_labels, "Validation labels CSV")->check(CLI::ExistingFile);
  s_esvm->add_option("--classes", sv.classes, "Number of classes [from training labels]");
  s_esvm->add_option("--lambda", sv.lambda, "Regularization [1e-3, or selected on --val]");
  s_esvm->add_option("--epochs", sv.epochs, "Epochs")->capture_default_str();
  s_esvm->add_option("--seed", sv.seed, "Seed")->capture_default_str();
  s_esvm->add_flag("--voc11", sv.voc11, "11-point interpolated AP");
  s_esvm->add_flag("--raw", sv.raw, "Skip L2 normalization of features");
  s_esvm->add_option("-o,--output", sv.out, "CSV report [stdout]");
  s_esvm->callback([&] { run_eval_svm(sv); });

  MapArgs mp;
  auto* s_emap = s_eval->add_subcommand("map", "Retrieval MAP of text queries against labeled index entries");
  s_emap->add_option("index", mp.index, "Index JSONL")->required()->check(CLI::ExistingFile);
  s_emap->add_option("--model", mp.model, "LDA model")->required()->check(CLI::ExistingFile);
  s_emap->add_option("--queries", mp.queries, "CSV query_text,class")->required()->check(CLI::ExistingFile);
  s_emap->add_option("--labels", mp.labels, "CSV item_id,class")->required()->check(CLI::ExistingFile);
  s_emap->add_option("--target", mp.target, "Modality searched")->capture_default_str();
  s_emap->add_option("--seed", mp.seed, "Fold-in seed")->capture_default_str();
  s_emap->add_option("--stopwords", mp.stopwords, "Stopword file")->check(CLI::ExistingFile);
  s_emap->add_option("-o,--output", mp.out, "CSV report [stdout]");
  s_emap->callback([&] { run_eval_map(mp); });

  SweepArgs sw;
  auto* s_esweep = s_eval->add_subcommand("sweep", "Choose the topic count by validation purity");
  s_esweep->add_option("corpus", sw.corpus, "Training corpus JSONL")->required()->check(CLI::ExistingFile);
  s_esweep->add_option("vocab", sw.vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  s_esweep->add_option("--val-corpus", sw.val_corpus, "Validation corpus JSONL")->required()->check(CLI::ExistingFile);
  s_esweep->add_option("--val-labels", sw.val_labels, "Validation labels CSV")->required()->check(CLI::ExistingFile);
  s_esweep->add_option("--ks", sw.ks, "Candidate topic counts")->required()->delimiter(',');
  s_esweep->add_option("-a,--alpha", sw.alpha, "Fixed alpha [50/K per candidate]");
  s_esweep->add_option("--iters", sw.iters, "Gibbs sweeps");
  s_esweep->add_option("--burn-in", sw.burn_in, "Burn-in sweeps");
  s_esweep->add_option("--seed", sw.seed, "Sampler seed");
  s_esweep->add_option("--stopwords", sw.stopwords, "Stopword file")->check(CLI::ExistingFile);
  s_esweep->add_option("--config", sw.config, "JSON config file")->check(CLI::ExistingFile);
  s_esweep->add_option("-o,--output", sw.out, "CSV report [stdout]");
  s_esweep->callback([&] { run_eval_sweep(sw); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  } catch (const Error& e) {
    std::cerr << "ttn: error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "ttn: error: IoError: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
