#include "ttn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "ttn/error.hpp"
#include "ttn/rng.hpp"

namespace ttn::eval {

namespace {

double label_sign(const LabeledFeature& f, std::size_t class_id) { return f.labels.contains(class_id) ? 1.0 : -1.0; }

double raw_decision(const std::vector<double>& w, double b, std::span<const double> x) {
  double s = b;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
  return s;
}

}  // namespace

double svm_objective(const LinearSvm& svm, const std::vector<LabeledFeature>& data) {
  double reg = svm.bias * svm.bias;
  for (double w : svm.weight) reg += w * w;
  double hinge = 0.0;
  for (const auto& d : data) {
    hinge += std::max(0.0, 1.0 - label_sign(d, svm.class_id) * raw_decision(svm.weight, svm.bias, d.feature));
  }
  return 0.5 * svm.lambda * reg + hinge / static_cast<double>(data.size());
}

LinearSvm svm_train(const std::vector<LabeledFeature>& data, std::size_t class_id, double lambda,
                    std::size_t epochs, std::uint64_t seed) {
  require(!data.empty(), ErrorCode::SingleClassData, "no training data");
  require(lambda > 0.0, ErrorCode::InvalidArgument, "lambda must be > 0");
  const std::size_t dim = data.front().feature.size();
  std::size_t positives = 0;
  for (const auto& d : data) {
    require(d.feature.size() == dim, ErrorCode::DimensionMismatch, "inconsistent feature dimension");
    if (d.labels.contains(class_id)) ++positives;
  }
  require(positives > 0 && positives < data.size(), ErrorCode::SingleClassData,
          "class " + std::to_string(class_id) + " needs both positive and negative examples");

  LinearSvm svm;
  svm.class_id = class_id;
  svm.weight.assign(dim, 0.0);
  svm.lambda = lambda;
  svm.epochs = epochs;
  svm.seed = seed;

  std::vector<std::size_t> order(data.size());
  std::size_t t = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, e));
    rng.shuffle(order.begin(), order.end());
    for (auto i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double y = label_sign(data[i], class_id);
      const double margin = y * raw_decision(svm.weight, svm.bias, data[i].feature);
      const double shrink = 1.0 - eta * lambda;
      for (auto& w : svm.weight) w *= shrink;
      svm.bias *= shrink;
      if (margin < 1.0) {
        for (std::size_t k = 0; k < dim; ++k) svm.weight[k] += eta * y * data[i].feature[k];
        svm.bias += eta * y;
      }
    }
    svm.objective_history.push_back(svm_objective(svm, data));
  }
  return svm;
}

double svm_decision(const LinearSvm& svm, std::span<const double> feature) {
  require(feature.size() == svm.weight.size(), ErrorCode::DimensionMismatch,
          "feature has dimension " + std::to_string(feature.size()) + ", svm " + std::to_string(svm.weight.size()));
  return raw_decision(svm.weight, svm.bias, feature);
}

double average_precision(std::span<const double> scores, std::span<const int> relevance, ApMode mode) {
  require(scores.size() == relevance.size(), ErrorCode::DimensionMismatch, "scores and relevance differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t total_relevant = 0;
  for (int r : relevance) total_relevant += r != 0;
  require(total_relevant > 0, ErrorCode::NoRelevant, "no relevant item");

  if (mode == ApMode::NonInterpolated) {
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (relevance[order[k]] != 0) {
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(k + 1);
      }
    }
    return sum / static_cast<double>(total_relevant);
  }

  std::vector<double> precision(order.size()), recall(order.size());
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    hits += relevance[order[k]] != 0;
    precision[k] = static_cast<double>(hits) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(hits) / static_cast<double>(total_relevant);
  }
  double ap = 0.0;
  for (int step = 0; step <= 10; ++step) {
    const double r = step / 10.0;
    double best = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (recall[k] >= r) best = std::max(best, precision[k]);
    }
    ap += best / 11.0;
  }
  return ap;
}

double mean_ap(std::span<const double> aps) {
  require(!aps.empty(), ErrorCode::Empty, "no AP values");
  double s = 0.0;
  for (double a : aps) s += a;
  return s / static_cast<double>(aps.size());
}

std::vector<double> l2_normalized(std::span<const double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  std::vector<double> out(v.begin(), v.end());
  if (n > 0.0) {
    for (auto& x : out) x /= n;
  }
  return out;
}

std::vector<double> OneVsRest::scores(std::span<const double> feature) const {
  std::vector<double> s;
  s.reserve(svms.size());
  for (const auto& m : svms) s.push_back(svm_decision(m, feature));
  return s;
}

std::size_t OneVsRest::predict(std::span<const double> feature) const {
  const auto s = scores(feature);
  return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

OneVsRest train_one_vs_rest(const std::vector<LabeledFeature>& data, std::size_t n_classes, double lambda,
                            std::size_t epochs, std::uint64_t seed) {
  OneVsRest m;
  for (std::size_t c = 0; c < n_classes; ++c) m.svms.push_back(svm_train(data, c, lambda, epochs, derive_seed(seed, c)));
  return m;
}

std::vector<double> per_class_ap(const OneVsRest& model, const std::vector<LabeledFeature>& test, ApMode mode) {
  std::vector<double> aps;
  for (std::size_t c = 0; c < model.svms.size(); ++c) {
    std::vector<double> scores;
    std::vector<int> rel;
    for (const auto& t : test) {
      scores.push_back(svm_decision(model.svms[c], t.feature));
      rel.push_back(t.labels.contains(c) ? 1 : 0);
    }
    if (std::find(rel.begin(), rel.end(), 1) == rel.end()) {
      aps.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      aps.push_back(average_precision(scores, rel, mode));
    }
  }
  return aps;
}

double summarize_map(const std::vector<double>& per_class) {
  std::vector<double> valid;
  for (double a : per_class) {
    if (!std::isnan(a)) valid.push_back(a);
  }
  return mean_ap(valid);
}

double select_lambda(const std::vector<LabeledFeature>& train, const std::vector<LabeledFeature>& val,
                     std::size_t n_classes, std::size_t epochs, std::uint64_t seed,
                     const std::vector<double>& candidates) {
  require(!candidates.empty(), ErrorCode::Empty, "no lambda candidates");
  double best_lambda = candidates.front();
  double best = -1.0;
  for (double lambda : candidates) {
    const auto m = train_one_vs_rest(train, n_classes, lambda, epochs, seed);
    const double score = summarize_map(per_class_ap(m, val));
    if (score > best) {
      best = score;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

double accuracy(const OneVsRest& model, const std::vector<LabeledFeature>& data) {
  require(!data.empty(), ErrorCode::Empty, "no data");
  std::size_t ok = 0;
  for (const auto& d : data) ok += d.labels.contains(model.predict(d.feature));
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

SweepResult topic_sweep(const std::vector<std::size_t>& candidate_ks, const std::function<double(std::size_t)>& score) {
  require(!candidate_ks.empty(), ErrorCode::Empty, "no candidate topic counts");
  SweepResult r;
  double best = -std::numeric_limits<double>::infinity();
  for (auto k : candidate_ks) {
    const double s = score(k);
    r.scores.emplace_back(k, s);
    if (s > best || (s == best && k < r.best_k)) {
      best = s;
      r.best_k = k;
    }
  }
  return r;
}

SweepResult topic_sweep(const std::vector<corpus::BowDocument>& corpus, const corpus::Vocabulary& vocab,
                        const std::vector<std::size_t>& candidate_ks, const lda::LdaHyperparams& base,
                        const std::function<double(const lda::LdaModel&)>& evaluate) {
  return topic_sweep(candidate_ks, [&](std::size_t k) {
    auto hyper = base;
    hyper.k = k;
    return evaluate(lda::train(corpus, vocab, hyper));
  });
}

double clustering_f_measure(const std::vector<std::size_t>& clusters, const std::vector<std::size_t>& labels) {
  require(clusters.size() == labels.size(), ErrorCode::DimensionMismatch, "cluster/label length mismatch");
  require(!clusters.empty(), ErrorCode::Empty, "no items");
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> joint;
  for (std::size_t i = 0; i < clusters.size(); ++i) ++joint[{clusters[i], labels[i]}];
  std::map<std::size_t, std::size_t> best_by_cluster, best_by_label;
  for (const auto& [key, n] : joint) {
    best_by_cluster[key.first] = std::max(best_by_cluster[key.first], n);
    best_by_label[key.second] = std::max(best_by_label[key.second], n);
  }
  const double total = static_cast<double>(clusters.size());
  double purity = 0.0, inverse = 0.0;
  for (const auto& [c, n] : best_by_cluster) purity += static_cast<double>(n);
  for (const auto& [l, n] : best_by_label) inverse += static_cast<double>(n);
  purity /= total;
  inverse /= total;
  return 2.0 * purity * inverse / (purity + inverse);
}

}  // namespace ttn::eval
