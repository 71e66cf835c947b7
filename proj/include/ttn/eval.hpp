#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ttn/corpus.hpp"
#include "ttn/lda.hpp"

namespace ttn::eval {

struct LabeledFeature {
  std::vector<double> feature;
  std::set<std::size_t> labels;
};

struct LinearSvm {
  std::size_t class_id = 0;
  std::vector<double> weight;
  double bias = 0.0;
  double lambda = 1e-3;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  // Primal objective after each epoch.
  std::vector<double> objective_history;
};

// Pegasos on the L2-regularized hinge loss, step 1/(lambda t). The bias is an
// extra constant-1 coordinate and is regularized with the weights. Each epoch
// visits the data in a seeded permutation. Throws SingleClassData when the
// class is either absent or present everywhere.
LinearSvm svm_train(const std::vector<LabeledFeature>& data, std::size_t class_id, double lambda,
                    std::size_t epochs, std::uint64_t seed);

// lambda/2 (|w|^2 + b^2) + mean hinge loss.
double svm_objective(const LinearSvm& svm, const std::vector<LabeledFeature>& data);

double svm_decision(const LinearSvm& svm, std::span<const double> feature);

enum class ApMode { NonInterpolated, Voc11Point };

// Scores sorted descending (stable on ties). Non-interpolated AP is the mean
// of precision@k over the ranks k of relevant items. Throws NoRelevant.
double average_precision(std::span<const double> scores, std::span<const int> relevance,
                         ApMode mode = ApMode::NonInterpolated);

double mean_ap(std::span<const double> aps);

std::vector<double> l2_normalized(std::span<const double> v);

struct OneVsRest {
  std::vector<LinearSvm> svms;
  std::vector<double> scores(std::span<const double> feature) const;
  std::size_t predict(std::span<const double> feature) const;
};

OneVsRest train_one_vs_rest(const std::vector<LabeledFeature>& data, std::size_t n_classes, double lambda,
                            std::size_t epochs, std::uint64_t seed);

// Per-class AP of the SVM scores on `test`. Classes without a positive test
// item are reported as NaN and excluded from mAP by `summarize`.
std::vector<double> per_class_ap(const OneVsRest& model, const std::vector<LabeledFeature>& test,
                                 ApMode mode = ApMode::NonInterpolated);
double summarize_map(const std::vector<double>& per_class);

// Validation mAP picks lambda from `candidates` (ties -> first).
double select_lambda(const std::vector<LabeledFeature>& train, const std::vector<LabeledFeature>& val,
                     std::size_t n_classes, std::size_t epochs, std::uint64_t seed,
                     const std::vector<double>& candidates = {1e-4, 1e-3, 1e-2});

// Fraction of items whose predicted class is among their labels.
double accuracy(const OneVsRest& model, const std::vector<LabeledFeature>& data);

struct SweepResult {
  std::size_t best_k = 0;
  std::vector<std::pair<std::size_t, double>> scores;
};

// Scores every candidate and returns the argmax; ties go to the smaller k.
SweepResult topic_sweep(const std::vector<std::size_t>& candidate_ks, const std::function<double(std::size_t)>& score);

// Trains one LDA model per candidate k (hyperparameters from `base` with k
// replaced) and scores it with `evaluate`.
SweepResult topic_sweep(const std::vector<corpus::BowDocument>& corpus, const corpus::Vocabulary& vocab,
                        const std::vector<std::size_t>& candidate_ks, const lda::LdaHyperparams& base,
                        const std::function<double(const lda::LdaModel&)>& evaluate);

// Harmonic mean of purity (clusters -> majority label) and inverse purity
// (labels -> majority cluster). 1 iff clusters and labels coincide.
double clustering_f_measure(const std::vector<std::size_t>& clusters, const std::vector<std::size_t>& labels);

}  // namespace ttn::eval
