#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support/ap_oracle.hpp"
#include "support/svm_data.hpp"
#include "ttn/error.hpp"
#include "ttn/eval.hpp"

using namespace ttn;
using namespace ttn::eval;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

double ap(const std::vector<double>& s, const std::vector<int>& r, ApMode m = ApMode::NonInterpolated) {
  return average_precision(s, r, m);
}

// Scores that list items in the given order (first = highest).
std::vector<double> in_order(std::size_t n) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<double>(n - i);
  return s;
}

}  // namespace

TEST_CASE("average precision examples") {
  CHECK(ap(in_order(4), {1, 1, 0, 0}) == 1.0);
  CHECK(ap(in_order(2), {0, 1}) == 0.5);
  CHECK(ap(in_order(3), {1, 0, 1}) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  // ties keep input order
  CHECK(ap({1.0, 1.0}, {0, 1}) == 0.5);
  CHECK(code_of([] { ap({1.0, 2.0}, {0, 0}); }) == ErrorCode::NoRelevant);
  CHECK(code_of([] { ap({1.0, 2.0}, {0}); }) == ErrorCode::DimensionMismatch);
  CHECK(ap(in_order(4), {1, 1, 0, 0}, ApMode::Voc11Point) == doctest::Approx(1.0));
}

TEST_CASE("average precision matches the brute-force oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<double> s(n);
    std::vector<int> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(8));  // coarse scores force ties
      r[i] = rng.bernoulli(0.4);
    }
    r[rng.below(n)] = 1;
    CHECK(std::abs(ap(s, r) - oracle::brute_ap(s, r)) <= 1e-12);
    CHECK(std::abs(ap(s, r, ApMode::Voc11Point) - oracle::brute_voc11(s, r)) <= 1e-12);
  }
}

TEST_CASE("average precision properties") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<double> s(n), t(n);
    std::vector<int> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform(-3, 3);
      t[i] = std::exp(2.0 * s[i]) + 1.0;  // strictly increasing transform
      r[i] = rng.bernoulli(0.5);
    }
    r[0] = 1;
    CHECK(ap(s, r) == ap(t, r));
    double min_rel = 1e300, max_irr = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      if (r[i]) min_rel = std::min(min_rel, s[i]);
      else max_irr = std::max(max_irr, s[i]);
    }
    CHECK((ap(s, r) == 1.0) == (min_rel > max_irr));
  }
}

TEST_CASE("mean_ap") {
  CHECK(mean_ap(std::vector<double>{1.0}) == 1.0);
  CHECK(mean_ap(std::vector<double>{0.5, 1.0}) == 0.75);
  CHECK(mean_ap(std::vector<double>(7, 0.3)) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(code_of([] { mean_ap(std::vector<double>{}); }) == ErrorCode::Empty);
  CHECK(summarize_map({0.5, NAN, 1.0}) == 0.75);
}

TEST_CASE("svm decision") {
  LinearSvm z;
  z.weight = {0.0, 0.0};
  z.bias = 0.7;
  CHECK(svm_decision(z, std::vector<double>{3.0, -1.0}) == 0.7);
  LinearSvm s;
  s.weight = {1.0, -1.0};
  CHECK(svm_decision(s, std::vector<double>{2.0, 3.0}) == -1.0);
  s.bias = 0.25;
  const std::vector<double> x = {0.3, -1.7}, x2 = {0.6, -3.4};
  CHECK(svm_decision(s, x2) - 2.0 * svm_decision(s, x) == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(code_of([&] { svm_decision(s, std::vector<double>{1.0}); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("svm training") {
  // two 2-D blobs separated by the line x0 + x1 = 0 with margin
  Rng rng(3);
  std::vector<LabeledFeature> data;
  for (int i = 0; i < 100; ++i) {
    const std::size_t c = i % 2;
    const double sign = c ? 1.0 : -1.0;
    data.push_back({{sign * 1.5 + rng.uniform(-0.8, 0.8), sign * 1.5 + rng.uniform(-0.8, 0.8)}, {c}});
  }
  // the construction's hyperplane separates every point
  for (const auto& d : data) CHECK(((d.feature[0] + d.feature[1] > 0) == (d.labels.count(1) == 1)));

  const auto svm = svm_train(data, 1, 1e-2, 20, 5);
  std::size_t correct = 0;
  for (const auto& d : data) correct += (svm_decision(svm, d.feature) > 0) == (d.labels.count(1) == 1);
  CHECK(correct == data.size());
  REQUIRE(svm.objective_history.size() == 20);
  CHECK(svm.objective_history.back() < svm.objective_history.front());
  CHECK(svm_objective(svm, data) == doctest::Approx(svm.objective_history.back()).epsilon(1e-12));

  const auto again = svm_train(data, 1, 1e-2, 20, 5);
  CHECK(again.weight == svm.weight);
  CHECK(again.bias == svm.bias);

  auto doubled = data;
  doubled.insert(doubled.end(), data.begin(), data.end());
  const auto svm2 = svm_train(doubled, 1, 1e-2, 20, 5);
  std::size_t correct2 = 0;
  for (const auto& d : data) correct2 += (svm_decision(svm2, d.feature) > 0) == (d.labels.count(1) == 1);
  CHECK(correct2 == correct);

  std::vector<LabeledFeature> one(5, LabeledFeature{{1.0, 2.0}, {0}});
  CHECK(code_of([&] { svm_train(one, 0, 1e-3, 2, 0); }) == ErrorCode::SingleClassData);
  CHECK(code_of([&] { svm_train(one, 1, 1e-3, 2, 0); }) == ErrorCode::SingleClassData);
}

TEST_CASE("one-vs-rest on separable classes") {
  const auto train = oracle::separable_classes(4, 40, 6, 0.3, 1);
  const auto test = oracle::separable_classes(4, 25, 6, 0.3, 2);
  const double lambda = select_lambda(train, test, 4, 15, 3);
  CHECK((lambda == 1e-4 || lambda == 1e-3 || lambda == 1e-2));
  const auto model = train_one_vs_rest(train, 4, lambda, 15, 3);
  REQUIRE(model.svms.size() == 4);
  CHECK(accuracy(model, train) == 1.0);
  const auto aps = per_class_ap(model, test);
  CHECK(summarize_map(aps) >= 0.95);
  CHECK(model.predict(test[2].feature) == 2);

  auto partial = test;
  partial.erase(std::remove_if(partial.begin(), partial.end(), [](const auto& d) { return d.labels.count(3); }),
                partial.end());
  const auto aps3 = per_class_ap(model, partial);
  CHECK(std::isnan(aps3[3]));
}

TEST_CASE("feature normalization") {
  const auto n = l2_normalized(std::vector<double>{3.0, 4.0});
  CHECK(n[0] == doctest::Approx(0.6));
  CHECK(n[1] == doctest::Approx(0.8));
  CHECK(l2_normalized(std::vector<double>{0.0, 0.0}) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("topic sweep selection") {
  auto single = topic_sweep({7}, [](std::size_t) { return 0.2; });
  CHECK(single.best_k == 7);
  auto tie = topic_sweep({8, 3, 5}, [](std::size_t k) { return k == 2 ? 0.0 : 0.9; });
  CHECK(tie.best_k == 3);
  auto peak = topic_sweep({2, 3, 5, 8}, [](std::size_t k) { return -std::abs(static_cast<double>(k) - 4.6); });
  CHECK(peak.best_k == 5);
  CHECK(peak.scores.size() == 4);
  CHECK_THROWS_AS(topic_sweep({}, [](std::size_t) { return 0.0; }), Error);
}

TEST_CASE("clustering F-measure") {
  CHECK(clustering_f_measure({0, 0, 1, 1}, {5, 5, 2, 2}) == 1.0);
  // one cluster over two balanced labels: purity 1/2, inverse purity 1
  CHECK(clustering_f_measure({0, 0, 0, 0}, {0, 0, 1, 1}) == doctest::Approx(2.0 / 3.0));
  // every item its own cluster: purity 1, inverse purity 1/2
  CHECK(clustering_f_measure({0, 1, 2, 3}, {0, 0, 1, 1}) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(clustering_f_measure({0, 1}, {0}), Error);
}
