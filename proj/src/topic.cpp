#include "ttn/topic.hpp"

#include <cmath>
#include <string>

#include "ttn/error.hpp"

namespace ttn {

TopicDistribution::TopicDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  require(!probs_.empty(), ErrorCode::InvalidArgument, "empty topic distribution");
  double sum = 0.0;
  for (double p : probs_) {
    require(std::isfinite(p) && p >= 0.0, ErrorCode::InvalidArgument, "topic probability out of range");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= kSumTolerance, ErrorCode::InvalidArgument,
          "topic probabilities sum to " + std::to_string(sum));
}

TopicDistribution TopicDistribution::normalized(std::span<const double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    require(std::isfinite(w) && w >= 0.0, ErrorCode::NonFiniteInput, "invalid topic weight");
    sum += w;
  }
  require(sum > 0.0, ErrorCode::InvalidArgument, "topic weights sum to zero");
  std::vector<double> p(weights.begin(), weights.end());
  for (auto& v : p) v /= sum;
  return TopicDistribution(std::move(p));
}

TopicDistribution TopicDistribution::uniform(std::size_t k) {
  require(k > 0, ErrorCode::InvalidArgument, "k must be positive");
  return TopicDistribution(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

std::size_t TopicDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs_.size(); ++i) {
    if (probs_[i] > probs_[best]) best = i;
  }
  return best;
}

}  // namespace ttn
