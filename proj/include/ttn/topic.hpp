#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ttn {

// A point on the K-simplex: nonnegative entries summing to 1 within 1e-9.
class TopicDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  TopicDistribution() = default;
  // Throws InvalidArgument unless `probs` is a valid simplex point.
  explicit TopicDistribution(std::vector<double> probs);

  // Divides nonnegative weights by their sum.
  static TopicDistribution normalized(std::span<const double> weights);
  static TopicDistribution uniform(std::size_t k);

  std::size_t size() const { return probs_.size(); }
  bool empty() const { return probs_.empty(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }
  std::size_t argmax() const;

  bool operator==(const TopicDistribution&) const = default;

 private:
  std::vector<double> probs_;
};

}  // namespace ttn
