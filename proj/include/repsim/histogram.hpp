#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace repsim {

// Fixed-width histogram that also tracks exact first/second moments of the
// inserted samples. Merge is commutative on the bin counts; moment sums are
// merged in caller-controlled order so aggregation stays deterministic.
class Histogram {
 public:
  Histogram() : Histogram(1.0) {}
  explicit Histogram(double bin_width) : bin_width_(bin_width) {
    if (!(bin_width > 0.0)) throw std::invalid_argument("Histogram: bin width must be positive");
  }

  void add(double value, std::uint64_t weight = 1) {
    if (value < 0.0) value = 0.0;
    const auto idx = static_cast<std::size_t>(value / bin_width_);
    if (idx >= bins_.size()) bins_.resize(idx + 1, 0);
    bins_[idx] += weight;
    count_ += weight;
    sum_ += value * static_cast<double>(weight);
    sum_sq_ += value * value * static_cast<double>(weight);
  }

  void merge(const Histogram& other) {
    if (other.bin_width_ != bin_width_) throw std::invalid_argument("Histogram: bin width mismatch");
    if (other.bins_.size() > bins_.size()) bins_.resize(other.bins_.size(), 0);
    for (std::size_t i = 0; i < other.bins_.size(); ++i) bins_[i] += other.bins_[i];
    count_ += other.count_;
    sum_ += other.sum_;
    sum_sq_ += other.sum_sq_;
  }

  double bin_width() const { return bin_width_; }
  const std::vector<std::uint64_t>& bins() const { return bins_; }
  std::uint64_t count() const { return count_; }
  double sum() const { return sum_; }

  double mean() const { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }

  // Sample standard deviation (n-1 denominator).
  double stddev() const {
    if (count_ < 2) return 0.0;
    const double n = static_cast<double>(count_);
    const double var = (sum_sq_ - sum_ * sum_ / n) / (n - 1.0);
    return var > 0.0 ? std::sqrt(var) : 0.0;
  }

  // Standard error of the mean.
  double mean_error() const {
    return count_ == 0 ? 0.0 : stddev() / std::sqrt(static_cast<double>(count_));
  }

  bool operator==(const Histogram& other) const {
    return bin_width_ == other.bin_width_ && bins_ == other.bins_ && count_ == other.count_ &&
           sum_ == other.sum_ && sum_sq_ == other.sum_sq_;
  }

 private:
  double bin_width_;
  std::vector<std::uint64_t> bins_;
  std::uint64_t count_ = 0;
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
};

} // namespace repsim
