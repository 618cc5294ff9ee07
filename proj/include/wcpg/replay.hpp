#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace wcpg {

inline constexpr std::size_t kObsDim = 16;
using Observation = std::array<double, kObsDim>;

struct Transition {
  Observation state{};  // raw, unnormalized
  double action = 0.0;
  double reward = 0.0;
  Observation next_state{};
  bool done = false;
  double alpha = 1.0;
};

inline bool is_valid(const Transition& t) {
  for (double v : t.state)
    if (!std::isfinite(v)) return false;
  for (double v : t.next_state)
    if (!std::isfinite(v)) return false;
  return std::isfinite(t.action) && std::isfinite(t.reward) && t.alpha >= 0.01 && t.alpha <= 1.0;
}

/// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 1'000'000;

  explicit ReplayBuffer(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  }

  void push(const Transition& t) {
    if (!is_valid(t)) throw std::invalid_argument("transition has non-finite fields or bad alpha");
    if (data_.size() < capacity_)
      data_.push_back(t);
    else
      data_[head_] = t;
    head_ = (head_ + 1) % capacity_;
    ++inserted_;
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t insertion_count() const { return inserted_; }

  /// i-th oldest element still held.
  const Transition& at(std::size_t i) const {
    if (i >= data_.size()) throw std::out_of_range("replay index");
    const std::size_t oldest = data_.size() < capacity_ ? 0 : head_;
    return data_[(oldest + i) % capacity_];
  }

  /// Uniform sampling with replacement.
  template <typename Rng>
  std::vector<Transition> sample(std::size_t n, Rng& rng) const {
    if (n > data_.size() || data_.empty())
      throw std::invalid_argument("replay buffer holds fewer transitions than requested");
    std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
    std::vector<Transition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(data_[pick(rng)]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition> data_;
  std::size_t head_ = 0;
  std::uint64_t inserted_ = 0;
};

/// Per-dimension streaming mean/variance (Welford). Identity until the first update.
class RunningNormalizer {
 public:
  static constexpr double kEpsilon = 1e-8;

  void update(const Observation& x) {
    for (double v : x)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite value passed to normalizer");
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < kObsDim; ++i) {
      const double delta = x[i] - mean_[i];
      mean_[i] += delta / n;
      m2_[i] += delta * (x[i] - mean_[i]);
    }
  }

  /// Chan et al. parallel combination, used to check order independence.
  void merge(const RunningNormalizer& o) {
    if (o.count_ == 0) return;
    const double na = static_cast<double>(count_), nb = static_cast<double>(o.count_);
    const double n = na + nb;
    for (std::size_t i = 0; i < kObsDim; ++i) {
      const double delta = o.mean_[i] - mean_[i];
      mean_[i] += delta * nb / n;
      m2_[i] += o.m2_[i] + delta * delta * na * nb / n;
    }
    count_ += o.count_;
  }

  Observation normalize(const Observation& x) const {
    if (count_ == 0) return x;
    Observation out{};
    for (std::size_t i = 0; i < kObsDim; ++i)
      out[i] = (x[i] - mean_[i]) / std::sqrt(variance(i) + kEpsilon);
    return out;
  }

  double variance(std::size_t i) const {
    return count_ == 0 ? 0.0 : std::max(0.0, m2_[i] / static_cast<double>(count_));
  }

  std::uint64_t count() const { return count_; }
  const Observation& mean() const { return mean_; }
  const Observation& m2() const { return m2_; }

  void restore(std::uint64_t count, const Observation& mean, const Observation& m2) {
    count_ = count;
    mean_ = mean;
    m2_ = m2;
  }

 private:
  std::uint64_t count_ = 0;
  Observation mean_{};
  Observation m2_{};
};

}  // namespace wcpg
