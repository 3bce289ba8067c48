#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mecos/error.hpp"

namespace mecos {

struct RankOutcome {
  std::size_t rank = 1;  // 1-based, pessimistic under ties
  std::size_t candidate_count = 1;
};

inline int hr_at(std::size_t rank, std::size_t p) { return rank <= p ? 1 : 0; }

/// Single relevant item, so the ideal DCG is 1.
inline double ndcg_at(std::size_t rank, std::size_t p) {
  return rank <= p ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

inline double mrr(std::size_t rank) {
  if (rank == 0) throw DomainError("ranks are 1-based");
  return 1.0 / static_cast<double>(rank);
}

struct MetricSet {
  std::vector<std::size_t> cutoffs;
  std::vector<double> hr;
  std::vector<double> ndcg;
  double mrr = 0.0;
  std::size_t queries = 0;

  double hr_at(std::size_t p) const {
    for (std::size_t i = 0; i < cutoffs.size(); ++i)
      if (cutoffs[i] == p) return hr[i];
    throw DomainError("cutoff " + std::to_string(p) + " was not evaluated");
  }
  double ndcg_at(std::size_t p) const {
    for (std::size_t i = 0; i < cutoffs.size(); ++i)
      if (cutoffs[i] == p) return ndcg[i];
    throw DomainError("cutoff " + std::to_string(p) + " was not evaluated");
  }
};

/// Sums per-query metrics; result() divides once, so the outcome does not
/// depend on the order ranks arrive in beyond floating-point summation order.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::vector<std::size_t> cutoffs)
      : cutoffs_(std::move(cutoffs)), hr_(cutoffs_.size(), 0.0), ndcg_(cutoffs_.size(), 0.0) {
    for (std::size_t p : cutoffs_)
      if (p == 0) throw DomainError("cutoffs must be at least 1");
  }

  void add(RankOutcome outcome) {
    if (outcome.rank < 1 || outcome.rank > outcome.candidate_count) throw DomainError("rank outside [1, candidates]");
    for (std::size_t i = 0; i < cutoffs_.size(); ++i) {
      hr_[i] += mecos::hr_at(outcome.rank, cutoffs_[i]);
      ndcg_[i] += mecos::ndcg_at(outcome.rank, cutoffs_[i]);
    }
    mrr_ += mecos::mrr(outcome.rank);
    ++count_;
  }

  MetricSet result() const {
    MetricSet out;
    out.cutoffs = cutoffs_;
    out.queries = count_;
    const double n = count_ ? static_cast<double>(count_) : 1.0;
    for (std::size_t i = 0; i < cutoffs_.size(); ++i) {
      out.hr.push_back(hr_[i] / n);
      out.ndcg.push_back(ndcg_[i] / n);
    }
    out.mrr = mrr_ / n;
    return out;
  }

 private:
  std::vector<std::size_t> cutoffs_;
  std::vector<double> hr_, ndcg_;
  double mrr_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace mecos
