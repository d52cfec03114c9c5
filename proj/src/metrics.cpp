#include "diffret/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "diffret/error.hpp"

namespace diffret {

std::size_t rank_of_positive(std::span<const double> scores, std::size_t positive_index) {
  if (positive_index >= scores.size()) throw ContractError("rank: positive index out of range");
  const double pos = scores[positive_index];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > pos) ++rank;
    if (scores[j] == pos && j < positive_index) ++rank;
  }
  return rank;
}

RankMetrics rank_metrics(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw ContractError("rank_metrics: no ranks");
  const double n = static_cast<double>(ranks.size());
  RankMetrics m;
  double sum = 0.0;
  for (std::size_t r : ranks) {
    if (r < 1) throw ContractError("rank_metrics: rank below 1");
    m.r1 += r <= 1 ? 1.0 : 0.0;
    m.r5 += r <= 5 ? 1.0 : 0.0;
    m.r10 += r <= 10 ? 1.0 : 0.0;
    sum += static_cast<double>(r);
  }
  m.r1 *= 100.0 / n;
  m.r5 *= 100.0 / n;
  m.r10 *= 100.0 / n;
  m.rsum = m.r1 + m.r5 + m.r10;
  m.mnr = sum / n;
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t half = sorted.size() / 2;
  m.mdr = sorted.size() % 2 == 1
              ? static_cast<double>(sorted[half])
              : (static_cast<double>(sorted[half - 1]) + static_cast<double>(sorted[half])) / 2.0;
  return m;
}

double auroc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw ContractError("auroc: empty population");
  struct Entry {
    double score;
    bool positive;
  };
  std::vector<Entry> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.push_back({s, true});
  for (double s : negatives) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
    return a.score < b.score;
  });
  // midranks over ties
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].positive) pos_rank_sum += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

Histogram score_histogram(std::span<const double> positives, std::span<const double> negatives,
                          std::size_t bins) {
  if (bins == 0) throw ContractError("score_histogram: zero bins");
  if (positives.empty() || negatives.empty()) {
    throw ContractError("score_histogram: empty population");
  }
  Histogram h;
  h.lo = positives[0];
  h.hi = positives[0];
  for (double s : positives) {
    h.lo = std::min(h.lo, s);
    h.hi = std::max(h.hi, s);
  }
  for (double s : negatives) {
    h.lo = std::min(h.lo, s);
    h.hi = std::max(h.hi, s);
  }
  if (h.hi == h.lo) h.hi = h.lo + 1.0;  // degenerate: single shared bin range
  h.pos_counts.assign(bins, 0);
  h.neg_counts.assign(bins, 0);
  auto bin_of = [&](double s) {
    auto b = static_cast<std::size_t>((s - h.lo) / (h.hi - h.lo) * static_cast<double>(bins));
    return std::min(b, bins - 1);
  };
  for (double s : positives) ++h.pos_counts[bin_of(s)];
  for (double s : negatives) ++h.neg_counts[bin_of(s)];
  return h;
}

std::vector<double> fuse_scores(std::span<const double> sim_row,
                                std::span<const double> joint_row, double w) {
  if (sim_row.size() != joint_row.size()) throw ContractError("fuse_scores: length mismatch");
  if (sim_row.empty()) throw ContractError("fuse_scores: empty rows");
  if (w < 0.0 || w > 1.0) throw ConfigError("fuse_scores: w must lie in [0,1]");
  auto standardize = [](std::span<const double> row) {
    const double n = static_cast<double>(row.size());
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    const double stdev = std::max(std::sqrt(var / n), 1e-12);
    std::vector<double> z(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) z[i] = (row[i] - mean) / stdev;
    return z;
  };
  const std::vector<double> zs = standardize(sim_row);
  const std::vector<double> zj = standardize(joint_row);
  std::vector<double> fused(sim_row.size());
  for (std::size_t i = 0; i < fused.size(); ++i) {
    fused[i] = (1.0 - w) * zs[i] + w * zj[i];
  }
  return fused;
}

}  // namespace diffret
