#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace diffret {

// Rank of the positive candidate under stable descending sort: 1 + count of
// strictly greater scores + count of equal scores at earlier gallery
// positions.
std::size_t rank_of_positive(std::span<const double> scores, std::size_t positive_index);

struct RankMetrics {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;  // percentages
  double rsum = 0.0;
  double mdr = 0.0;  // median rank, midpoint convention for even counts
  double mnr = 0.0;  // mean rank
};

RankMetrics rank_metrics(std::span<const std::size_t> ranks);

// Mann-Whitney AUROC with midrank tie handling: probability that a random
// positive outscores a random negative.
double auroc(std::span<const double> positives, std::span<const double> negatives);

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<std::size_t> pos_counts, neg_counts;
};

// Shared-range fixed-bin histogram of both score populations.
Histogram score_histogram(std::span<const double> positives, std::span<const double> negatives,
                          std::size_t bins = 20);

// fused = (1-w) * z(sim) + w * z(joint), z standardizing each row to zero
// mean and unit (population) stdev, stdev guarded at 1e-12.
std::vector<double> fuse_scores(std::span<const double> sim_row,
                                std::span<const double> joint_row, double w);

}  // namespace diffret
