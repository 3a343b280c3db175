#pragma once

#include <optional>
#include <span>
#include <vector>

namespace xlint::stats {

// nullopt where the statistic is undefined for the sample.
std::optional<double> Mean(std::span<const double> xs);
// Unbiased (n - 1) sample variance; needs two values.
std::optional<double> Variance(std::span<const double> xs);
std::optional<double> Min(std::span<const double> xs);
std::optional<double> Max(std::span<const double> xs);

// Pearson product-moment correlation; undefined for n < 2 or a constant
// series.
std::optional<double> Pearson(std::span<const double> xs, std::span<const double> ys);

// Pearson correlation of mid-ranks (ties share their average rank).
std::optional<double> Spearman(std::span<const double> xs, std::span<const double> ys);

std::vector<double> MidRanks(std::span<const double> xs);

}  // namespace xlint::stats
