#pragma once

// Seeded explanation tables with exact Shapley attributions from a linear
// model over independent features. Used for tests, demos and the worked
// scenarios in the README.

#include <cstdint>
#include <vector>

#include "xlint/attribution_data.h"

namespace xlint::synthetic {

// The ten inputs of the classic diabetes-progression regression task:
// age, sex, bmi, bp and six blood serum measurements s1..s6.
std::vector<FeatureMeta> DiabetesFeatures();

// A linear model shaped like a least-squares fit on the diabetes data.
LinearModel DiabetesModel();

// Builds a table from explicit feature values (one map per row). Row ids are
// "r0", "r1", ...
ExplanationTable TableFromLinearModel(const std::vector<FeatureMeta>& features,
                                      const LinearModel& model,
                                      const std::vector<std::map<std::string, double>>& instances);

// Independent, roughly N(0, 0.0476) features (the scale of the standardized
// diabetes data).
ExplanationTable DiabetesLikeTable(std::uint64_t seed, std::size_t n_rows);

// Like DiabetesLikeTable but exactly round(positive_fraction * n_rows) rows
// have a positive bp value, and therefore a positive bp attribution; the
// remainder are strictly negative.
ExplanationTable SignControlledTable(std::uint64_t seed, std::size_t n_rows,
                                     double positive_fraction);

}  // namespace xlint::synthetic
