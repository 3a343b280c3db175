#include "xlint/synthetic.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace xlint::synthetic {

namespace {
constexpr double kFeatureSd = 0.0476;
}

std::vector<FeatureMeta> DiabetesFeatures() {
  auto q = [](std::string name, std::string unit, std::string description) {
    FeatureMeta m;
    m.name = std::move(name);
    if (!unit.empty()) m.unit = std::move(unit);
    m.description = std::move(description);
    return m;
  };
  return {
      q("age", "years (standardized)", "age in years"),
      q("sex", "", "sex"),
      q("bmi", "kg/m^2 (standardized)", "body mass index"),
      q("bp", "mm Hg (standardized)", "average blood pressure"),
      q("s1", "", "tc"),
      q("s2", "", "ldl, low-density lipoproteins"),
      q("s3", "", "hdl, high-density lipoproteins"),
      q("s4", "", "tch"),
      q("s5", "", "ltg, log of serum triglycerides level"),
      q("s6", "", "glu, blood sugar level"),
  };
}

LinearModel DiabetesModel() {
  LinearModel m;
  m.intercept = 152.13;
  const std::pair<const char*, double> weights[] = {
      {"age", -10.0}, {"sex", -239.8}, {"bmi", 519.8}, {"bp", 324.4},
      {"s1", -792.2}, {"s2", 476.7},   {"s3", 101.0},  {"s4", 177.1},
      {"s5", 751.3},  {"s6", 67.6},
  };
  for (auto [name, w] : weights) {
    m.weights[name] = w;
    m.background_means[name] = 0.0;
  }
  return m;
}

ExplanationTable TableFromLinearModel(
    const std::vector<FeatureMeta>& features, const LinearModel& model,
    const std::vector<std::map<std::string, double>>& instances) {
  std::vector<Row> rows;
  rows.reserve(instances.size());
  double base_value = model.intercept;
  for (const auto& [name, mu] : model.background_means) base_value += model.weights.at(name) * mu;
  for (std::size_t r = 0; r < instances.size(); ++r) {
    ShapleyResult s = ExactShapleyLinear(model, instances[r]);
    Row row;
    row.id = "r" + std::to_string(r);
    for (const auto& f : features) {
      row.values.emplace_back(instances[r].at(f.name));
      row.attributions.push_back(s.attributions.at(f.name));
    }
    row.prediction = s.prediction;
    rows.push_back(std::move(row));
  }
  return ExplanationTable(features, base_value, std::move(rows));
}

ExplanationTable DiabetesLikeTable(std::uint64_t seed, std::size_t n_rows) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, kFeatureSd);
  const auto features = DiabetesFeatures();
  std::vector<std::map<std::string, double>> instances(n_rows);
  for (auto& inst : instances) {
    for (const auto& f : features) inst[f.name] = dist(rng);
  }
  return TableFromLinearModel(features, DiabetesModel(), instances);
}

ExplanationTable SignControlledTable(std::uint64_t seed, std::size_t n_rows,
                                     double positive_fraction) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, kFeatureSd);
  const auto features = DiabetesFeatures();
  const auto n_positive =
      static_cast<std::size_t>(std::llround(positive_fraction * static_cast<double>(n_rows)));

  std::vector<int> signs(n_rows, -1);
  std::fill(signs.begin(), signs.begin() + std::min(n_positive, n_rows), 1);
  std::shuffle(signs.begin(), signs.end(), rng);

  std::vector<std::map<std::string, double>> instances(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (const auto& f : features) instances[r][f.name] = dist(rng);
    double magnitude = std::fabs(instances[r]["bp"]);
    if (magnitude == 0) magnitude = kFeatureSd;
    instances[r]["bp"] = signs[r] * magnitude;
  }
  return TableFromLinearModel(features, DiabetesModel(), instances);
}

}  // namespace xlint::synthetic
