#include "oracle.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace xlint::testing {

namespace {

std::size_t Col(const ExplanationTable& t, const std::string& name) {
  for (std::size_t i = 0; i < t.features().size(); ++i) {
    if (t.features()[i].name == name) return i;
  }
  throw std::runtime_error("oracle: unknown feature " + name);
}

bool Keep(const ExplanationTable& t, const Row& row, const Conditions& conds) {
  for (const auto& c : conds) {
    const Cell& cell = row.values[Col(t, c.feature)];
    if (cell.index() == 1) {
      if (std::get<1>(cell) != c.category.value_or("")) return false;
      continue;
    }
    const double v = std::get<0>(cell);
    bool ok = false;
    if (c.op == ConditionOp::kLess) ok = v < c.bounds.at(0);
    if (c.op == ConditionOp::kLessEqual) ok = !(v > c.bounds.at(0));
    if (c.op == ConditionOp::kGreater) ok = v > c.bounds.at(0);
    if (c.op == ConditionOp::kGreaterEqual) ok = !(v < c.bounds.at(0));
    if (c.op == ConditionOp::kEqual) ok = v == c.bounds.at(0);
    if (c.op == ConditionOp::kInRange) ok = !(v < c.bounds.at(0)) && !(v > c.bounds.at(1));
    if (!ok) return false;
  }
  return true;
}

std::vector<long double> Column(const ExplanationTable& t, const std::vector<const Row*>& rows,
                                const TVariable& v) {
  const std::size_t k = Col(t, v.feature);
  std::vector<long double> out;
  for (const Row* r : rows) {
    out.push_back(v.facet == Facet::kAttribution ? r->attributions[k]
                                                 : std::get<0>(r->values[k]));
  }
  return out;
}

bool Holds(long double x, Comparator c, long double k) {
  switch (c) {
    case Comparator::kLess: return x < k;
    case Comparator::kLessEqual: return x <= k;
    case Comparator::kGreater: return x > k;
    case Comparator::kGreaterEqual: return x >= k;
    case Comparator::kEqual:
    case Comparator::kApprox: return x == k;
  }
  return false;
}

bool Near(long double a, long double b, long double tol) {
  const long double scale = std::max(std::fabs(a), std::fabs(b));
  return std::fabs(a - b) <= tol * scale;
}

std::optional<long double> Aggregate(const std::vector<long double>& xs, const TVariable& v) {
  const long double n = xs.size();
  switch (v.aggregator) {
    case Aggregator::kMean:
      if (xs.empty()) return std::nullopt;
      return std::accumulate(xs.begin(), xs.end(), 0.0L) / n;
    case Aggregator::kVariance: {
      if (xs.size() < 2) return std::nullopt;
      // Mean of squared pairwise differences / 2 equals the unbiased variance.
      long double s = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = i + 1; j < xs.size(); ++j) s += (xs[i] - xs[j]) * (xs[i] - xs[j]);
      }
      return s / (n * (n - 1));
    }
    case Aggregator::kMin:
      if (xs.empty()) return std::nullopt;
      return *std::min_element(xs.begin(), xs.end());
    case Aggregator::kMax:
      if (xs.empty()) return std::nullopt;
      return *std::max_element(xs.begin(), xs.end());
    case Aggregator::kCount:
    case Aggregator::kFraction: {
      long double hits = 0;
      for (long double x : xs) hits += Holds(x, v.predicate->comparator, v.predicate->constant);
      if (v.aggregator == Aggregator::kCount) return hits;
      if (xs.empty()) return std::nullopt;
      return hits / n;
    }
    case Aggregator::kIdentity: break;
  }
  throw std::runtime_error("oracle: identity cannot be aggregated");
}

std::optional<long double> Corr(const std::vector<long double>& x,
                                const std::vector<long double>& y) {
  const std::size_t n = x.size();
  auto constant = [](const std::vector<long double>& v) {
    return std::all_of(v.begin(), v.end(), [&](long double a) { return a == v[0]; });
  };
  if (n < 2 || constant(x) || constant(y)) return std::nullopt;
  // Textbook sums-of-products form.
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / n, my = sy / n;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  long double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0L, 1.0L);
}

// Rank by counting: 1 + #less + (#equal - 1) / 2.
std::vector<long double> Ranks(const std::vector<long double>& v) {
  std::vector<long double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    long double less = 0, equal = 0;
    for (long double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = 1 + less + (equal - 1) / 2;
  }
  return r;
}

OracleVerdict Undetermined(std::size_t n) {
  OracleVerdict v;
  v.statistics["n_rows"] = static_cast<double>(n);
  return v;
}

}  // namespace

OracleVerdict OracleEvaluate(const StructuredInsight& insight, const ExplanationTable& table,
                             const OracleOptions& o) {
  std::vector<const Row*> rows;
  const Conditions& conds = std::visit([](const auto& i) -> const Conditions& {
    return i.conditions;
  }, insight);
  for (const Row& r : table.rows()) {
    if (Keep(table, r, conds)) rows.push_back(&r);
  }
  const std::size_t n = rows.size();

  if (const auto* read = std::get_if<ReadInsight>(&insight)) {
    if (n < o.min_rows) return Undetermined(n);
    auto s = Aggregate(Column(table, rows, read->variable), read->variable);
    if (!s) return Undetermined(n);
    const bool ok = read->comparator == Comparator::kApprox
                        ? Near(*s, read->threshold, o.approx_tolerance)
                        : Holds(*s, read->comparator, read->threshold);
    OracleVerdict v;
    v.outcome = ok ? Outcome::kSupported : Outcome::kRefuted;
    v.statistics = {{"statistic", static_cast<double>(*s)},
                    {std::string(ToString(read->variable.aggregator)), static_cast<double>(*s)},
                    {"threshold", read->threshold},
                    {"n_rows", static_cast<double>(n)}};
    return v;
  }
  if (const auto* corr = std::get_if<CorrelationInsight>(&insight)) {
    if (n < o.min_correlation_rows) return Undetermined(n);
    const auto xs = Column(table, rows, corr->x);
    const auto ys = Column(table, rows, corr->y);
    auto r = Corr(xs, ys);
    if (!r) return Undetermined(n);
    const Direction d = *r >= o.tau ? Direction::kPositive
                        : *r <= -o.tau ? Direction::kNegative
                                       : Direction::kNone;
    OracleVerdict v;
    v.outcome = d == corr->direction ? Outcome::kSupported : Outcome::kRefuted;
    v.statistics = {{"pearson_r", static_cast<double>(*r)},
                    {"n_rows", static_cast<double>(n)},
                    {"tau", static_cast<double>(o.tau)}};
    if (auto rho = Corr(Ranks(xs), Ranks(ys))) v.statistics["spearman_rho"] = *rho;
    return v;
  }
  const auto& cmp = std::get<ComparisonInsight>(insight);
  if (n < o.min_rows) return Undetermined(n);
  auto l = Aggregate(Column(table, rows, cmp.left), cmp.left);
  auto r = Aggregate(Column(table, rows, cmp.right), cmp.right);
  if (!l || !r) return Undetermined(n);
  bool ok = false;
  if (cmp.relation == Relation::kGreater) ok = *l > *r;
  if (cmp.relation == Relation::kLess) ok = *l < *r;
  if (cmp.relation == Relation::kApproxEqual) ok = Near(*l, *r, o.approx_tolerance);
  OracleVerdict v;
  v.outcome = ok ? Outcome::kSupported : Outcome::kRefuted;
  v.statistics = {{"lhs", static_cast<double>(*l)},
                  {"rhs", static_cast<double>(*r)},
                  {"n_rows", static_cast<double>(n)}};
  return v;
}

std::vector<double> PermutationShapley(const std::vector<double>& w, const std::vector<double>& x,
                                       const std::vector<double>& mu) {
  const std::size_t n = w.size();
  // f(S) = sum_{i in S} w_i x_i + sum_{i not in S} w_i mu_i (interventional).
  auto f = [&](const std::vector<bool>& present) {
    long double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * (present[i] ? x[i] : mu[i]);
    return s;
  };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<long double> phi(n, 0);
  long double perms = 0;
  do {
    std::vector<bool> present(n, false);
    long double before = f(present);
    for (std::size_t i : order) {
      present[i] = true;
      const long double after = f(present);
      phi[i] += after - before;
      before = after;
    }
    perms += 1;
  } while (std::next_permutation(order.begin(), order.end()));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(phi[i] / perms);
  return out;
}

}  // namespace xlint::testing
