// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Tolerances and budgets are fixed here.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "httplib.h"
#include "insight_gen.h"
#include "json_schema.h"
#include "oracle.h"
#include "xlint/error.h"
#include "xlint/evaluator.h"
#include "xlint/extractor.h"
#include "xlint/grammar.h"
#include "xlint/reverse_mapper.h"
#include "xlint/service.h"
#include "xlint/synthetic.h"
#include "xlint/text_util.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace xlint;

namespace {

constexpr double kShapleyTol = 1e-9;
constexpr double kStatTol = 1e-9;
constexpr double kShapleyBudgetS = 10;
constexpr double kRoundTripBudgetS = 60;
constexpr double kOracleBudgetS = 60;
constexpr int kShapleyModels = 200;
constexpr int kRoundTrips = 10000;
constexpr int kOracleTables = 500;
constexpr int kInsightsPerTable = 4;
constexpr std::size_t kCaseRows = 200;
constexpr std::uint64_t kCaseSeed = 7;

const std::string kCase1 =
    "there is no correlation between blood pressure attributions and serum triglycerides "
    "attributions";
const std::string kCase2 =
    "the number of patients with positive attribution for blood pressure is greater than the "
    "number with negative attribution";

std::string SourceDir() { return XLINT_SOURCE_DIR; }

// Collects failure messages; the first few are printed.
struct Check {
  std::vector<std::string> failures;
  void Expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  bool ok() const { return failures.empty(); }
};

struct Outcome_ {
  bool pass;
  std::string detail;
};

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string Detail(const Check& c, const std::string& ok_text) {
  if (c.ok()) return ok_text;
  std::string out = std::to_string(c.failures.size()) + " failure(s): " + c.failures[0];
  for (std::size_t i = 1; i < c.failures.size() && i < 3; ++i) out += " | " + c.failures[i];
  return out;
}

// ---------------------------------------------------------------------------

Outcome_ ShapleyCriterion() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240501);
  std::normal_distribution<double> normal(0, 3);
  Check c;
  double worst = 0;
  for (int m = 0; m < kShapleyModels; ++m) {
    const int n = std::uniform_int_distribution<int>(1, 8)(rng);
    LinearModel model;
    model.intercept = normal(rng);
    std::map<std::string, double> instance;
    std::vector<double> w, x, mu;
    for (int i = 0; i < n; ++i) {
      const std::string name = "f" + std::to_string(i);
      w.push_back(normal(rng));
      mu.push_back(normal(rng));
      x.push_back(normal(rng));
      model.weights[name] = w.back();
      model.background_means[name] = mu.back();
      instance[name] = x.back();
    }
    const ShapleyResult exact = ExactShapleyLinear(model, instance);
    // f(S): features outside S are replaced by their background mean.
    const auto value = [&](std::uint32_t s) {
      double v = model.intercept;
      for (int i = 0; i < n; ++i) v += w[i] * ((s >> i) & 1u ? x[i] : mu[i]);
      return v;
    };
    const std::vector<double> brute = BruteForceShapley(value, n);
    const std::vector<double> perm = testing::PermutationShapley(w, x, mu);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
      const double e = exact.attributions.at("f" + std::to_string(i));
      worst = std::max({worst, std::fabs(e - brute[i]), std::fabs(e - perm[i])});
      c.Expect(std::fabs(e - brute[i]) <= kShapleyTol,
               "model " + std::to_string(m) + " feature " + std::to_string(i) + " vs brute force");
      c.Expect(std::fabs(e - perm[i]) <= kShapleyTol,
               "model " + std::to_string(m) + " feature " + std::to_string(i) + " vs permutations");
      sum += e;
    }
    c.Expect(std::fabs(exact.base_value + sum - exact.prediction) <= kShapleyTol,
             "model " + std::to_string(m) + " efficiency");
    c.Expect(std::fabs(exact.prediction - value((1u << n) - 1)) <= kShapleyTol,
             "model " + std::to_string(m) + " prediction");
  }
  const double t = Seconds(start);
  c.Expect(t < kShapleyBudgetS, "runtime " + FormatNumber(t) + " s");
  return {c.ok(), Detail(c, std::to_string(kShapleyModels) + " models, max |d| = " +
                                FormatNumber(worst) + ", " + FormatNumber(t) + " s")};
}

Outcome_ RoundTripCriterion() {
  const auto start = std::chrono::steady_clock::now();
  const ExplanationTable table = testing::VocabularyTable(11, 30);
  std::mt19937_64 rng(77);
  Check c;
  int multi_word = 0;
  for (int i = 0; i < kRoundTrips; ++i) {
    const StructuredInsight insight = testing::RandomInsight(rng, table, {2, false});
    if (!Bind(insight, table).ok()) {
      c.Expect(false, "generated insight does not bind: " + Serialize(insight));
      continue;
    }
    const std::string text = Render(insight).Flatten();
    if (text.find("blood pressure") != std::string::npos ||
        text.find("number of visits") != std::string::npos) {
      ++multi_word;
    }
    const ParseOutcome p = ParseControlled(text, table);
    c.Expect(p.kind == ParseOutcome::Kind::kInsight && p.insight && *p.insight == insight,
             "\"" + text + "\"");
  }
  const double t = Seconds(start);
  c.Expect(t < kRoundTripBudgetS, "runtime " + FormatNumber(t) + " s");
  c.Expect(multi_word > kRoundTrips / 10, "too few multi-word names exercised");
  return {c.ok(), Detail(c, std::to_string(kRoundTrips) + " insights, 0 failures, " +
                                std::to_string(multi_word) + " with multi-word names, " +
                                FormatNumber(t) + " s")};
}

Outcome_ EvaluatorOracleCriterion() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(4242);
  Check c;
  std::map<Outcome, int> seen;
  for (int k = 0; k < kOracleTables; ++k) {
    const ExplanationTable table = testing::RandomGridTable(rng, {50, 6, true});
    for (int j = 0; j < kInsightsPerTable; ++j) {
      const StructuredInsight insight = testing::RandomInsight(rng, table, {2, true});
      const auto bound = Bind(insight, table);
      if (!bound.ok()) {
        c.Expect(false, "unbound " + Serialize(insight));
        continue;
      }
      const Verdict got = Evaluate(*bound.bound, table);
      const testing::OracleVerdict want = testing::OracleEvaluate(insight, table);
      const std::string where = "table " + std::to_string(k) + " " + Serialize(insight);
      seen[got.outcome]++;
      c.Expect(got.outcome == want.outcome, where + ": outcome " +
                                                std::string(ToString(got.outcome)) + " vs " +
                                                std::string(ToString(want.outcome)));
      std::set<std::string> keys_got, keys_want;
      for (const auto& [key, v] : got.statistics) keys_got.insert(key);
      for (const auto& [key, v] : want.statistics) keys_want.insert(key);
      c.Expect(keys_got == keys_want, where + ": statistic names differ");
      for (const auto& [key, v] : want.statistics) {
        auto it = got.statistics.find(key);
        if (it == got.statistics.end()) continue;
        c.Expect(std::fabs(it->second - v) <= kStatTol,
                 where + ": " + key + " " + FormatNumber(it->second) + " vs " + FormatNumber(v));
      }
    }
  }
  const double t = Seconds(start);
  c.Expect(t < kOracleBudgetS, "runtime " + FormatNumber(t) + " s");
  c.Expect(seen[Outcome::kSupported] > 0 && seen[Outcome::kRefuted] > 0 &&
               seen[Outcome::kUndetermined] > 0,
           "not every outcome was exercised");
  return {c.ok(), Detail(c, std::to_string(kOracleTables) + " tables x " +
                                std::to_string(kInsightsPerTable) + " insights (" +
                                std::to_string(seen[Outcome::kSupported]) + " supported, " +
                                std::to_string(seen[Outcome::kRefuted]) + " refuted, " +
                                std::to_string(seen[Outcome::kUndetermined]) +
                                " undetermined), " + FormatNumber(t) + " s")};
}

const json* FindLayer(const json& spec, const std::string& kind) {
  for (const auto& l : spec.at("layers")) {
    if (l.at("kind") == kind) return &l;
  }
  return nullptr;
}

bool FieldIs(const json& enc, const std::string& feature, const std::string& facet) {
  return enc.at("field").at("kind") == "feature" && enc["field"].at("feature") == feature &&
         enc["field"].at("facet") == facet;
}

Outcome_ Case1Criterion() {
  const ExplanationTable table = synthetic::DiabetesLikeTable(kCaseSeed, kCaseRows);
  Check c;
  const ParseOutcome p = ParseControlled(kCase1, table);
  if (p.kind != ParseOutcome::Kind::kInsight) return {false, "sentence did not parse"};
  const auto* corr = std::get_if<CorrelationInsight>(&*p.insight);
  c.Expect(corr != nullptr, "not a correlation");
  if (!corr) return {false, Detail(c, "")};
  c.Expect(corr->direction == Direction::kNone, "direction is not none");
  c.Expect(corr->x == TVariable{"bp", Facet::kAttribution, Aggregator::kIdentity, std::nullopt},
           "x is not bp attribution");
  c.Expect(corr->y == TVariable{"s5", Facet::kAttribution, Aggregator::kIdentity, std::nullopt},
           "y is not s5 attribution");

  const BoundInsight bound{*p.insight};
  const Verdict v = Evaluate(bound, table);
  const double r = v.statistics.count("pearson_r") ? v.statistics.at("pearson_r") : NAN;
  const auto oracle = testing::OracleEvaluate(bound.insight, table);
  c.Expect(v.outcome == Outcome::kSupported, "verdict is not supported");
  c.Expect(std::fabs(r) < 0.3, "|r| >= 0.3");
  c.Expect(std::fabs(r - oracle.statistics.at("pearson_r")) <= kStatTol, "r disagrees with oracle");

  const MappingResult m = Map(bound, HeatmapSpec("ds-case1"));
  const json mj = ToJson(m);
  const json& ann = mj.at("annotated_spec");
  const json* dim = FindLayer(ann, "dim");
  c.Expect(dim != nullptr, "no dim layer");
  if (dim) {
    std::set<std::string> keep;
    for (const auto& f : dim->at("keep").at("features")) keep.insert(f.get<std::string>());
    c.Expect(keep == std::set<std::string>{"bp", "s5"}, "dim keeps " + dim->at("keep").dump());
    c.Expect(dim->at("keep").at("conditions").empty(), "dim has row conditions");
    c.Expect(dim->at("opacity") == kDefaultDimOpacity, "dim opacity");
    std::size_t dimmed = 0;
    for (const auto& f : table.features()) dimmed += keep.count(f.name) == 0;
    c.Expect(dimmed == table.features().size() - 2, "dimmed rows " + std::to_string(dimmed));
  }
  c.Expect(ann.at("encodings").at("y").at("field").at("kind") == "feature-name",
           "heatmap rows are not features");
  const json& rec = mj.at("recommended_spec");
  c.Expect(!rec.is_null(), "no recommended spec");
  if (!rec.is_null()) {
    c.Expect(rec.at("mark") == "point", "recommended mark " + rec.at("mark").dump());
    c.Expect(FieldIs(rec.at("encodings").at("x"), "bp", "attribution"), "x field");
    c.Expect(FieldIs(rec.at("encodings").at("y"), "s5", "attribution"), "y field");
  }
  c.Expect(mj.at("rule_id") == "correlation->scatter", "rule " + mj.at("rule_id").dump());

  // The compiled heatmap dims by feature name.
  const json compiled = CompileMapping(m, table);
  const std::string test =
      compiled.at("annotated").at("layer")[0].at("encoding").at("opacity").at("condition").at(
          "test");
  c.Expect(test == "indexof([\"bp\", \"s5\"], datum.feature) >= 0" ||
               test == "indexof([\"s5\", \"bp\"], datum.feature) >= 0",
           "compiled dim test: " + test);
  return {c.ok(), Detail(c, "r = " + FormatNumber(r) + ", supported, 8 of 10 rows dimmed, "
                                                       "scatter(bp attribution, s5 attribution)")};
}

Outcome_ Case2Criterion() {
  const ExplanationTable table = synthetic::SignControlledTable(kCaseSeed, kCaseRows, 0.4);
  Check c;
  const ParseOutcome p = ParseControlled(kCase2, table);
  if (p.kind != ParseOutcome::Kind::kInsight) return {false, "sentence did not parse"};
  const ComparisonInsight want{{"bp", Facet::kAttribution, Aggregator::kCount,
                                Predicate{Comparator::kGreater, 0}},
                               {"bp", Facet::kAttribution, Aggregator::kCount,
                                Predicate{Comparator::kLess, 0}},
                               Relation::kGreater,
                               {}};
  c.Expect(*p.insight == StructuredInsight{want}, "parsed " + p.document.dump());
  const BoundInsight bound{*p.insight};
  const Verdict v = Evaluate(bound, table);
  c.Expect(v.outcome == Outcome::kRefuted, "verdict is not refuted");
  c.Expect(v.statistics.at("lhs") == 80 && v.statistics.at("rhs") == 120,
           "lhs/rhs " + FormatNumber(v.statistics.at("lhs")) + "/" +
               FormatNumber(v.statistics.at("rhs")));

  TVariable bp_value{"bp", Facet::kValue, Aggregator::kIdentity, std::nullopt};
  TVariable bp_attr{"bp", Facet::kAttribution, Aggregator::kIdentity, std::nullopt};
  const MappingResult m = Map(bound, ScatterSpec("ds-case2", bp_value, bp_attr));
  const json mj = ToJson(m);
  const json& rec = mj.at("recommended_spec");
  c.Expect(!rec.is_null(), "no recommended spec");
  if (rec.is_null()) return {false, Detail(c, "")};
  c.Expect(rec.at("mark") == "beeswarm-point", "mark " + rec.at("mark").dump());
  c.Expect(rec.at("split").at("feature") == "bp" && rec["split"].at("facet") == "attribution" &&
               rec["split"].at("predicate").at("comparator") == ">" &&
               rec["split"]["predicate"].at("constant") == 0,
           "split " + rec.at("split").dump());
  c.Expect(rec.at("encodings").at("color").at("field").at("kind") == "split-side",
           "sides are not colored");

  const json compiled = CompileMapping(m, table);
  int left = 0, right = 0;
  for (const auto& r : compiled.at("recommended").at("data").at("values")) {
    left += r.at("_side") == "left";
    right += r.at("_side") == "right";
  }
  c.Expect(left == 120 && right == 80,
           "left/right " + std::to_string(left) + "/" + std::to_string(right));
  return {c.ok(), Detail(c, "refuted with lhs=80 rhs=120, dual beeswarm left/right = " +
                                std::to_string(left) + "/" + std::to_string(right))};
}

// Expected reference lines, computed from the insight and the base spec.
std::set<std::pair<Channel, double>> ExpectedLines(const StructuredInsight& insight,
                                                   const VisSpec& spec, bool* from_conditions) {
  std::set<std::pair<Channel, double>> out;
  *from_conditions = false;
  auto positional = [&](Channel ch, const FieldRef& f) {
    auto it = spec.encodings.find(ch);
    return it != spec.encodings.end() && it->second.scale == Scale::kLinear &&
           it->second.field == f;
  };
  for (const auto& cond : ConditionsOf(insight)) {
    for (double b : cond.bounds) {
      for (Channel ch : {Channel::kX, Channel::kY}) {
        if (positional(ch, FieldRef::Of(cond.feature, Facet::kValue))) {
          out.insert({ch, b});
          *from_conditions = true;
        }
      }
    }
  }
  if (const auto* r = std::get_if<ReadInsight>(&insight)) {
    const auto a = r->variable.aggregator;
    if (a == Aggregator::kMean || a == Aggregator::kMin || a == Aggregator::kMax) {
      for (Channel ch : {Channel::kX, Channel::kY}) {
        if (positional(ch, FieldRef::Of(r->variable.feature, r->variable.facet)) ||
            positional(ch, FieldRef{FieldKind::kMelted, "", r->variable.facet})) {
          out.insert({ch, r->threshold});
        }
      }
    }
  }
  return out;
}

Outcome_ AnnotationCriterion() {
  const ExplanationTable table = synthetic::DiabetesLikeTable(3, 60);
  std::mt19937_64 rng(99);
  Check c;
  int lines_checked = 0, no_match = 0;
  const auto& features = table.features();
  auto any_var = [&]() {
    TVariable v;
    v.feature = features[std::uniform_int_distribution<std::size_t>(0, features.size() - 1)(rng)]
                    .name;
    v.facet = std::bernoulli_distribution(0.5)(rng) ? Facet::kValue : Facet::kAttribution;
    return v;
  };
  for (int trial = 0; trial < 2000; ++trial) {
    const StructuredInsight insight = testing::RandomInsight(rng, table, {3, false});
    // Half of the charts encode something the insight mentions, so that
    // matches are common.
    std::vector<TVariable> mentioned;
    std::visit(
        [&](const auto& i) {
          using T = std::decay_t<decltype(i)>;
          if constexpr (std::is_same_v<T, ReadInsight>) mentioned.push_back(i.variable);
          if constexpr (std::is_same_v<T, CorrelationInsight>) mentioned = {i.x, i.y};
          if constexpr (std::is_same_v<T, ComparisonInsight>) mentioned = {i.left, i.right};
        },
        insight);
    for (const auto& cond : ConditionsOf(insight)) {
      if (!cond.category) mentioned.push_back({cond.feature, Facet::kValue, {}, std::nullopt});
    }
    auto pick = [&]() {
      if (std::bernoulli_distribution(0.5)(rng)) return any_var();
      TVariable v = mentioned[std::uniform_int_distribution<std::size_t>(0, mentioned.size() - 1)(rng)];
      if (table.Feature(v.feature).kind == FeatureKind::kCategorical) v.facet = Facet::kAttribution;
      return TVariable{v.feature, v.facet, Aggregator::kIdentity, std::nullopt};
    };
    VisSpec base;
    switch (trial % 4) {
      case 0: base = HeatmapSpec("ds"); break;
      case 1: {
        TVariable x = pick(), y = pick();
        while (y == x) y = any_var();
        base = ScatterSpec("ds", x, y);
        break;
      }
      case 2: {
        TVariable v = pick();
        base = BeeswarmSpec("ds", v.feature, v.facet);
        break;
      }
      default: {
        TVariable v = pick();
        base = DualBeeswarmSpec("ds", Split{v.feature, v.facet, Predicate{Comparator::kGreater, 0}});
      }
    }
    const double opacity = std::uniform_int_distribution<int>(5, 95)(rng) / 100.0;
    const BoundInsight bound{insight};
    const AnnotateResult ann = Annotate(bound, base, {opacity});
    const std::string where = "trial " + std::to_string(trial);

    // Structural subset: mark, encodings and existing layers untouched.
    c.Expect(ann.spec.mark == base.mark, where + ": mark changed");
    c.Expect(ann.spec.encodings == base.encodings, where + ": encodings changed");
    c.Expect(ann.spec.split == base.split && ann.spec.title == base.title, where + ": changed");
    c.Expect(ann.spec.layers.size() >= base.layers.size() &&
                 std::equal(base.layers.begin(), base.layers.end(), ann.spec.layers.begin()),
             where + ": base layers changed");
    c.Expect(OnlyAppendedLayers(base, ann.spec), where + ": OnlyAppendedLayers");
    if (ann.no_match) {
      ++no_match;
      c.Expect(ann.spec == base, where + ": no-match spec differs");
      continue;
    }

    bool from_conditions = false;
    const auto expected = ExpectedLines(insight, base, &from_conditions);
    std::map<std::pair<Channel, double>, int> got;
    for (const auto& l : ann.spec.layers) {
      if (l.kind == LayerKind::kDim) {
        c.Expect(l.opacity == opacity, where + ": dim opacity " + FormatNumber(l.opacity));
      }
      if (l.kind == LayerKind::kReferenceLine) {
        c.Expect(l.dashed, where + ": solid reference line");
        got[{l.channel, l.at}]++;
      }
    }
    for (const auto& [key, count] : got) {
      c.Expect(count == 1, where + ": duplicate line at " + FormatNumber(key.second));
      c.Expect(expected.count(key) == 1, where + ": unexpected line at " + FormatNumber(key.second));
    }
    for (const auto& key : expected) {
      c.Expect(got.count(key) == 1, where + ": missing line at " + FormatNumber(key.second));
      ++lines_checked;
    }

    // The compiled chart carries the configured opacity and one dashed rule
    // per line.
    CheckSpec(ann.spec, table);
    const json vl = Compile(ann.spec, table);
    const json& layers = vl.contains("layer") ? vl["layer"] : vl.at("spec").at("layer");
    const bool has_dim = std::any_of(ann.spec.layers.begin(), ann.spec.layers.end(),
                                     [](const AnnotationLayer& l) { return l.kind == LayerKind::kDim; });
    c.Expect(has_dim, where + ": no dim layer");
    if (has_dim) {
      c.Expect(layers[0].at("encoding").at("opacity").at("value") == opacity,
               where + ": compiled opacity");
    }
    std::size_t rules = 0;
    for (std::size_t i = 1; i < layers.size(); ++i) {
      if (layers[i].at("mark").at("type") == "rule") {
        ++rules;
        c.Expect(layers[i]["mark"].at("strokeDash").is_array(), where + ": rule not dashed");
      }
    }
    c.Expect(rules == got.size(), where + ": compiled rules " + std::to_string(rules));
  }
  return {c.ok(), Detail(c, "2000 insight/spec pairs, " + std::to_string(lines_checked) +
                                " expected lines matched, " + std::to_string(no_match) +
                                " no-match cases unchanged")};
}

Outcome_ RecommenderCriterion() {
  const ExplanationTable table = synthetic::DiabetesLikeTable(5, 80);
  const auto schema = testing::SchemaValidator::FromFile(SourceDir() +
                                                         "/tests/data/vega-lite-v5.schema.json");
  Check c;
  int specs = 0;
  std::set<std::string> rules_used;
  const std::vector<VisSpec> currents = {
      HeatmapSpec("ds"),
      ScatterSpec("ds", {"bp", Facet::kValue, Aggregator::kIdentity, std::nullopt},
                  {"bp", Facet::kAttribution, Aggregator::kIdentity, std::nullopt}),
      BeeswarmSpec("ds", "bmi", Facet::kAttribution)};
  auto validate = [&](const VisSpec& spec, const std::string& where) {
    try {
      CheckSpec(spec, table);
      const json vl = Compile(spec, table);
      const auto errors = schema.Validate(vl);
      c.Expect(errors.empty(), where + ": " + (errors.empty() ? "" : errors.front()));
      ++specs;
    } catch (const xlint::Error& e) {
      c.Expect(false, where + ": " + e.what());
    }
  };

  for (InsightType type : {InsightType::kRead, InsightType::kCorrelation, InsightType::kComparison}) {
    for (Aggregator a : kAllAggregators) {
      auto var = [&](const std::string& f, Comparator cmp) {
        TVariable v{f, Facet::kAttribution, a, std::nullopt};
        if (NeedsPredicate(a)) v.predicate = Predicate{cmp, 0};
        return v;
      };
      StructuredInsight insight;
      std::string expected_rule;
      const bool counted = NeedsPredicate(a);
      const bool summary = a == Aggregator::kMean || a == Aggregator::kMin ||
                           a == Aggregator::kMax;
      if (type == InsightType::kRead) {
        insight = ReadInsight{var("bp", Comparator::kGreater), Comparator::kGreater, 0.5,
                              {{"age", ConditionOp::kGreater, {0.01}, std::nullopt}}};
        expected_rule = counted   ? "read-count->dual-beeswarm"
                        : summary ? "read-mean->beeswarm-reference"
                        : a == Aggregator::kVariance ? "read-variance->beeswarm"
                                                     : "read-identity->beeswarm";
      } else if (type == InsightType::kCorrelation) {
        insight = CorrelationInsight{var("bp", Comparator::kGreater), var("s5", Comparator::kGreater),
                                     Direction::kNone, {}};
        expected_rule = "correlation->scatter";
      } else {
        // Counts split one feature by sign; other aggregates compare two
        // features.
        insight = ComparisonInsight{var("bp", Comparator::kGreater),
                                    var(counted ? "bp" : "bmi", Comparator::kLess),
                                    Relation::kGreater, {}};
        expected_rule = counted                       ? "comparison-count->dual-beeswarm"
                        : a == Aggregator::kIdentity ? "comparison-identity->scatter"
                                                     : "comparison->paired-bar";
      }
      const std::string where =
          std::string(ToString(type)) + " x " + std::string(ToString(a));
      for (std::size_t k = 0; k < currents.size(); ++k) {
        try {
          const Recommendation forced = Recommend(BoundInsight{insight}, currents[k], true);
          c.Expect(forced.spec.has_value(), where + ": no spec when forced");
          const auto& ids = RuleIds();
          c.Expect(std::find(ids.begin(), ids.end(), forced.rationale.rule_id) != ids.end(),
                   where + ": unknown rule " + forced.rationale.rule_id);
          c.Expect(forced.rationale.rule_id == expected_rule,
                   where + ": rule " + forced.rationale.rule_id);
          rules_used.insert(forced.rationale.rule_id);
          if (forced.spec) validate(*forced.spec, where + " recommended");
          const MappingResult m = Map(BoundInsight{insight}, currents[k]);
          validate(m.annotated_spec, where + " annotated");
          if (m.recommended_spec) validate(*m.recommended_spec, where + " mapped");
        } catch (const xlint::Error& e) {
          c.Expect(false, where + ": " + e.what());
        }
      }
    }
  }
  c.Expect(rules_used.size() == RuleIds().size(), "not every rule was reached");
  return {c.ok(), Detail(c, "3 types x 7 aggregators x 3 current charts, " +
                                std::to_string(rules_used.size()) + " rules, " +
                                std::to_string(specs) + " compiled specs schema-valid")};
}

Outcome_ ExtractorCriterion() {
  const ExplanationTable table = synthetic::DiabetesLikeTable(kCaseSeed, 50);
  const std::string dir = SourceDir() + "/tests/fixtures/extractor";
  json authored;
  std::ifstream(dir + "/authored.json") >> authored;
  ExtractorConfig cfg;
  cfg.fixture_dir = dir;
  const Extractor extractor(cfg);
  Check c;
  int documents = 0, slotted = 0, fallbacks = 0, typed_errors = 0, paraphrases = 0;

  const StructuredInsight case1 = CorrelationInsight{
      {"bp", Facet::kAttribution, Aggregator::kIdentity, std::nullopt},
      {"s5", Facet::kAttribution, Aggregator::kIdentity, std::nullopt}, Direction::kNone, {}};
  const StructuredInsight case2 = ComparisonInsight{
      {"bp", Facet::kAttribution, Aggregator::kCount, Predicate{Comparator::kGreater, 0}},
      {"bp", Facet::kAttribution, Aggregator::kCount, Predicate{Comparator::kLess, 0}},
      Relation::kGreater, {}};

  for (const json& entry : authored) {
    const std::string text = entry.at("text");
    const std::string note = entry.value("note", "");
    try {
      const ExtractionResult r = extractor.Extract(text, table);
      // Whatever comes back must be a document that binds as reported.
      const BindResult again = BindDocument(r.fill.document, table);
      c.Expect(again.slots == r.fill.slots, text + ": slots differ from a fresh bind");
      c.Expect(r.fill.insight.has_value() == r.fill.slots.empty(), text + ": insight/slots");
      if (r.fill.insight) {
        c.Expect(again.ok() && again.bound->insight == *r.fill.insight, text + ": rebind");
        c.Expect(Validate(ToJson(*r.fill.insight)).ok(), text + ": canonical form invalid");
        ++documents;
      } else {
        c.Expect(!r.fill.slots.empty(), text + ": neither insight nor slots");
        ++slotted;
      }
      if (r.trace.fallback) ++fallbacks;
      if (note.rfind("case 1", 0) == 0) {
        c.Expect(r.fill.insight && *r.fill.insight == case1, text + ": not the case 1 insight");
        paraphrases += note != "case 1";
      }
      if (note.rfind("case 2", 0) == 0) {
        c.Expect(r.fill.insight && *r.fill.insight == case2, text + ": not the case 2 insight");
        paraphrases += note != "case 2";
      }
      if (note.find("no grammar fallback") != std::string::npos) {
        c.Expect(false, text + ": expected a typed error");
      }
      if (note.find("grammar fallback succeeds") != std::string::npos) {
        c.Expect(r.trace.fallback.has_value(), text + ": no fallback recorded");
      }
      // Replay is deterministic.
      const ExtractionResult r2 = extractor.Extract(text, table);
      c.Expect(r2.fill.document == r.fill.document && ToJson(r2.trace) == ToJson(r.trace),
               text + ": replay differs");
    } catch (const xlint::Error& e) {
      const bool typed = e.code() == ErrorCode::kUnparseableClassification ||
                         e.code() == ErrorCode::kSchemaViolation;
      c.Expect(typed, text + ": untyped failure " + std::string(ErrorCodeName(e.code())));
      c.Expect(note.find("no grammar fallback") != std::string::npos,
               text + ": unexpected " + std::string(ErrorCodeName(e.code())));
      ++typed_errors;
    }
  }
  c.Expect(paraphrases == 20, "paraphrases checked: " + std::to_string(paraphrases));
  c.Expect(fallbacks >= 2 && typed_errors >= 2, "malformed fixtures not exercised");
  return {c.ok(), Detail(c, std::to_string(authored.size()) + " fixtures: " +
                                std::to_string(documents) + " insights, " +
                                std::to_string(slotted) + " with explicit slots, " +
                                std::to_string(fallbacks) + " grammar fallbacks, " +
                                std::to_string(typed_errors) + " typed errors")};
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome_ ServiceCriterion() {
  Check c;
  const fs::path dir = fs::temp_directory_path() / ("xlint-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const ExplanationTable table = synthetic::SignControlledTable(kCaseSeed, kCaseRows, 0.4);
  const std::string csv = SerializeTable(table, TableFormat::kCsv);
  std::ofstream(dir / "table.csv") << csv;
  std::ofstream(dir / "insights.txt") << kCase1 << "\n" << kCase2 << "\n";

  ServiceConfig cfg;
  cfg.data_dir = (dir / "store").string();
  std::string session_id, before;
  {
    Service service(cfg);
    const int port = service.ListenInBackground();
    httplib::Client http("127.0.0.1", port);
    auto up = http.Post("/datasets", csv, "text/csv");
    c.Expect(up && up->status == 201, "upload status");
    if (!up || up->status != 201) return {false, Detail(c, "")};
    const json card = json::parse(up->body);
    c.Expect(card.at("model_card").at("features").size() == 10, "model card features");
    const std::string ds = card.at("dataset_id");

    auto s = http.Post("/sessions", json{{"dataset_id", ds}}.dump(), "application/json");
    c.Expect(s && s->status == 201, "create session");
    session_id = json::parse(s->body).at("id");
    const std::string base = "/sessions/" + session_id;

    const std::vector<std::pair<std::string, std::string>> cases = {{kCase1, "supported"},
                                                                   {kCase2, "refuted"}};
    for (std::size_t i = 0; i < cases.size(); ++i) {
      auto sub = http.Post(base + "/insights",
                           json{{"text", cases[i].first}, {"use_llm", false}}.dump(),
                           "application/json");
      c.Expect(sub && sub->status == 201, "submit " + std::to_string(i));
      if (sub) c.Expect(json::parse(sub->body).at("slots").empty(), "open slots");
      auto chk = http.Post(base + "/insights/" + std::to_string(i) + "/check", "",
                           "application/json");
      c.Expect(chk && chk->status == 200, "check " + std::to_string(i));
      if (chk && chk->status == 200) {
        const json body = json::parse(chk->body);
        c.Expect(body.at("verdict").at("outcome") == cases[i].second,
                 "verdict " + body["verdict"]["outcome"].dump());
      }
    }
    auto got = http.Get(base);
    c.Expect(got && got->status == 200, "get session");
    if (got) before = got->body;
    service.Stop();
  }
  const fs::path file = fs::path(cfg.data_dir) / "sessions" / (session_id + ".json");
  const std::string file_before = ReadFile(file);
  {
    Service restarted(cfg);
    const int port = restarted.ListenInBackground();
    httplib::Client http("127.0.0.1", port);
    auto got = http.Get("/sessions/" + session_id);
    c.Expect(got && got->status == 200, "get after restart");
    if (got) c.Expect(got->body == before, "session JSON differs after restart");
    restarted.Stop();
  }
  c.Expect(ReadFile(file) == file_before, "session file changed across restart");
  const json session = json::parse(before);
  c.Expect(session.at("insights").size() == 2 && !session["insights"][1].at("verdict").is_null(),
           "verdicts not persisted");

  const std::string cmd = std::string("'") + XLINT_CLI + "' check --data '" +
                          (dir / "table.csv").string() + "' --insights '" +
                          (dir / "insights.txt").string() + "' > /dev/null";
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  c.Expect(code == 1, "xlint exit code " + std::to_string(code));
  fs::remove_all(dir);
  return {c.ok(), Detail(c, "session " + session_id + " byte-identical after restart (" +
                                std::to_string(before.size()) + " bytes), xlint exit " +
                                std::to_string(code))};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome_()>>> criteria = {
      {"shapley-exact-vs-brute-force", ShapleyCriterion},
      {"grammar-round-trip", RoundTripCriterion},
      {"evaluator-oracle", EvaluatorOracleCriterion},
      {"case-1-no-correlation", Case1Criterion},
      {"case-2-count-comparison", Case2Criterion},
      {"annotation-rules", AnnotationCriterion},
      {"recommender-exhaustive", RecommenderCriterion},
      {"extractor-robustness", ExtractorCriterion},
      {"service-durability", ServiceCriterion},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome_ o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
