#include "xlint/grammar.h"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "xlint/error.h"
#include "xlint/text_util.h"

namespace xlint {

using nlohmann::json;

const std::vector<std::string>& ReservedWords() {
  static const std::vector<std::string> kWords = {
      "a", "about", "above", "also", "an", "and", "approximately", "are", "around", "as", "at",
      "attribution", "attributions", "average", "below", "between", "bigger", "cases", "comparable",
      "correlated", "correlation", "count", "data", "decline", "declines", "decrease",
      "decreases", "equal", "equals", "exactly", "exists", "fall", "falls", "feature", "fewer",
      "for", "fraction", "greater", "grow", "grows", "has", "have", "higher", "highest", "if",
      "increase", "increases", "individuals", "instances", "is", "larger", "largest", "least",
      "less", "lower", "lowest", "max", "maximum", "mean", "min", "minimum", "more", "most",
      "negative", "negatively", "no", "non-negative", "non-positive", "nonnegative",
      "nonpositive", "not", "number", "observations", "of", "over", "patients", "people",
      "percent", "percentage", "points", "positive", "positively", "proportion", "records",
      "rise", "rises", "rows", "roughly", "same", "samples", "shap", "share", "similar",
      "smaller", "smallest", "subjects", "tend", "tends", "than", "that", "the", "there", "to",
      "uncorrelated", "under", "value", "values", "variance", "when", "where", "with", "zero",
  };
  return kWords;
}

namespace {

bool IsReserved(const std::string& lower) {
  static const std::set<std::string> kSet(ReservedWords().begin(), ReservedWords().end());
  return kSet.count(lower) > 0;
}

// ---------------------------------------------------------------------------
// Tokenizer

enum class TokKind { kWord, kNumber, kQuoted, kOp };

struct Token {
  TokKind kind = TokKind::kWord;
  std::string text;   // original spelling (unescaped for quoted tokens)
  std::string lower;  // case-folded text
  double number = 0;
  bool percent = false;
};

constexpr std::string_view kOpenQuote = "\xE2\x80\x9C";
constexpr std::string_view kCloseQuote = "\xE2\x80\x9D";
constexpr std::string_view kLe = "\xE2\x89\xA4";
constexpr std::string_view kGe = "\xE2\x89\xA5";
constexpr std::string_view kApproxSign = "\xE2\x89\x88";

bool At(std::string_view text, std::size_t i, std::string_view what) {
  return text.substr(i, what.size()) == what;
}

bool IsPunct(char c) {
  return c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '(' || c == ')';
}

bool IsOpChar(char c) { return c == '<' || c == '>' || c == '=' || c == '~'; }

bool IsSpace(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool WordBreak(std::string_view text, std::size_t i) {
  char c = text[i];
  return IsSpace(c) || IsPunct(c) || IsOpChar(c) || c == '"' || At(text, i, kOpenQuote) ||
         At(text, i, kCloseQuote) || At(text, i, kLe) || At(text, i, kGe) ||
         At(text, i, kApproxSign);
}

Token ClassifyWord(std::string word) {
  Token t;
  t.text = word;
  t.lower = ToLower(word);
  if (auto v = ParseNumber(word)) {
    t.kind = TokKind::kNumber;
    t.number = *v;
  } else if (word.size() > 1 && word.back() == '%') {
    if (auto p = ParseNumber(std::string_view(word).substr(0, word.size() - 1))) {
      t.kind = TokKind::kNumber;
      t.number = *p / 100.0;
      t.percent = true;
    }
  }
  return t;
}

std::vector<Token> Tokenize(std::string_view text) {
  text = Trim(text);
  while (!text.empty() && text.back() == '.') text = Trim(text.substr(0, text.size() - 1));

  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (IsSpace(c) || IsPunct(c)) {
      ++i;
      continue;
    }
    if (c == '"' || At(text, i, kOpenQuote)) {
      i += c == '"' ? 1 : kOpenQuote.size();
      std::string body;
      while (i < text.size()) {
        if (text[i] == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            body += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        if (At(text, i, kCloseQuote)) {
          i += kCloseQuote.size();
          break;
        }
        body += text[i++];
      }
      Token t;
      t.kind = TokKind::kQuoted;
      t.text = body;
      t.lower = ToLower(body);
      out.push_back(std::move(t));
      continue;
    }
    if (IsOpChar(c) || At(text, i, kLe) || At(text, i, kGe) || At(text, i, kApproxSign)) {
      Token t;
      t.kind = TokKind::kOp;
      if (At(text, i, kLe)) {
        t.text = "<=";
        i += kLe.size();
      } else if (At(text, i, kGe)) {
        t.text = ">=";
        i += kGe.size();
      } else if (At(text, i, kApproxSign)) {
        t.text = "~=";
        i += kApproxSign.size();
      } else {
        std::string op(1, c);
        ++i;
        if (i < text.size() && text[i] == '=' && c != '=') {
          op += '=';
          ++i;
        } else if (c == '=' && i < text.size() && text[i] == '=') {
          ++i;
        }
        if (op == "~") op = "~=";
        t.text = op;
      }
      t.lower = t.text;
      out.push_back(std::move(t));
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !WordBreak(text, j)) ++j;
    std::string word(text.substr(i, j - i));
    i = j;
    while (word.size() > 1 && word.back() == '.') word.pop_back();
    if (word == ".") continue;
    out.push_back(ClassifyWord(std::move(word)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parser: ordered-choice recursive descent with backtracking per alternative.

json VarJson(const std::string& feature, Facet facet, Aggregator agg,
             std::optional<Predicate> pred = std::nullopt) {
  json v = {{"feature", feature},
            {"facet", ToString(facet)},
            {"aggregator", ToString(agg)},
            {"predicate", nullptr}};
  if (pred) {
    v["predicate"] = {{"comparator", ToString(pred->comparator)},
                      {"constant", pred->constant}};
  }
  return v;
}

struct PredParts {
  Facet facet = Facet::kAttribution;
  std::string feature;
  Comparator comparator = Comparator::kGreater;
  double constant = 0;
};

class Parser {
 public:
  Parser(std::vector<Token> tokens, const ExplanationTable& table)
      : toks_(std::move(tokens)), table_(table) {}

  std::vector<SlotStatus> extra_slots;

  std::optional<json> Sentence() {
    json doc;
    auto full = [&](bool (Parser::*core)(json&)) {
      return Try([&] {
        doc = json::object();
        return (this->*core)(doc) && Conditions(doc) && AtEnd();
      });
    };
    if (full(&Parser::Read) || full(&Parser::Correlation) || full(&Parser::Comparison)) {
      doc["schema"] = kInsightSchema;
      return doc;
    }
    return std::nullopt;
  }

 private:
  std::vector<Token> toks_;
  const ExplanationTable& table_;
  std::size_t pos_ = 0;

  bool AtEnd() const { return pos_ == toks_.size(); }

  const Token* Peek() const { return pos_ < toks_.size() ? &toks_[pos_] : nullptr; }

  template <typename F>
  bool Try(F&& f) {
    const std::size_t save = pos_;
    const std::size_t slots = extra_slots.size();
    if (f()) return true;
    pos_ = save;
    extra_slots.resize(slots);
    return false;
  }

  bool Word(std::string_view w) {
    const Token* t = Peek();
    if (t && t->kind == TokKind::kWord && t->lower == w) {
      ++pos_;
      return true;
    }
    return false;
  }

  bool Words(std::initializer_list<std::string_view> seq) {
    return Try([&] {
      for (auto w : seq) {
        if (!Word(w)) return false;
      }
      return true;
    });
  }

  bool AnyWord(std::initializer_list<std::string_view> options) {
    for (auto w : options) {
      if (Word(w)) return true;
    }
    return false;
  }

  void Opt(std::initializer_list<std::string_view> options) { AnyWord(options); }

  bool Op(std::string_view op) {
    const Token* t = Peek();
    if (t && t->kind == TokKind::kOp && t->text == op) {
      ++pos_;
      return true;
    }
    return false;
  }

  // A phrase table entry: word sequence (or operator) -> value.
  template <typename T>
  struct Phrase {
    std::initializer_list<std::string_view> words;
    T value;
  };

  template <typename T>
  std::optional<T> OneOf(std::initializer_list<Phrase<T>> phrases) {
    for (const auto& p : phrases) {
      const auto first = *p.words.begin();
      const bool is_op = !first.empty() && (IsOpChar(first[0]));
      if (is_op ? Op(first) : Words(p.words)) return p.value;
    }
    return std::nullopt;
  }

  std::optional<double> Number(std::string* text = nullptr) {
    const Token* t = Peek();
    if (!t || t->kind != TokKind::kNumber) return std::nullopt;
    ++pos_;
    double v = t->number;
    if (text) *text = t->text;
    if (!t->percent && (Word("%") || Word("percent"))) v = v / 100.0;
    return v;
  }

  // Quoted name or a maximal run of unreserved, non-numeric words.
  std::optional<std::string> Name() {
    const Token* t = Peek();
    if (!t) return std::nullopt;
    if (t->kind == TokKind::kQuoted) {
      ++pos_;
      return t->text;
    }
    std::string out;
    while (const Token* w = Peek()) {
      if (w->kind != TokKind::kWord || IsReserved(w->lower)) break;
      if (!out.empty()) out += ' ';
      out += w->text;
      ++pos_;
    }
    if (out.empty()) return std::nullopt;
    return out;
  }

  bool Rows() {
    return AnyWord({"rows", "patients", "instances", "samples", "points", "cases", "individuals",
                    "people", "records", "subjects", "observations"}) ||
           Words({"data", "points"});
  }

  std::optional<Facet> FacetWord() {
    return OneOf<Facet>({{{"shap", "values"}, Facet::kAttribution},
                         {{"shap", "value"}, Facet::kAttribution},
                         {{"attributions"}, Facet::kAttribution},
                         {{"attribution"}, Facet::kAttribution},
                         {{"feature", "values"}, Facet::kValue},
                         {{"feature", "value"}, Facet::kValue},
                         {{"values"}, Facet::kValue},
                         {{"value"}, Facet::kValue}});
  }

  std::optional<Comparator> Sign() {
    return OneOf<Comparator>({{{"positive"}, Comparator::kGreater},
                              {{"negative"}, Comparator::kLess},
                              {{"non-negative"}, Comparator::kGreaterEqual},
                              {{"nonnegative"}, Comparator::kGreaterEqual},
                              {{"non-positive"}, Comparator::kLessEqual},
                              {{"nonpositive"}, Comparator::kLessEqual},
                              {{"zero"}, Comparator::kEqual}});
  }

  std::optional<Comparator> PredicateComparator() {
    return OneOf<Comparator>({{{"greater", "than"}, Comparator::kGreater},
                              {{"more", "than"}, Comparator::kGreater},
                              {{"above"}, Comparator::kGreater},
                              {{">"}, Comparator::kGreater},
                              {{"at", "least"}, Comparator::kGreaterEqual},
                              {{">="}, Comparator::kGreaterEqual},
                              {{"less", "than"}, Comparator::kLess},
                              {{"below"}, Comparator::kLess},
                              {{"<"}, Comparator::kLess},
                              {{"at", "most"}, Comparator::kLessEqual},
                              {{"<="}, Comparator::kLessEqual},
                              {{"equal", "to"}, Comparator::kEqual},
                              {{"exactly"}, Comparator::kEqual},
                              {{"="}, Comparator::kEqual}});
  }

  std::optional<Comparator> ReadComparator() {
    auto c = OneOf<Comparator>({{{"greater", "than"}, Comparator::kGreater},
                                {{"more", "than"}, Comparator::kGreater},
                                {{"larger", "than"}, Comparator::kGreater},
                                {{"higher", "than"}, Comparator::kGreater},
                                {{"above"}, Comparator::kGreater},
                                {{"over"}, Comparator::kGreater},
                                {{">"}, Comparator::kGreater},
                                {{"at", "least"}, Comparator::kGreaterEqual},
                                {{">="}, Comparator::kGreaterEqual},
                                {{"less", "than"}, Comparator::kLess},
                                {{"smaller", "than"}, Comparator::kLess},
                                {{"lower", "than"}, Comparator::kLess},
                                {{"fewer", "than"}, Comparator::kLess},
                                {{"below"}, Comparator::kLess},
                                {{"under"}, Comparator::kLess},
                                {{"<"}, Comparator::kLess},
                                {{"at", "most"}, Comparator::kLessEqual},
                                {{"<="}, Comparator::kLessEqual},
                                {{"approximately"}, Comparator::kApprox},
                                {{"about"}, Comparator::kApprox},
                                {{"around"}, Comparator::kApprox},
                                {{"roughly"}, Comparator::kApprox},
                                {{"~="}, Comparator::kApprox}});
    if (c == Comparator::kApprox) Words({"equal", "to"});
    return c;
  }

  std::optional<Aggregator> AggregateWord() {
    return OneOf<Aggregator>({{{"mean"}, Aggregator::kMean},
                              {{"average"}, Aggregator::kMean},
                              {{"variance"}, Aggregator::kVariance},
                              {{"minimum"}, Aggregator::kMin},
                              {{"min"}, Aggregator::kMin},
                              {{"lowest"}, Aggregator::kMin},
                              {{"smallest"}, Aggregator::kMin},
                              {{"maximum"}, Aggregator::kMax},
                              {{"max"}, Aggregator::kMax},
                              {{"highest"}, Aggregator::kMax},
                              {{"largest"}, Aggregator::kMax}});
  }

  std::optional<Aggregator> CountWord() {
    return OneOf<Aggregator>({{{"number"}, Aggregator::kCount},
                              {{"count"}, Aggregator::kCount},
                              {{"fraction"}, Aggregator::kFraction},
                              {{"proportion"}, Aggregator::kFraction},
                              {{"share"}, Aggregator::kFraction},
                              {{"percentage"}, Aggregator::kFraction}});
  }

  // "<sign> <facet> for <feature>" | "<facet> of <feature> <cmp> <number>"
  bool PredicatePhrase(PredParts& p) {
    return Try([&] {
      auto sign = Sign();
      if (!sign) return false;
      auto facet = FacetWord();
      if (!facet || !AnyWord({"for", "of"})) return false;
      auto f = Name();
      if (!f) return false;
      p = {*facet, *f, *sign, 0.0};
      return true;
    }) || Try([&] {
      auto facet = FacetWord();
      if (!facet || !Word("of")) return false;
      auto f = Name();
      if (!f) return false;
      auto cmp = PredicateComparator();
      if (!cmp) return false;
      auto c = Number();
      if (!c) return false;
      p = {*facet, *f, *cmp, *c};
      return true;
    });
  }

  // Feature omitted: "<sign> <facet>" | "<facet> <cmp> <number>"
  bool ShortPredicate(PredParts& p) {
    return Try([&] {
      auto sign = Sign();
      if (!sign) return false;
      auto facet = FacetWord();
      if (!facet) return false;
      p.facet = *facet;
      p.comparator = *sign;
      p.constant = 0;
      return true;
    }) || Try([&] {
      auto facet = FacetWord();
      if (!facet) return false;
      auto cmp = PredicateComparator();
      if (!cmp) return false;
      auto c = Number();
      if (!c) return false;
      p.facet = *facet;
      p.comparator = *cmp;
      p.constant = *c;
      return true;
    });
  }

  bool AggregatedVariable(json& var) {
    return Try([&] {
      Opt({"the"});
      auto agg = AggregateWord();
      if (!agg) return false;
      // "the variance of the attributions of s1"
      if (Word("of")) Opt({"the"});
      auto facet = FacetWord();
      if (!facet || !Word("of")) return false;
      auto f = Name();
      if (!f) return false;
      var = VarJson(*f, *facet, *agg);
      return true;
    }) || Try([&] {
      Opt({"the"});
      auto agg = CountWord();
      if (!agg || !Word("of")) return false;
      Opt({"the"});
      if (!Rows() || !Word("with")) return false;
      PredParts p;
      if (!PredicatePhrase(p)) return false;
      var = VarJson(p.feature, p.facet, *agg, Predicate{p.comparator, p.constant});
      return true;
    });
  }

  bool Read(json& doc) {
    // for <cmp> <pct> of <rows>, <feature> has a <sign> <facet>
    auto fraction_form = [&](bool most) {
      return Try([&] {
        if (!Word("for")) return false;
        std::optional<Comparator> cmp;
        std::optional<double> threshold;
        if (most) {
          if (!Word("most")) return false;
          cmp = Comparator::kGreater;
          Opt({"of"});
        } else {
          cmp = OneOf<Comparator>({{{"more", "than"}, Comparator::kGreater},
                                   {{"greater", "than"}, Comparator::kGreater},
                                   {{"over"}, Comparator::kGreater},
                                   {{">"}, Comparator::kGreater},
                                   {{"at", "least"}, Comparator::kGreaterEqual},
                                   {{">="}, Comparator::kGreaterEqual},
                                   {{"less", "than"}, Comparator::kLess},
                                   {{"fewer", "than"}, Comparator::kLess},
                                   {{"under"}, Comparator::kLess},
                                   {{"<"}, Comparator::kLess},
                                   {{"at", "most"}, Comparator::kLessEqual},
                                   {{"<="}, Comparator::kLessEqual},
                                   {{"about"}, Comparator::kApprox},
                                   {{"approximately"}, Comparator::kApprox},
                                   {{"around"}, Comparator::kApprox},
                                   {{"roughly"}, Comparator::kApprox},
                                   {{"~="}, Comparator::kApprox}});
          if (!cmp) return false;
          threshold = Number();
          if (!threshold || !Word("of")) return false;
        }
        Opt({"the"});
        if (!Rows()) return false;
        auto f = Name();
        if (!f || !AnyWord({"has", "have"})) return false;
        Opt({"a", "an"});
        auto sign = Sign();
        if (!sign) return false;
        auto facet = FacetWord();
        if (!facet) return false;
        doc["type"] = "read";
        doc["variable"] =
            VarJson(*f, *facet, Aggregator::kFraction, Predicate{*sign, 0.0});
        doc["comparator"] = ToString(*cmp);
        doc["threshold"] = threshold ? json(*threshold) : json(nullptr);
        if (most) extra_slots.push_back({"read.threshold", SlotState::kAmbiguous, {}});
        return true;
      });
    };
    if (fraction_form(false) || fraction_form(true)) return true;

    return Try([&] {
      json var;
      if (!AggregatedVariable(var) || !AnyWord({"is", "are"})) return false;
      auto cmp = ReadComparator();
      if (!cmp) return false;
      auto threshold = Number();
      if (!threshold) return false;
      doc["type"] = "read";
      doc["variable"] = var;
      doc["comparator"] = ToString(*cmp);
      doc["threshold"] = *threshold;
      return true;
    });
  }

  // Per-row variable: "the attribution of F" | "F attributions" | "F".
  bool CorrelationVariable(json& var) {
    return Try([&] {
      Opt({"the"});
      auto facet = FacetWord();
      if (!facet || !Word("of")) return false;
      auto f = Name();
      if (!f) return false;
      var = VarJson(*f, *facet, Aggregator::kIdentity);
      return true;
    }) || Try([&] {
      Opt({"the"});
      auto f = Name();
      if (!f) return false;
      auto facet = FacetWord();
      var = VarJson(*f, facet.value_or(Facet::kValue), Aggregator::kIdentity);
      return true;
    });
  }

  bool Correlation(json& doc) {
    auto finish = [&](json x, json y, Direction d) {
      doc["type"] = "correlation";
      doc["x"] = std::move(x);
      doc["y"] = std::move(y);
      doc["direction"] = ToString(d);
      return true;
    };
    return Try([&] {
      if (!Word("there") || !AnyWord({"is", "exists"})) return false;
      Opt({"a", "an"});
      auto dir = OneOf<Direction>({{{"positive"}, Direction::kPositive},
                                   {{"negative"}, Direction::kNegative},
                                   {{"no"}, Direction::kNone}});
      if (!dir || !Word("correlation") || !Word("between")) return false;
      json x, y;
      if (!CorrelationVariable(x) || !Word("and") || !CorrelationVariable(y)) return false;
      return finish(x, y, *dir);
    }) || Try([&] {
      if (!Word("as")) return false;
      json x, y;
      if (!CorrelationVariable(x)) return false;
      if (!AnyWord({"increases", "rises", "grows"})) return false;
      if (!CorrelationVariable(y)) return false;
      Opt({"also"});
      if (!AnyWord({"tends", "tend"}) || !Word("to")) return false;
      auto dir = OneOf<Direction>({{{"increase"}, Direction::kPositive},
                                   {{"rise"}, Direction::kPositive},
                                   {{"grow"}, Direction::kPositive},
                                   {{"decrease"}, Direction::kNegative},
                                   {{"fall"}, Direction::kNegative},
                                   {{"decline"}, Direction::kNegative}});
      if (!dir) return false;
      return finish(x, y, *dir);
    }) || Try([&] {
      json x, y;
      if (!CorrelationVariable(x) || !Word("and") || !CorrelationVariable(y)) return false;
      if (!Word("are")) return false;
      auto dir = OneOf<Direction>({{{"positively", "correlated"}, Direction::kPositive},
                                   {{"negatively", "correlated"}, Direction::kNegative},
                                   {{"not", "correlated"}, Direction::kNone},
                                   {{"uncorrelated"}, Direction::kNone}});
      if (!dir) return false;
      return finish(x, y, *dir);
    });
  }

  bool Comparison(json& doc) {
    return Try([&] {
      json left;
      if (!AggregatedVariable(left) || !AnyWord({"is", "are"})) return false;
      auto rel = OneOf<Relation>({{{"greater", "than"}, Relation::kGreater},
                                  {{"larger", "than"}, Relation::kGreater},
                                  {{"higher", "than"}, Relation::kGreater},
                                  {{"more", "than"}, Relation::kGreater},
                                  {{"bigger", "than"}, Relation::kGreater},
                                  {{"less", "than"}, Relation::kLess},
                                  {{"smaller", "than"}, Relation::kLess},
                                  {{"lower", "than"}, Relation::kLess},
                                  {{"fewer", "than"}, Relation::kLess},
                                  {{"approximately", "equal", "to"}, Relation::kApproxEqual},
                                  {{"about", "equal", "to"}, Relation::kApproxEqual},
                                  {{"roughly", "equal", "to"}, Relation::kApproxEqual},
                                  {{"equal", "to"}, Relation::kApproxEqual},
                                  {{"similar", "to"}, Relation::kApproxEqual},
                                  {{"comparable", "to"}, Relation::kApproxEqual},
                                  {{"the", "same", "as"}, Relation::kApproxEqual}});
      if (!rel) return false;
      json right;
      const bool ok = AggregatedVariable(right) || Try([&] {
        if (!Words({"that", "of"})) return false;
        auto f = Name();
        if (!f) return false;
        right = left;
        right["feature"] = *f;
        return true;
      }) || Try([&] {
        Opt({"the"});
        auto agg = CountWord();
        if (!agg) return false;
        if (Word("of")) {
          Opt({"the"});
          if (!Rows()) return false;
        }
        if (!Word("with")) return false;
        PredParts p;
        if (!ShortPredicate(p)) return false;
        right = VarJson(left["feature"].get<std::string>(), p.facet, *agg,
                        Predicate{p.comparator, p.constant});
        return true;
      });
      if (!ok) return false;
      doc["type"] = "comparison";
      doc["left"] = std::move(left);
      doc["right"] = std::move(right);
      doc["relation"] = ToString(*rel);
      return true;
    });
  }

  bool Condition(json& out) {
    return Try([&] {
      auto f = Name();
      if (!f) return false;
      Opt({"is", "are"});
      const auto resolved = ResolveFeature(*f, table_);
      const bool categorical =
          resolved.name &&
          table_.Feature(*resolved.name).kind == FeatureKind::kCategorical;
      out = {{"feature", *f}, {"facet", "value"}};

      if (Word("between")) {
        auto lo = Number();
        if (!lo || !Word("and")) return false;
        auto hi = Number();
        if (!hi) return false;
        out["op"] = "in-range";
        out["bounds"] = {*lo, *hi};
        return true;
      }
      auto op = OneOf<ConditionOp>({{{"greater", "than"}, ConditionOp::kGreater},
                                    {{"more", "than"}, ConditionOp::kGreater},
                                    {{"higher", "than"}, ConditionOp::kGreater},
                                    {{"larger", "than"}, ConditionOp::kGreater},
                                    {{"above"}, ConditionOp::kGreater},
                                    {{"over"}, ConditionOp::kGreater},
                                    {{">"}, ConditionOp::kGreater},
                                    {{"at", "least"}, ConditionOp::kGreaterEqual},
                                    {{">="}, ConditionOp::kGreaterEqual},
                                    {{"less", "than"}, ConditionOp::kLess},
                                    {{"lower", "than"}, ConditionOp::kLess},
                                    {{"smaller", "than"}, ConditionOp::kLess},
                                    {{"below"}, ConditionOp::kLess},
                                    {{"under"}, ConditionOp::kLess},
                                    {{"<"}, ConditionOp::kLess},
                                    {{"at", "most"}, ConditionOp::kLessEqual},
                                    {{"<="}, ConditionOp::kLessEqual},
                                    {{"equal", "to"}, ConditionOp::kEqual},
                                    {{"equals"}, ConditionOp::kEqual},
                                    {{"="}, ConditionOp::kEqual}});
      out["op"] = ToString(op.value_or(ConditionOp::kEqual));
      std::string number_text;
      if (auto v = Number(&number_text)) {
        if (categorical && op.value_or(ConditionOp::kEqual) == ConditionOp::kEqual) {
          out["bounds"] = {number_text};
        } else {
          out["bounds"] = {*v};
        }
        return true;
      }
      if (op && *op != ConditionOp::kEqual) return false;
      auto category = Name();
      if (!category) return false;
      out["bounds"] = {*category};
      return true;
    });
  }

  bool Conditions(json& doc) {
    doc["conditions"] = nullptr;
    if (!AnyWord({"when", "where", "if"})) return true;
    json list = json::array();
    do {
      json c;
      if (!Condition(c)) return false;
      list.push_back(std::move(c));
    } while (Word("and"));
    doc["conditions"] = std::move(list);
    return true;
  }
};

}  // namespace

ParseOutcome ParseControlled(std::string_view text, const ExplanationTable& table) {
  ParseOutcome out;
  try {
    auto tokens = Tokenize(text);
    if (tokens.empty()) {
      out.diagnostic = "empty input";
      return out;
    }
    Parser parser(std::move(tokens), table);
    auto doc = parser.Sentence();
    if (!doc) {
      out.diagnostic = "sentence is outside the controlled insight language";
      return out;
    }
    BindResult bound = BindDocument(*doc, table);
    std::vector<SlotStatus> slots = parser.extra_slots;
    for (auto& s : bound.slots) {
      bool dup = std::any_of(slots.begin(), slots.end(),
                             [&](const SlotStatus& e) { return e.path == s.path; });
      if (!dup) slots.push_back(std::move(s));
    }
    std::sort(slots.begin(), slots.end(),
              [](const SlotStatus& a, const SlotStatus& b) { return a.path < b.path; });
    out.document = std::move(bound.document);
    if (slots.empty() && bound.bound) {
      out.kind = ParseOutcome::Kind::kInsight;
      out.insight = bound.bound->insight;
    } else {
      out.kind = ParseOutcome::Kind::kSlots;
      out.slots = std::move(slots);
    }
  } catch (const std::exception& e) {
    out = ParseOutcome{};
    out.diagnostic = e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rendering

std::string_view ToString(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::kLiteral: return "literal";
    case SegmentKind::kKeyword: return "keyword";
    case SegmentKind::kSlot: return "slot";
  }
  return "literal";
}

std::string_view ToString(Highlight highlight) {
  switch (highlight) {
    case Highlight::kNone: return "none";
    case Highlight::kFeature: return "feature";
    case Highlight::kAttribution: return "attribution";
    case Highlight::kInsightType: return "insight-type";
    case Highlight::kCondition: return "condition";
  }
  return "none";
}

std::string RenderedInsight::Flatten() const {
  std::string out;
  for (const auto& s : segments) out += s.text;
  return out;
}

json ToJson(const RenderedInsight& rendered) {
  json segs = json::array();
  for (const auto& s : rendered.segments) {
    json j = {{"kind", ToString(s.kind)},
              {"text", s.text},
              {"highlight", ToString(s.highlight)},
              {"slot_ref", s.slot_ref ? json(*s.slot_ref) : json(nullptr)}};
    if (s.kind == SegmentKind::kSlot) j["candidates"] = s.candidates;
    segs.push_back(std::move(j));
  }
  return {{"segments", std::move(segs)}, {"text", rendered.Flatten()}};
}

bool NeedsQuoting(std::string_view name) {
  if (name.empty()) return true;
  auto tokens = Tokenize(name);
  std::string joined;
  for (const auto& t : tokens) {
    if (t.kind != TokKind::kWord || IsReserved(t.lower)) return true;
    if (t.text == "%") return true;
    if (!joined.empty()) joined += ' ';
    joined += t.text;
  }
  return joined != name;
}

namespace {

std::string Quoted(const std::string& name) {
  if (!NeedsQuoting(name)) return name;
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string PercentOrPlain(double x) {
  const std::string pct = FormatNumber(x * 100.0);
  if (auto back = ParseNumber(pct); back && *back / 100.0 == x) return pct + "%";
  return FormatNumber(x);
}

const json* Get(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

std::optional<std::string> GetString(const json& obj, const char* key) {
  const json* v = Get(obj, key);
  if (!v || !v->is_string()) return std::nullopt;
  return v->get<std::string>();
}

std::optional<double> GetNumber(const json& obj, const char* key) {
  const json* v = Get(obj, key);
  if (!v || !v->is_number()) return std::nullopt;
  return v->get<double>();
}

std::string SignWord(Comparator c) {
  switch (c) {
    case Comparator::kGreater: return "positive";
    case Comparator::kLess: return "negative";
    case Comparator::kGreaterEqual: return "non-negative";
    case Comparator::kLessEqual: return "non-positive";
    default: return "zero";
  }
}

std::string PredicateWords(Comparator c) {
  switch (c) {
    case Comparator::kGreater: return "greater than";
    case Comparator::kGreaterEqual: return "at least";
    case Comparator::kLess: return "less than";
    case Comparator::kLessEqual: return "at most";
    default: return "equal to";
  }
}

std::string ReadWords(Comparator c) {
  switch (c) {
    case Comparator::kGreater: return "greater than";
    case Comparator::kGreaterEqual: return "at least";
    case Comparator::kLess: return "less than";
    case Comparator::kLessEqual: return "at most";
    default: return "approximately";
  }
}

std::string FractionWords(Comparator c) {
  switch (c) {
    case Comparator::kGreater: return "more than";
    case Comparator::kGreaterEqual: return "at least";
    case Comparator::kLess: return "less than";
    case Comparator::kLessEqual: return "at most";
    default: return "about";
  }
}

std::string AggregateText(Aggregator a) {
  switch (a) {
    case Aggregator::kMean: return "mean";
    case Aggregator::kVariance: return "variance";
    case Aggregator::kMin: return "minimum";
    case Aggregator::kMax: return "maximum";
    case Aggregator::kCount: return "number";
    case Aggregator::kFraction: return "fraction";
    default: return "identity";
  }
}

std::string ConditionWords(ConditionOp op) {
  switch (op) {
    case ConditionOp::kGreater: return "above";
    case ConditionOp::kGreaterEqual: return "at least";
    case ConditionOp::kLess: return "below";
    case ConditionOp::kLessEqual: return "at most";
    case ConditionOp::kEqual: return "equal to";
    case ConditionOp::kInRange: return "between";
  }
  return "equal to";
}

Highlight SlotHighlight(const std::string& path) {
  auto ends = [&](std::string_view suffix) {
    return path.size() >= suffix.size() &&
           path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (path.find(".conditions") != std::string::npos) {
    return ends(".feature") ? Highlight::kFeature : Highlight::kCondition;
  }
  if (ends(".feature")) return Highlight::kFeature;
  if (ends(".comparator") && path.find("predicate") == std::string::npos) {
    return Highlight::kInsightType;
  }
  if (ends(".threshold") || ends(".direction") || ends(".relation")) {
    return Highlight::kInsightType;
  }
  return Highlight::kAttribution;
}

class Renderer {
 public:
  Renderer(const json& doc, const std::vector<SlotStatus>& slots) : doc_(doc) {
    for (const auto& s : slots) {
      if (!slots_.count(s.path)) order_.push_back(s.path);
      slots_[s.path] = s;
    }
  }

  RenderedInsight Run() {
    const auto type = GetString(doc_, "type");
    const std::string t = type.value_or("read");
    if (t == "correlation") {
      RenderCorrelation();
    } else if (t == "comparison") {
      RenderComparison();
    } else {
      RenderRead();
    }
    RenderConditions(t);
    // Slots with no inline position (e.g. a condition facet) go at the end.
    for (const auto& path : order_) {
      if (emitted_.count(path)) continue;
      Lit(" ");
      EmitSlot(path);
    }
    Lit(".");
    return std::move(out_);
  }

 private:
  const json& doc_;
  std::map<std::string, SlotStatus> slots_;
  std::vector<std::string> order_;
  std::set<std::string> emitted_;
  RenderedInsight out_;

  void Lit(std::string text) {
    if (!out_.segments.empty() && out_.segments.back().kind == SegmentKind::kLiteral) {
      out_.segments.back().text += text;
      return;
    }
    out_.segments.push_back({SegmentKind::kLiteral, std::move(text), std::nullopt,
                             Highlight::kNone, {}});
  }

  void Kw(std::string text, Highlight h, std::optional<std::string> path = std::nullopt) {
    out_.segments.push_back({SegmentKind::kKeyword, std::move(text), std::move(path), h, {}});
  }

  bool HasSlotUnder(const std::string& prefix) const {
    for (const auto& [p, s] : slots_) {
      if (p == prefix || (p.size() > prefix.size() && p.compare(0, prefix.size(), prefix) == 0 &&
                          (p[prefix.size()] == '.' || p[prefix.size()] == '['))) {
        return true;
      }
    }
    return false;
  }

  // Best-effort display text for the current value at a slot path.
  std::string ValueText(const std::string& path) const {
    const json* node = &doc_;
    std::size_t i = path.find('.');
    if (i == std::string::npos) return "___";
    std::string rest = path.substr(i + 1);
    while (!rest.empty() && node) {
      std::size_t dot = rest.find('.');
      std::string part = rest.substr(0, dot);
      rest = dot == std::string::npos ? "" : rest.substr(dot + 1);
      std::optional<std::size_t> index;
      if (auto b = part.find('['); b != std::string::npos) {
        index = std::stoul(part.substr(b + 1));
        part = part.substr(0, b);
      }
      node = Get(*node, part.c_str());
      if (node && index) {
        node = node->is_array() && *index < node->size() ? &(*node)[*index] : nullptr;
      }
    }
    if (!node || node->is_null()) return "___";
    if (node->is_string()) return node->get<std::string>();
    if (node->is_number()) return FormatNumber(node->get<double>());
    if (node->is_object()) {
      if (auto f = GetString(*node, "feature")) return *f;
    }
    return "___";
  }

  void EmitSlot(const std::string& path) {
    const SlotStatus& s = slots_.at(path);
    emitted_.insert(path);
    out_.segments.push_back(
        {SegmentKind::kSlot, "[" + ValueText(path) + "]", path, SlotHighlight(path), s.candidates});
  }

  // Emits the slot at `path` if there is one; returns true if it did.
  bool Slot(const std::string& path) {
    if (!slots_.count(path) || emitted_.count(path)) return slots_.count(path) > 0;
    EmitSlot(path);
    return true;
  }

  const json& Node(const std::string& key) const {
    static const json kNull;
    const json* v = Get(doc_, key.c_str());
    return v ? *v : kNull;
  }

  void Feature(const std::string& path, const json& var) {
    if (Slot(path)) return;
    Kw(Quoted(GetString(var, "feature").value_or("")), Highlight::kFeature, path);
  }

  void FacetWord(const std::string& path, const json& var, bool plural) {
    if (Slot(path)) return;
    auto facet = ParseFacet(GetString(var, "facet").value_or("attribution"));
    std::string w(ToString(facet.value_or(Facet::kAttribution)));
    Kw(plural ? w + "s" : w, Highlight::kAttribution, path);
  }

  std::optional<Aggregator> AggregatorOf(const std::string& path, const json& var) const {
    if (slots_.count(path + ".aggregator")) return std::nullopt;
    return ParseAggregator(GetString(var, "aggregator").value_or(""));
  }

  std::optional<Predicate> PredicateOf(const std::string& path, const json& var) const {
    if (HasSlotUnder(path + ".predicate")) return std::nullopt;
    const json* p = Get(var, "predicate");
    if (!p) return std::nullopt;
    auto cmp = ParseComparator(GetString(*p, "comparator").value_or(""));
    auto c = GetNumber(*p, "constant");
    if (!cmp || !c) return std::nullopt;
    return Predicate{*cmp, *c};
  }

  // "<sign> <facet> for F" or "<facet> of F <cmp> <num>"; without_feature
  // drops the feature reference.
  void PredicateText(const std::string& path, const json& var, bool with_feature) {
    const std::string ppath = path + ".predicate";
    if (Slot(ppath)) return;
    auto pred = PredicateOf(path, var);
    if (pred && pred->constant == 0 && !HasSlotUnder(path + ".facet")) {
      Kw(SignWord(pred->comparator), Highlight::kAttribution, ppath);
      Lit(" ");
      FacetWord(path + ".facet", var, false);
      if (with_feature) {
        Lit(" for ");
        Feature(path + ".feature", var);
      }
      return;
    }
    FacetWord(path + ".facet", var, false);
    if (with_feature) {
      Lit(" of ");
      Feature(path + ".feature", var);
    }
    Lit(" ");
    const json* p = Get(var, "predicate");
    if (!Slot(ppath + ".comparator")) {
      auto cmp = ParseComparator(p ? GetString(*p, "comparator").value_or("") : "");
      Kw(PredicateWords(cmp.value_or(Comparator::kGreater)), Highlight::kAttribution,
         ppath + ".comparator");
    }
    Lit(" ");
    if (!Slot(ppath + ".constant")) {
      Kw(FormatNumber(p ? GetNumber(*p, "constant").value_or(0) : 0), Highlight::kAttribution,
         ppath + ".constant");
    }
  }

  // Aggregated variable without the leading article.
  void AggregatedVariable(const std::string& path, const json& var) {
    if (Slot(path)) return;
    auto agg = AggregatorOf(path, var);
    if (agg && NeedsPredicate(*agg)) {
      Kw(AggregateText(*agg), Highlight::kAttribution, path + ".aggregator");
      Lit(" of rows with ");
      PredicateText(path, var, true);
      return;
    }
    if (!Slot(path + ".aggregator")) {
      Kw(AggregateText(agg.value_or(Aggregator::kMean)), Highlight::kAttribution,
         path + ".aggregator");
    }
    Lit(" ");
    FacetWord(path + ".facet", var, false);
    Lit(" of ");
    Feature(path + ".feature", var);
    if (HasSlotUnder(path + ".predicate")) {
      Lit(" with ");
      PredicateText(path, var, false);
    }
  }

  void RenderRead() {
    const std::string vpath = "read.variable";
    const json& var = Node("variable");
    auto agg = AggregatorOf(vpath, var);
    auto pred = PredicateOf(vpath, var);
    const auto cmp = ParseComparator(GetString(doc_, "comparator").value_or(""));

    if (!HasSlotUnder(vpath) && agg == Aggregator::kFraction && pred && pred->constant == 0) {
      Lit("For ");
      if (!Slot("read.comparator")) {
        Kw(FractionWords(cmp.value_or(Comparator::kGreater)), Highlight::kInsightType,
           "read.comparator");
      }
      Lit(" ");
      Threshold(true);
      Lit(" of rows, ");
      Feature(vpath + ".feature", var);
      Lit(" has a ");
      Kw(SignWord(pred->comparator), Highlight::kAttribution, vpath + ".predicate");
      Lit(" ");
      FacetWord(vpath + ".facet", var, false);
      return;
    }
    Lit("The ");
    AggregatedVariable(vpath, var);
    Lit(" is ");
    if (!Slot("read.comparator")) {
      Kw(ReadWords(cmp.value_or(Comparator::kGreater)), Highlight::kInsightType,
         "read.comparator");
    }
    Lit(" ");
    Threshold(agg == Aggregator::kFraction);
  }

  void Threshold(bool as_percent) {
    if (Slot("read.threshold")) return;
    const double x = GetNumber(doc_, "threshold").value_or(0);
    Kw(as_percent ? PercentOrPlain(x) : FormatNumber(x), Highlight::kInsightType,
       "read.threshold");
  }

  // "the attribution of F" or bare "F" for values.
  void BareVariable(const std::string& path, const json& var) {
    if (Slot(path)) return;
    if (GetString(var, "facet") == "value") {
      Feature(path + ".feature", var);
      return;
    }
    Lit("the ");
    FacetWord(path + ".facet", var, false);
    Lit(" of ");
    Feature(path + ".feature", var);
  }

  void SuffixVariable(const std::string& path, const json& var) {
    if (Slot(path)) return;
    Feature(path + ".feature", var);
    Lit(" ");
    FacetWord(path + ".facet", var, true);
  }

  void RenderCorrelation() {
    const json& x = Node("x");
    const json& y = Node("y");
    const auto dir = ParseDirection(GetString(doc_, "direction").value_or(""));
    const bool vars_clean = !HasSlotUnder("correlation.x") && !HasSlotUnder("correlation.y");
    if (vars_clean && !HasSlotUnder("correlation.direction") && dir &&
        *dir != Direction::kNone) {
      Lit("As ");
      BareVariable("correlation.x", x);
      Lit(" ");
      Kw("increases", Highlight::kInsightType);
      Lit(", ");
      BareVariable("correlation.y", y);
      Lit(" ");
      Kw("tends to", Highlight::kInsightType);
      Lit(" ");
      Kw(*dir == Direction::kPositive ? "increase" : "decrease", Highlight::kInsightType,
         "correlation.direction");
      return;
    }
    Lit("There is ");
    if (!Slot("correlation.direction")) {
      std::string word = !dir || *dir == Direction::kNone ? "no"
                         : *dir == Direction::kPositive   ? "a positive"
                                                          : "a negative";
      Kw(word, Highlight::kInsightType, "correlation.direction");
    }
    Lit(" ");
    Kw("correlation", Highlight::kInsightType);
    Lit(" between ");
    SuffixVariable("correlation.x", x);
    Lit(" and ");
    SuffixVariable("correlation.y", y);
  }

  void RenderComparison() {
    const json& left = Node("left");
    const json& right = Node("right");
    Lit("The ");
    AggregatedVariable("comparison.left", left);
    Lit(" is ");
    if (!Slot("comparison.relation")) {
      auto rel = ParseRelation(GetString(doc_, "relation").value_or(""));
      std::string words = rel == Relation::kLess          ? "less than"
                          : rel == Relation::kApproxEqual ? "approximately equal to"
                                                          : "greater than";
      Kw(words, Highlight::kInsightType, "comparison.relation");
    }
    Lit(" ");

    const bool clean = !HasSlotUnder("comparison.left") && !HasSlotUnder("comparison.right");
    if (clean) {
      const auto la = ParseAggregator(GetString(left, "aggregator").value_or(""));
      const auto ra = ParseAggregator(GetString(right, "aggregator").value_or(""));
      const bool same_shape = la == ra && GetString(left, "facet") == GetString(right, "facet") &&
                              (Get(left, "predicate") == nullptr) ==
                                  (Get(right, "predicate") == nullptr) &&
                              (Get(left, "predicate") == nullptr ||
                               *Get(left, "predicate") == *Get(right, "predicate"));
      if (same_shape) {
        Lit("that of ");
        Feature("comparison.right.feature", right);
        return;
      }
      if (la == ra && ra && NeedsPredicate(*ra) &&
          GetString(left, "feature") == GetString(right, "feature")) {
        Lit("the ");
        Kw(AggregateText(*ra), Highlight::kAttribution, "comparison.right.aggregator");
        Lit(" with ");
        PredicateText("comparison.right", right, false);
        return;
      }
    }
    Lit("the ");
    AggregatedVariable("comparison.right", right);
  }

  void RenderConditions(const std::string& type) {
    const std::string base = type + ".conditions";
    if (Slot(base)) return;
    const json* list = Get(doc_, "conditions");
    if (!list || !list->is_array() || list->empty()) return;
    Lit(" ");
    Kw("when", Highlight::kCondition);
    for (std::size_t i = 0; i < list->size(); ++i) {
      const std::string path = base + "[" + std::to_string(i) + "]";
      if (i > 0) {
        Lit(" ");
        Kw("and", Highlight::kCondition);
      }
      Lit(" ");
      if (Slot(path)) continue;
      const json& c = (*list)[i];
      Feature(path + ".feature", c);
      Lit(" is ");
      auto op = ParseConditionOp(GetString(c, "op").value_or(""));
      const json* bounds = Get(c, "bounds");
      const bool category = bounds && bounds->is_array() && bounds->size() == 1 &&
                            (*bounds)[0].is_string();
      if (category && op == ConditionOp::kEqual && !slots_.count(path + ".bounds")) {
        Slot(path + ".op");
        Kw(Quoted((*bounds)[0].get<std::string>()), Highlight::kCondition, path + ".bounds");
        continue;
      }
      if (!Slot(path + ".op")) {
        Kw(ConditionWords(op.value_or(ConditionOp::kGreater)), Highlight::kCondition,
           path + ".op");
      }
      Lit(" ");
      if (Slot(path + ".bounds")) continue;
      auto bound_text = [&](std::size_t k) {
        const json& b = (*bounds)[k];
        return b.is_number() ? FormatNumber(b.get<double>())
                             : Quoted(b.is_string() ? b.get<std::string>() : b.dump());
      };
      Kw(bound_text(0), Highlight::kCondition, path + ".bounds");
      if (op == ConditionOp::kInRange && bounds->size() > 1) {
        Lit(" ");
        Kw("and", Highlight::kCondition);
        Lit(" ");
        Kw(bound_text(1), Highlight::kCondition, path + ".bounds");
      }
    }
  }
};

}  // namespace

RenderedInsight Render(const json& document, const std::vector<SlotStatus>& slots) {
  return Renderer(document, slots).Run();
}

RenderedInsight Render(const StructuredInsight& insight) { return Render(ToJson(insight), {}); }

bool RoundtripCheck(const StructuredInsight& insight, const ExplanationTable& table) {
  const ParseOutcome parsed = ParseControlled(Render(insight).Flatten(), table);
  return parsed.kind == ParseOutcome::Kind::kInsight && *parsed.insight == insight;
}

}  // namespace xlint
