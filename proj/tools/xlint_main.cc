// xlint: batch checking of insights against an explanation table, plus the
// HTTP service and a few helpers for fixtures and demo data.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "xlint/attribution_data.h"
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

namespace {

constexpr int kExitSupported = 0;
constexpr int kExitRefuted = 1;
constexpr int kExitUndetermined = 2;
constexpr int kExitUsage = 64;

// Raised for unreadable or unusable inputs; maps to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string ReadAll(const std::string& path) {
  if (path == "-") {
    std::ostringstream s;
    s << std::cin.rdbuf();
    return s.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

xlint::ExplanationTable LoadData(const std::string& path, std::string* body = nullptr) {
  const std::string text = ReadAll(path);
  try {
    auto table = xlint::LoadTableFromString(text, xlint::SniffTableFormat(text));
    if (body) *body = text;
    return table;
  } catch (const xlint::Error& e) {
    throw UsageError(path + ": " + std::string(xlint::ErrorCodeName(e.code())) + ": " + e.what());
  }
}

// One insight per line. Blank lines and lines starting with '#' are skipped;
// a line starting with '{' is taken as an insight document.
std::vector<std::string> InsightLines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto t = xlint::Trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.emplace_back(t);
  }
  return out;
}

struct CheckOptions {
  std::string data;
  std::string insights;
  bool as_json = false;
  std::string out_specs;
  bool use_llm = false;
};

int RunCheck(const CheckOptions& o) {
  std::string body;
  const xlint::ExplanationTable table = LoadData(o.data, &body);
  const std::vector<std::string> lines = InsightLines(ReadAll(o.insights));
  if (lines.empty()) throw UsageError("no insights in " + o.insights);
  if (!o.out_specs.empty()) fs::create_directories(o.out_specs);

  std::optional<xlint::Extractor> extractor;
  if (o.use_llm) extractor.emplace(xlint::ExtractorConfig::FromEnv());

  const xlint::VisSpec current = xlint::HeatmapSpec("ds-" + xlint::Fnv1aHex(body));
  bool any_refuted = false, any_undetermined = false;
  json report = json::array();

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& text = lines[i];
    json entry = {{"index", i}, {"text", text}};
    std::optional<xlint::BoundInsight> bound;
    std::string problem;
    try {
      xlint::BindResult br;
      if (text.front() == '{') {
        br = xlint::BindDocument(json::parse(text), table);
      } else {
        xlint::ParseOutcome p = xlint::ParseControlled(text, table);
        if (p.kind == xlint::ParseOutcome::Kind::kNoParse && extractor) {
          auto r = extractor->Extract(text, table);
          br = xlint::BindDocument(r.fill.document, table);
        } else if (p.kind == xlint::ParseOutcome::Kind::kNoParse) {
          problem = "no parse: " + p.diagnostic;
        } else {
          br = xlint::BindDocument(p.document, table);
        }
      }
      if (problem.empty()) {
        if (br.bound) {
          bound = br.bound;
        } else {
          std::string paths;
          for (const auto& s : br.slots) paths += (paths.empty() ? "" : ", ") + s.path;
          problem = "open slots: " + paths;
          json slots = json::array();
          for (const auto& s : br.slots) slots.push_back(xlint::ToJson(s));
          entry["slots"] = slots;
        }
      }
    } catch (const xlint::Error& e) {
      problem = std::string(xlint::ErrorCodeName(e.code())) + ": " + e.what();
    } catch (const json::exception& e) {
      problem = std::string("bad insight document: ") + e.what();
    }

    if (!bound) {
      any_undetermined = true;
      entry["error"] = problem;
      if (!o.as_json) std::cout << i << "\tunparsed\t" << text << "\t" << problem << "\n";
      report.push_back(entry);
      continue;
    }

    const xlint::Verdict v = xlint::Evaluate(*bound, table);
    const xlint::MappingResult m = xlint::Map(*bound, current);
    if (v.outcome == xlint::Outcome::kRefuted) any_refuted = true;
    if (v.outcome == xlint::Outcome::kUndetermined) any_undetermined = true;
    entry["insight"] = xlint::ToJson(bound->insight);
    entry["verdict"] = xlint::ToJson(v);
    entry["mapping"] = xlint::ToJson(m);

    if (!o.out_specs.empty()) {
      const json compiled = xlint::CompileMapping(m, table);
      const fs::path dir(o.out_specs);
      std::ofstream(dir / ("insight-" + std::to_string(i) + ".annotated.vl.json"))
          << compiled["annotated"].dump(2) << "\n";
      if (!compiled["recommended"].is_null()) {
        std::ofstream(dir / ("insight-" + std::to_string(i) + ".recommended.vl.json"))
            << compiled["recommended"].dump(2) << "\n";
      }
    }

    if (!o.as_json) {
      std::cout << i << "\t" << xlint::ToString(v.outcome) << "\t"
                << xlint::Render(bound->insight).Flatten() << "\t";
      bool first = true;
      for (const auto& [k, x] : v.statistics) {
        std::cout << (first ? "" : " ") << k << "=" << xlint::FormatNumber(x);
        first = false;
      }
      if (v.outcome == xlint::Outcome::kUndetermined && v.explanation.contains("reason")) {
        std::cout << (first ? "" : " ") << "reason=" << v.explanation["reason"].dump();
      }
      std::cout << "\n";
    }
    report.push_back(entry);
  }
  if (o.as_json) std::cout << report.dump(2) << "\n";
  if (any_undetermined) return kExitUndetermined;
  return any_refuted ? kExitRefuted : kExitSupported;
}

int RunParse(const std::string& data, const std::string& text) {
  const auto table = LoadData(data);
  const xlint::ParseOutcome p = xlint::ParseControlled(text, table);
  json out;
  switch (p.kind) {
    case xlint::ParseOutcome::Kind::kNoParse:
      out = {{"kind", "no-parse"}, {"diagnostic", p.diagnostic}};
      break;
    case xlint::ParseOutcome::Kind::kInsight:
      out = {{"kind", "insight"},
             {"document", p.document},
             {"rendered", xlint::Render(*p.insight).Flatten()}};
      break;
    case xlint::ParseOutcome::Kind::kSlots: {
      json slots = json::array();
      for (const auto& s : p.slots) slots.push_back(xlint::ToJson(s));
      out = {{"kind", "slots"},
             {"document", p.document},
             {"slots", slots},
             {"rendered", xlint::Render(p.document, p.slots).Flatten()}};
      break;
    }
  }
  std::cout << out.dump(2) << "\n";
  return p.kind == xlint::ParseOutcome::Kind::kNoParse ? kExitUndetermined : 0;
}

int RunSynth(int which, std::size_t rows, std::uint64_t seed, double positive_fraction,
             const std::string& format, const std::string& out) {
  const xlint::ExplanationTable table =
      which == 2 ? xlint::synthetic::SignControlledTable(seed, rows, positive_fraction)
                 : xlint::synthetic::DiabetesLikeTable(seed, rows);
  const std::string body = xlint::SerializeTable(
      table, format == "csv" ? xlint::TableFormat::kCsv : xlint::TableFormat::kJson);
  if (out.empty() || out == "-") {
    std::cout << body;
  } else {
    xlint::WriteFileAtomic(out, body);
  }
  return 0;
}

// Authored replies -> fixture files. The input holds one entry or an array
// of entries {"text": ..., "classify": [reply, ...], "fill": [reply, ...]};
// the replies are replayed through the real pipeline so the prompts and
// repair reasons stored in each trace are the ones the extractor produces.
int RunFixtureBuild(const std::string& spec_path, const std::string& out_dir, int retries) {
  json spec = json::parse(ReadAll(spec_path));
  if (!spec.is_array()) spec = json::array({spec});
  fs::create_directories(out_dir);
  const auto table = xlint::synthetic::DiabetesLikeTable(1, 20);
  for (const json& entry : spec) {
    const std::string text = entry.at("text").get<std::string>();
    auto client = std::make_shared<xlint::ScriptedChatClient>();
    for (const auto& r : entry.value("classify", json::array())) client->Add("classify", r);
    for (const auto& r : entry.value("fill", json::array())) client->Add("fill", r);

    xlint::ExtractorConfig cfg;
    cfg.max_repair_retries = retries;
    xlint::Extractor extractor(cfg, client);
    xlint::ExtractionTrace trace;
    try {
      const auto c = extractor.Classify(text, table, &trace);
      extractor.FillTemplate(text, c.type, table, &trace);
    } catch (const xlint::Error& e) {
      std::cerr << "note: " << text << ": " << xlint::ErrorCodeName(e.code()) << "\n";
    }
    const std::string path = (fs::path(out_dir) / xlint::FixtureName(text)).string();
    xlint::WriteFileAtomic(path, xlint::FixtureJson(text, trace).dump(2) + "\n");
    std::cout << path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Check analyst insights about feature attributions against the data"};
  app.require_subcommand(1);

  CheckOptions check;
  auto* c = app.add_subcommand("check", "evaluate insights and map them onto charts");
  c->add_option("--data", check.data, "explanation table (CSV or JSON)")->required();
  c->add_option("--insights", check.insights, "one insight per line, or - for stdin")->required();
  c->add_flag("--json", check.as_json, "print a JSON report instead of lines");
  c->add_option("--out-specs", check.out_specs, "write compiled Vega-Lite specs here");
  c->add_flag("--llm", check.use_llm, "send unparsed lines through the extractor (XLINT_LLM_*)");

  std::string parse_data, parse_text;
  auto* p = app.add_subcommand("parse", "parse one controlled-language sentence");
  p->add_option("--data", parse_data, "explanation table")->required();
  p->add_option("text", parse_text, "sentence")->required();

  std::string card_data;
  auto* card = app.add_subcommand("card", "print the model card of a table");
  card->add_option("--data", card_data, "explanation table")->required();

  int which = 1;
  std::size_t rows = 200;
  std::uint64_t seed = 7;
  double positive = 0.4;
  std::string format = "json", out;
  auto* synth = app.add_subcommand("synth", "write a seeded diabetes-shaped table");
  synth->add_option("--case", which, "1: independent features, 2: sign-controlled bp")
      ->check(CLI::IsMember({1, 2}));
  synth->add_option("--rows", rows, "number of rows")->check(CLI::Range(1, 1000000));
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--positive-fraction", positive, "case 2: share of rows with bp > 0")
      ->check(CLI::Range(0.0, 1.0));
  synth->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  synth->add_option("-o,--out", out, "output file (default stdout)");

  std::string fixture_text;
  auto* fname = app.add_subcommand("fixture-name", "print the fixture file name for a text");
  fname->add_option("text", fixture_text)->required();

  std::string fixture_spec, fixture_out = ".";
  int fixture_retries = 2;
  auto* fbuild = app.add_subcommand("fixture-build", "turn authored replies into a fixture");
  fbuild->add_option("spec", fixture_spec, "authored replies JSON")->required();
  fbuild->add_option("-o,--out-dir", fixture_out, "fixture directory");
  fbuild->add_option("--retries", fixture_retries, "max repair retries")->check(CLI::Range(0, 10));

  xlint::ServiceConfig serve_cfg;
  auto* serve = app.add_subcommand("serve", "run the HTTP API (XLINT_* environment)");
  serve->add_option("--data-dir", serve_cfg.data_dir, "session store directory");
  serve->add_option("--host", serve_cfg.host, "listen address");
  serve->add_option("--port", serve_cfg.port, "listen port")->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (c->parsed()) return RunCheck(check);
    if (p->parsed()) return RunParse(parse_data, parse_text);
    if (card->parsed()) {
      std::string body;
      const auto table = LoadData(card_data, &body);
      json m = xlint::ModelCard(table);
      m["dataset_id"] = "ds-" + xlint::Fnv1aHex(body);
      std::cout << m.dump(2) << "\n";
      return 0;
    }
    if (synth->parsed()) return RunSynth(which, rows, seed, positive, format, out);
    if (fname->parsed()) {
      std::cout << xlint::FixtureName(fixture_text) << "\n";
      return 0;
    }
    if (fbuild->parsed()) return RunFixtureBuild(fixture_spec, fixture_out, fixture_retries);
    if (serve->parsed()) {
      // Flags win over the environment, which wins over the defaults.
      xlint::ServiceConfig cfg = xlint::ServiceConfig::FromEnv();
      if (serve->count("--data-dir")) cfg.data_dir = serve_cfg.data_dir;
      if (serve->count("--host")) cfg.host = serve_cfg.host;
      if (serve->count("--port")) cfg.port = serve_cfg.port;
      xlint::Service service(cfg);
      std::cerr << "listening on " << cfg.host << ":" << cfg.port << "\n";
      return service.Listen() ? 0 : kExitUsage;
    }
  } catch (const UsageError& e) {
    std::cerr << "xlint: " << e.what() << "\n";
    return kExitUsage;
  } catch (const xlint::Error& e) {
    std::cerr << "xlint: " << xlint::ErrorCodeName(e.code()) << ": " << e.what() << "\n";
    return kExitUndetermined;
  } catch (const std::exception& e) {
    std::cerr << "xlint: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
