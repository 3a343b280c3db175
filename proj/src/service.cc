#include "xlint/service.h"

#include <algorithm>
#include <cstdlib>
#include <variant>
#include <thread>

#include "httplib.h"
#include "xlint/error.h"
#include "xlint/grammar.h"
#include "xlint/text_util.h"

namespace xlint {

using nlohmann::json;

ServiceConfig ServiceConfig::FromEnv() {
  ServiceConfig c;
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  auto integer = [](const std::string& s, const char* name) {
    auto v = ParseNumber(s);
    if (!v || *v < 0 || *v != static_cast<double>(static_cast<long long>(*v))) {
      throw Error(ErrorCode::kMalformedInput, std::string(name) + " must be a whole number");
    }
    return static_cast<long long>(*v);
  };
  if (auto v = env("XLINT_DATA_DIR")) c.data_dir = *v;
  if (auto v = env("XLINT_HOST")) c.host = *v;
  if (auto v = env("XLINT_PORT")) c.port = static_cast<int>(integer(*v, "XLINT_PORT"));
  if (auto v = env("XLINT_MAX_UPLOAD_BYTES")) {
    c.max_upload_bytes = static_cast<std::size_t>(integer(*v, "XLINT_MAX_UPLOAD_BYTES"));
  }
  if (auto v = env("XLINT_CORS_ORIGIN")) c.cors_origin = *v;
  if (env("XLINT_LLM_MODE")) c.extractor = ExtractorConfig::FromEnv();
  return c;
}

json ModelCard(const ExplanationTable& table) {
  json features = json::array();
  for (const auto& f : table.features()) {
    features.push_back({{"name", f.name},
                        {"kind", f.kind == FeatureKind::kCategorical ? "categorical" : "quantitative"},
                        {"unit", f.unit ? json(*f.unit) : json(nullptr)},
                        {"description", f.description ? json(*f.description) : json(nullptr)}});
  }
  double sum = 0, lo = 0, hi = 0;
  for (std::size_t i = 0; i < table.rows().size(); ++i) {
    const double p = table.rows()[i].prediction;
    sum += p;
    lo = i == 0 ? p : std::min(lo, p);
    hi = i == 0 ? p : std::max(hi, p);
  }
  return {{"n_rows", table.num_rows()},
          {"base_value", table.base_value()},
          {"features", std::move(features)},
          {"prediction",
           {{"mean", sum / static_cast<double>(table.num_rows())}, {"min", lo}, {"max", hi}}},
          {"warnings", table.warnings()}};
}

void SetAtSlotPath(json& document, const std::string& slot_path, const json& value) {
  const auto dot = slot_path.find('.');
  if (dot == std::string::npos) {
    throw Error(ErrorCode::kMalformedInput, "slot path has no field", slot_path);
  }
  json* node = &document;
  std::string rest = slot_path.substr(dot + 1);
  while (true) {
    const auto next = rest.find('.');
    std::string part = rest.substr(0, next);
    std::optional<std::size_t> index;
    if (auto b = part.find('['); b != std::string::npos) {
      const auto e = part.find(']', b);
      auto n = ParseNumber(std::string_view(part).substr(b + 1, e - b - 1));
      if (e == std::string::npos || !n || *n < 0) {
        throw Error(ErrorCode::kMalformedInput, "bad index in slot path", slot_path);
      }
      index = static_cast<std::size_t>(*n);
      part = part.substr(0, b);
    }
    if (!node->is_object()) *node = json::object();
    node = &(*node)[part];
    if (index) {
      if (!node->is_array()) *node = json::array();
      while (node->size() <= *index) node->push_back(json::object());
      node = &(*node)[*index];
    }
    if (next == std::string::npos) break;
    rest = rest.substr(next + 1);
  }
  *node = value;
}

// ---------------------------------------------------------------------------

namespace {

int StatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kOpenSlots: return 409;
    case ErrorCode::kNoParse:
    case ErrorCode::kUnparseableClassification: return 422;
    case ErrorCode::kProviderUnavailable: return 502;
    case ErrorCode::kIo: return 500;
    default: return 400;
  }
}

ApiResponse Fail(ErrorCode code, const std::string& message, const std::string& path = "",
                 json extra = json::object()) {
  json err = {{"code", std::string(ErrorCodeName(code))}, {"message", message}};
  if (!path.empty()) err["path"] = path;
  json body = {{"error", std::move(err)}};
  for (auto& [k, v] : extra.items()) body[k] = v;
  return {StatusFor(code), std::move(body)};
}

ApiResponse FromError(const Error& e) {
  std::string msg = e.what();
  return Fail(e.code(), msg, e.path());
}

template <typename F>
ApiResponse Guard(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    return FromError(e);
  } catch (const json::exception& e) {
    return Fail(ErrorCode::kMalformedInput, e.what());
  } catch (const std::exception& e) {
    return Fail(ErrorCode::kIo, e.what());
  }
}

json SlotsJson(const std::vector<SlotStatus>& slots) {
  json out = json::array();
  for (const auto& s : slots) out.push_back(ToJson(s));
  return out;
}

std::vector<SlotStatus> SlotsFrom(const json& j) {
  std::vector<SlotStatus> out;
  for (const json& s : j) out.push_back(SlotFromJson(s));
  return out;
}

json InsightRecord(const std::string& text, const json& document,
                   const std::vector<SlotStatus>& slots,
                   const std::optional<StructuredInsight>& insight, const std::string& source,
                   const std::optional<std::string>& trace_id) {
  return {{"text", text},
          {"document", document},
          {"structured", insight && slots.empty() ? ToJson(*insight) : json(nullptr)},
          {"slots", SlotsJson(slots)},
          {"rendered", ToJson(Render(document, slots))},
          {"source", source},
          {"trace_id", trace_id ? json(*trace_id) : json(nullptr)},
          {"verdict", nullptr},
          {"mapping", nullptr}};
}

json InsightView(const json& record, std::size_t index) {
  json view = record;
  view["index"] = index;
  return view;
}

}  // namespace

struct Service::Impl {
  explicit Impl(const ServiceConfig& config) : store(config.data_dir) {}

  SessionStore store;
  std::unique_ptr<Extractor> extractor;
  std::unique_ptr<httplib::Server> server;
  std::thread thread;

  // Loads a session and its table or produces the error response.
  struct Loaded {
    json session;
    std::shared_ptr<const ExplanationTable> table;
  };
  std::variant<Loaded, ApiResponse> Load(const std::string& id) {
    auto s = store.LoadSession(id);
    if (!s) return Fail(ErrorCode::kNotFound, "no such session", id);
    auto table = store.GetDataset((*s)["dataset_id"].get<std::string>());
    if (!table) return Fail(ErrorCode::kNotFound, "session dataset is gone", id);
    return Loaded{std::move(*s), std::move(table)};
  }

  void Save(json& session) {
    session["updated_at"] = NowIso8601();
    store.SaveSession(session);
  }
};

Service::Service(ServiceConfig config, std::shared_ptr<ChatClient> chat)
    : config_(std::move(config)), impl_(std::make_unique<Impl>(config_)) {
  if (chat) {
    impl_->extractor = std::make_unique<Extractor>(config_.extractor.value_or(ExtractorConfig{}),
                                                   std::move(chat));
  } else if (config_.extractor) {
    impl_->extractor = std::make_unique<Extractor>(*config_.extractor);
  }
}

Service::~Service() { Stop(); }

ApiResponse Service::UploadDataset(const std::string& body, const std::string& content_type) {
  return Guard([&]() -> ApiResponse {
    if (body.size() > config_.max_upload_bytes) {
      return {413, {{"error",
                     {{"code", "PayloadTooLarge"},
                      {"message", "upload exceeds " + std::to_string(config_.max_upload_bytes) +
                                      " bytes"}}}}};
    }
    TableFormat format = SniffTableFormat(body);
    if (content_type.find("json") != std::string::npos) format = TableFormat::kJson;
    if (content_type.find("csv") != std::string::npos) format = TableFormat::kCsv;
    const ExplanationTable table = LoadTableFromString(body, format);
    const std::string id = impl_->store.PutDataset(table, body);
    return {201, {{"dataset_id", id}, {"model_card", ModelCard(table)}}};
  });
}

ApiResponse Service::GetDataset(const std::string& dataset_id) {
  return Guard([&]() -> ApiResponse {
    auto table = impl_->store.GetDataset(dataset_id);
    if (!table) return Fail(ErrorCode::kNotFound, "no such dataset", dataset_id);
    return {200, {{"dataset_id", dataset_id}, {"model_card", ModelCard(*table)}}};
  });
}

ApiResponse Service::CreateSession(const json& body) {
  return Guard([&]() -> ApiResponse {
    if (!body.is_object() || !body.contains("dataset_id") || !body["dataset_id"].is_string()) {
      return Fail(ErrorCode::kMalformedInput, "dataset_id is required", "$.dataset_id");
    }
    const std::string dataset_id = body["dataset_id"].get<std::string>();
    auto table = impl_->store.GetDataset(dataset_id);
    if (!table) return Fail(ErrorCode::kNotFound, "no such dataset", dataset_id);
    VisSpec spec = HeatmapSpec(dataset_id);
    if (body.contains("spec") && !body["spec"].is_null()) {
      spec = VisSpecFromJson(body["spec"]);
      spec.data_ref.dataset_id = dataset_id;
    }
    CheckSpec(spec, *table);
    const std::string now = NowIso8601();
    json session = {{"id", impl_->store.NewSessionId()},
                    {"dataset_id", dataset_id},
                    {"current_spec", ToJson(spec)},
                    {"insights", json::array()},
                    {"traces", json::object()},
                    {"created_at", now},
                    {"updated_at", now}};
    auto lock = impl_->store.Lock(session["id"].get<std::string>());
    impl_->store.SaveSession(session);
    return {201, session};
  });
}

ApiResponse Service::GetSession(const std::string& session_id) {
  return Guard([&]() -> ApiResponse {
    auto lock = impl_->store.Lock(session_id);
    auto s = impl_->store.LoadSession(session_id);
    if (!s) return Fail(ErrorCode::kNotFound, "no such session", session_id);
    return {200, std::move(*s)};
  });
}

ApiResponse Service::PutSpec(const std::string& session_id, const json& body) {
  return Guard([&]() -> ApiResponse {
    auto lock = impl_->store.Lock(session_id);
    auto loaded = impl_->Load(session_id);
    if (auto* r = std::get_if<ApiResponse>(&loaded)) return *r;
    auto& [session, table] = std::get<Impl::Loaded>(loaded);
    VisSpec spec = VisSpecFromJson(body);
    spec.data_ref.dataset_id = session["dataset_id"].get<std::string>();
    CheckSpec(spec, *table);
    session["current_spec"] = ToJson(spec);
    impl_->Save(session);
    return {200, session};
  });
}

ApiResponse Service::SubmitInsight(const std::string& session_id, const json& body) {
  return Guard([&]() -> ApiResponse {
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string() ||
        Trim(body["text"].get<std::string>()).empty()) {
      return Fail(ErrorCode::kMalformedInput, "text is required", "$.text");
    }
    const std::string text = body["text"].get<std::string>();
    const bool use_llm = body.value("use_llm", false);

    auto lock = impl_->store.Lock(session_id);
    auto loaded = impl_->Load(session_id);
    if (auto* r = std::get_if<ApiResponse>(&loaded)) return *r;
    auto& [session, table] = std::get<Impl::Loaded>(loaded);

    ParseOutcome parsed = ParseControlled(text, *table);
    json document;
    std::vector<SlotStatus> slots;
    std::optional<StructuredInsight> insight;
    std::string source = "grammar";
    std::optional<std::string> trace_id;

    if (parsed.kind != ParseOutcome::Kind::kNoParse) {
      document = std::move(parsed.document);
      slots = std::move(parsed.slots);
      insight = std::move(parsed.insight);
    } else if (!use_llm) {
      return Fail(ErrorCode::kNoParse, "not in the controlled language: " + parsed.diagnostic);
    } else if (!impl_->extractor) {
      return Fail(ErrorCode::kProviderUnavailable, "no language model provider is configured");
    } else {
      ExtractionResult r = impl_->extractor->Extract(text, *table);
      document = std::move(r.fill.document);
      slots = std::move(r.fill.slots);
      insight = std::move(r.fill.insight);
      source = r.trace.fallback ? "grammar-fallback" : "llm";
      trace_id = "tr-" + std::to_string(session["traces"].size());
      session["traces"][*trace_id] = ToJson(r.trace);
    }

    const std::size_t index = session["insights"].size();
    session["insights"].push_back(
        InsightRecord(text, document, slots, insight, source, trace_id));
    impl_->Save(session);
    return {201, InsightView(session["insights"][index], index)};
  });
}

ApiResponse Service::CompleteSlots(const std::string& session_id, std::size_t index,
                                   const json& body) {
  return Guard([&]() -> ApiResponse {
    auto lock = impl_->store.Lock(session_id);
    auto loaded = impl_->Load(session_id);
    if (auto* r = std::get_if<ApiResponse>(&loaded)) return *r;
    auto& [session, table] = std::get<Impl::Loaded>(loaded);
    if (index >= session["insights"].size()) {
      return Fail(ErrorCode::kNotFound, "no such insight", std::to_string(index));
    }
    if (!body.is_object() || !body.contains("values") || !body["values"].is_object()) {
      return Fail(ErrorCode::kMalformedInput, "values object is required", "$.values");
    }
    json& record = session["insights"][index];
    const auto open = SlotsFrom(record["slots"]);
    json document = record["document"];
    for (const auto& [path, raw] : body["values"].items()) {
      const bool is_open = std::any_of(open.begin(), open.end(),
                                       [&](const SlotStatus& s) { return s.path == path; });
      if (!is_open) return Fail(ErrorCode::kMalformedInput, "not an open slot", path);
      json value = raw;
      const bool numeric_slot = path.ends_with(".threshold") || path.ends_with(".constant");
      if (numeric_slot && value.is_string()) {
        if (auto n = ParseNumber(Trim(value.get<std::string>()))) value = *n;
      }
      if (path.ends_with(".bounds") && !value.is_array()) value = json::array({value});
      SetAtSlotPath(document, path, value);
    }
    BindResult bound = BindDocument(document, *table);
    std::optional<StructuredInsight> insight;
    if (bound.bound) insight = bound.bound->insight;
    json updated = InsightRecord(record["text"].get<std::string>(), bound.document, bound.slots,
                                 insight, record["source"].get<std::string>(),
                                 record["trace_id"].is_string()
                                     ? std::optional<std::string>(record["trace_id"])
                                     : std::nullopt);
    record = std::move(updated);
    impl_->Save(session);
    return {200, InsightView(session["insights"][index], index)};
  });
}

ApiResponse Service::CheckInsight(const std::string& session_id, std::size_t index) {
  return Guard([&]() -> ApiResponse {
    auto lock = impl_->store.Lock(session_id);
    auto loaded = impl_->Load(session_id);
    if (auto* r = std::get_if<ApiResponse>(&loaded)) return *r;
    auto& [session, table] = std::get<Impl::Loaded>(loaded);
    if (index >= session["insights"].size()) {
      return Fail(ErrorCode::kNotFound, "no such insight", std::to_string(index));
    }
    json& record = session["insights"][index];
    if (!record["slots"].empty()) {
      return Fail(ErrorCode::kOpenSlots, "complete the open slots before checking", "",
                  {{"slots", record["slots"]}});
    }
    BindResult bound = BindDocument(record["document"], *table);
    if (!bound.bound) {
      return Fail(ErrorCode::kOpenSlots, "insight no longer binds to the dataset", "",
                  {{"slots", SlotsJson(bound.slots)}});
    }
    const Verdict verdict = Evaluate(*bound.bound, *table, config_.eval);
    const VisSpec spec = VisSpecFromJson(session["current_spec"]);
    const MappingResult mapping = Map(*bound.bound, spec, config_.mapper);
    json compiled = CompileMapping(mapping, *table);
    record["verdict"] = ToJson(verdict);
    record["mapping"] = ToJson(mapping);
    impl_->Save(session);
    return {200,
            {{"index", index},
             {"verdict", record["verdict"]},
             {"mapping", record["mapping"]},
             {"compiled", std::move(compiled)},
             {"rendered", record["rendered"]}}};
  });
}

// ---------------------------------------------------------------------------
// HTTP wiring

namespace {

void Send(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

std::optional<json> ParseBody(const httplib::Request& req, httplib::Response& res) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    Send(res, Fail(ErrorCode::kMalformedInput, std::string("request body is not JSON: ") + e.what()));
    return std::nullopt;
  }
}

std::size_t IndexOf(const std::string& s) { return static_cast<std::size_t>(std::stoull(s)); }

}  // namespace

void Service::Mount(httplib::Server& server) {
  server.set_payload_max_length(config_.max_upload_bytes);
  server.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"status":"ok"})", "application/json");
  });
  server.Post("/datasets", [this](const httplib::Request& req, httplib::Response& res) {
    Send(res, UploadDataset(req.body, req.get_header_value("Content-Type")));
  });
  server.Get(R"(/datasets/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    Send(res, GetDataset(req.matches[1]));
  });
  server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    if (auto body = ParseBody(req, res)) Send(res, CreateSession(*body));
  });
  server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    Send(res, GetSession(req.matches[1]));
  });
  server.Put(R"(/sessions/([^/]+)/spec)",
             [this](const httplib::Request& req, httplib::Response& res) {
               if (auto body = ParseBody(req, res)) Send(res, PutSpec(req.matches[1], *body));
             });
  server.Post(R"(/sessions/([^/]+)/insights)",
              [this](const httplib::Request& req, httplib::Response& res) {
                if (auto body = ParseBody(req, res)) {
                  Send(res, SubmitInsight(req.matches[1], *body));
                }
              });
  server.Post(R"(/sessions/([^/]+)/insights/(\d+)/complete)",
              [this](const httplib::Request& req, httplib::Response& res) {
                if (auto body = ParseBody(req, res)) {
                  Send(res, CompleteSlots(req.matches[1], IndexOf(req.matches[2]), *body));
                }
              });
  server.Post(R"(/sessions/([^/]+)/insights/(\d+)/check)",
              [this](const httplib::Request& req, httplib::Response& res) {
                Send(res, CheckInsight(req.matches[1], IndexOf(req.matches[2])));
              });
}

bool Service::Listen() {
  impl_->server = std::make_unique<httplib::Server>();
  Mount(*impl_->server);
  return impl_->server->listen(config_.host, config_.port);
}

int Service::ListenInBackground() {
  impl_->server = std::make_unique<httplib::Server>();
  Mount(*impl_->server);
  const int port = impl_->server->bind_to_any_port(config_.host);
  if (port < 0) throw Error(ErrorCode::kIo, "cannot bind", config_.host);
  impl_->thread = std::thread([this] { impl_->server->listen_after_bind(); });
  impl_->server->wait_until_ready();
  return port;
}

void Service::Stop() {
  if (impl_ && impl_->server) impl_->server->stop();
  if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace xlint
