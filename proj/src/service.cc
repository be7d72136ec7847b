#include "sluj/service.h"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "sluj/errors.h"

namespace sluj {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

HttpReply reply(int status, json body) {
  body["schema_version"] = kSchemaVersion;
  return {status, body.dump()};
}

HttpReply error(int status, const std::string& message) {
  return reply(status, json{{"error", message}});
}

std::string random_id() {
  static std::mutex mu;
  static std::random_device rd;
  std::lock_guard lock(mu);
  char buf[33];
  std::snprintf(buf, sizeof buf, "%08x%08x%08x%08x", rd(), rd(), rd(), rd());
  return buf;
}

std::string utc_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

int parse_port(const std::string& v) {
  try {
    size_t used = 0;
    int p = std::stoi(v, &used);
    if (used == v.size() && p >= 0 && p <= 65535) return p;
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid port '" + v + "'");
}

uint64_t parse_seed(const std::string& v) {
  try {
    size_t used = 0;
    uint64_t s = std::stoull(v, &used);
    if (used == v.size()) return s;
  } catch (const std::exception&) {
  }
  throw ConfigError("invalid seed '" + v + "'");
}

// Request body as a JSON object; nullopt when it is not one.
std::optional<json> parse_body(const std::string& body) {
  if (trim(body).empty()) return json::object();
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

std::optional<std::string> string_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

json slot_list(const std::vector<std::string>& tokens,
               const std::vector<std::string>& labels) {
  json out = json::array();
  for (size_t i = 0; i < tokens.size(); ++i) {
    out.push_back({{"token", tokens[i]}, {"label", i < labels.size() ? labels[i] : "O"}});
  }
  return out;
}

json state_json(const DialogState& s) {
  return {{"turn", s.turn},
          {"rs", s.requested},
          {"is", s.informed},
          {"ds", s.denied},
          {"active", s.active}};
}

}  // namespace

ServiceConfig ServiceConfig::parse(const std::string& text) {
  ServiceConfig c;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("service config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "model") {
      c.model_path = value;
    } else if (key == "data") {
      c.data_dir = value;
    } else if (key == "port") {
      c.port = parse_port(value);
    } else if (key == "host") {
      c.host = value;
    } else if (key == "seed") {
      c.seed = parse_seed(value);
    } else if (key == "transcript") {
      c.transcript = value;
    } else if (key == "web") {
      c.web_dir = value;
    } else if (key == "dialog_nlu") {
      if (value != "rules" && value != "model") {
        throw ConfigError("dialog_nlu must be rules or model, got '" + value + "'");
      }
      c.dialog_nlu = value;
    } else if (key == "concurrent") {
      if (value != "serialize" && value != "reject") {
        throw ConfigError("concurrent must be serialize or reject, got '" + value + "'");
      }
      c.reject_concurrent = value == "reject";
    } else {
      throw ConfigError("unknown service config key '" + key + "'");
    }
  }
  return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void ServiceConfig::apply_env(
    const std::function<std::optional<std::string>(const char*)>& getenv) {
  if (auto v = getenv("SLUJ_MODEL")) model_path = *v;
  if (auto v = getenv("SLUJ_DATA")) data_dir = *v;
  if (auto v = getenv("SLUJ_PORT")) port = parse_port(*v);
  if (auto v = getenv("SLUJ_SEED")) seed = parse_seed(*v);
}

ChatService::ChatService(Options options) : options_(std::move(options)) {
  if (!options_.dialog_nlu) throw ContractError("ChatService needs a dialog NLU");
  if (!options_.new_id) options_.new_id = random_id;
  if (!options_.now) options_.now = utc_now;
}

std::unique_ptr<ChatService> ChatService::from_config(const ServiceConfig& config) {
  Options o;
  o.scenarios = ScenarioSet::load(config.data_dir);
  if (!config.model_path.empty()) {
    o.model = std::make_shared<const JointModel>(JointModel::load(config.model_path));
  }
  if (config.dialog_nlu == "model") {
    if (!o.model) throw ConfigError("dialog_nlu = model needs a model");
    o.dialog_nlu = std::make_shared<ModelNlu>(
        o.model, IntentMap::load(config.data_dir / "intent_map.txt"));
  } else {
    o.dialog_nlu = std::make_shared<RuleNlu>(RuleNlu::load(config.data_dir));
  }
  o.seed = config.seed;
  o.reject_concurrent = config.reject_concurrent;
  o.transcript = config.transcript;
  return std::make_unique<ChatService>(std::move(o));
}

HttpReply ChatService::handle(const std::string& method, const std::string& path,
                              const std::string& body) {
  try {
    if (path == "/api/nlu") {
      if (method != "POST") return error(405, "use POST");
      return nlu(body);
    }
    if (path == "/api/scenarios") {
      if (method != "GET") return error(405, "use GET");
      return scenarios();
    }
    if (path == "/api/session") {
      if (method != "POST") return error(405, "use POST");
      return create_session(body);
    }
    static const std::string kPrefix = "/api/session/";
    if (path.rfind(kPrefix, 0) == 0) {
      std::string rest = path.substr(kPrefix.size());
      auto slash = rest.find('/');
      if (slash != std::string::npos) {
        std::string id = rest.substr(0, slash);
        std::string what = rest.substr(slash + 1);
        if (what == "turn") {
          if (method != "POST") return error(405, "use POST");
          return turn(id, body);
        }
        if (what == "tips") {
          if (method != "GET") return error(405, "use GET");
          return tips(id);
        }
      }
    }
    return error(404, "no route for " + method + " " + path);
  } catch (const Error& e) {
    return error(500, e.what());
  }
}

HttpReply ChatService::nlu(const std::string& body) {
  if (!options_.model) return error(503, "no model loaded");
  auto j = parse_body(body);
  if (!j) return error(400, "body must be a JSON object");
  auto text = string_field(*j, "text");
  if (!text) return error(400, "missing text");
  auto tokens = split_tokens(*text);
  if (tokens.empty()) return error(400, "empty text");
  Prediction p = options_.model->predict_tokens(tokens);
  json probs = json::object();
  const auto& intents = options_.model->vocab().intents;
  for (size_t i = 0; i < p.intent_probs.size(); ++i) {
    probs[intents.decode(i)] = p.intent_probs[i];
  }
  return reply(200, {{"intent", p.intent},
                     {"intent_probs", probs},
                     {"slots", slot_list(tokens, p.slots)}});
}

HttpReply ChatService::scenarios() const {
  return reply(200, {{"scenarios", options_.scenarios.names()}});
}

HttpReply ChatService::create_session(const std::string& body) {
  auto j = parse_body(body);
  if (!j) return error(400, "body must be a JSON object");
  auto name = string_field(*j, "scenario");
  if (!name) return error(400, "missing scenario");
  if (!options_.scenarios.contains(*name)) {
    return error(400, "unknown scenario '" + *name + "'");
  }
  auto session = std::make_shared<Session>();
  {
    std::lock_guard lock(store_mu_);
    if (auto s = j->find("seed"); s != j->end()) {
      if (!s->is_number_unsigned()) return error(400, "seed must be a non-negative integer");
      session->seed = s->get<uint64_t>();
    } else {
      session->seed = options_.seed + created_;
    }
    ++created_;
    do {
      session->id = options_.new_id();
    } while (sessions_.count(session->id));
    session->rng = Rng(session->seed);
    session->state = new_dialog(*name);
    session->created = options_.now();
    sessions_[session->id] = session;
  }
  const Scenario& scenario = options_.scenarios.get(*name);
  std::string greeting = nlg_render("greeting", session->state, {}, scenario);
  return reply(200, {{"session_id", session->id},
                     {"scenario", *name},
                     {"seed", session->seed},
                     {"greeting", greeting}});
}

std::shared_ptr<ChatService::Session> ChatService::find(const std::string& id) {
  std::lock_guard lock(store_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

HttpReply ChatService::turn(const std::string& id, const std::string& body) {
  auto session = find(id);
  if (!session) return error(404, "unknown session");
  auto j = parse_body(body);
  if (!j) return error(400, "body must be a JSON object");
  auto text = string_field(*j, "text");
  if (!text) return error(400, "missing text");

  std::unique_lock lock(session->mu, std::defer_lock);
  if (options_.reject_concurrent) {
    if (!lock.try_lock()) return error(409, "a turn is already in progress");
  } else {
    lock.lock();
  }
  if (!session->state.active) return error(410, "session has ended");

  const Scenario& scenario = options_.scenarios.get(session->state.scenario);
  NluResult nlu = options_.dialog_nlu->analyze(*text, scenario);
  StepOutcome step = dst_step(session->state, nlu, session->rng, options_.scenarios);
  std::string response =
      nlg_render(step.action, step.state, step.results, scenario);
  session->state = step.state;

  json chunks = json::array();
  for (const auto& [slot, value] : nlu.chunks) {
    chunks.push_back({{"slot", slot}, {"value", value}});
  }
  json out = {{"response", response},
              {"action", step.action},
              {"nlu", {{"intent", nlu.intent},
                       {"slots", slot_list(nlu.tokens, nlu.labels)},
                       {"chunks", chunks}}},
              {"state", state_json(step.state)},
              {"results", step.results.size()},
              {"ended", !step.state.active}};
  if (step.action == "tips") out["tips"] = suggest_tips(scenario, step.state);

  if (!options_.transcript.empty()) {
    json line = {{"ts", options_.now()},
                 {"session", session->id},
                 {"text", *text},
                 {"intent", nlu.intent},
                 {"slots", out["nlu"]["slots"]},
                 {"action", step.action},
                 {"response", response}};
    log_turn(line.dump());
  }
  return reply(200, std::move(out));
}

HttpReply ChatService::tips(const std::string& id) {
  auto session = find(id);
  if (!session) return error(404, "unknown session");
  std::lock_guard lock(session->mu);
  if (!session->state.active) return error(410, "session has ended");
  const Scenario& scenario = options_.scenarios.get(session->state.scenario);
  return reply(200, {{"tips", suggest_tips(scenario, session->state)}});
}

void ChatService::log_turn(const std::string& line) {
  std::lock_guard lock(log_mu_);
  std::ofstream out(options_.transcript, std::ios::app);
  if (!out) throw IoError("cannot append to transcript " + options_.transcript.string());
  out << line << '\n';
}

struct HttpServer::Impl {
  ChatService& service;
  httplib::Server server;
};

HttpServer::HttpServer(ChatService& service, std::filesystem::path web_dir)
    : impl_(new Impl{service, {}}) {
  auto& svr = impl_->server;
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    HttpReply r = impl_->service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  svr.Get(R"(/api/.*)", forward);
  svr.Post(R"(/api/.*)", forward);
  svr.Put(R"(/api/.*)", forward);
  svr.Delete(R"(/api/.*)", forward);
  svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  if (!web_dir.empty() && !svr.set_mount_point("/", web_dir.string())) {
    throw IoError("web directory " + web_dir.string() + " does not exist");
  }
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  auto& svr = impl_->server;
  int bound = port == 0 ? svr.bind_to_any_port(host) : (svr.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace sluj
