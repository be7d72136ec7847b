#ifndef SLUJ_SERVICE_H_
#define SLUJ_SERVICE_H_

// JSON-over-HTTP front end: model tagging and scenario chat sessions.
//
//   POST /api/nlu                 {text}            -> intent, probs, slots
//   GET  /api/scenarios                             -> scenario names
//   POST /api/session             {scenario, seed?} -> session_id, greeting
//   POST /api/session/{id}/turn   {text}            -> response, action, ...
//   GET  /api/session/{id}/tips                     -> tips
//
// Every body carries "schema_version". Errors are {"error": message}.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "sluj/dst.h"
#include "sluj/model.h"
#include "sluj/nlu.h"

namespace sluj {

inline constexpr int kSchemaVersion = 1;

// Flat `key = value` file with '#' comments. Keys: model, data, port, host,
// seed, transcript, web, dialog_nlu (rules | model), concurrent
// (serialize | reject).
struct ServiceConfig {
  std::filesystem::path model_path;  // empty: /api/nlu answers 503
  std::filesystem::path data_dir = "data";
  int port = 8080;
  std::string host = "127.0.0.1";
  uint64_t seed = 0;                  // base seed for sessions without one
  std::filesystem::path transcript;   // empty: no transcript log
  std::filesystem::path web_dir;      // empty: no static files
  std::string dialog_nlu = "rules";
  bool reject_concurrent = false;     // 409 instead of waiting

  static ServiceConfig parse(const std::string& text);
  static ServiceConfig load(const std::filesystem::path& path);
  // SLUJ_MODEL, SLUJ_PORT, SLUJ_DATA and SLUJ_SEED override file values.
  void apply_env(const std::function<std::optional<std::string>(const char*)>& getenv);
};

struct HttpReply {
  int status = 200;
  std::string body;  // JSON text
};

class ChatService {
 public:
  struct Options {
    ScenarioSet scenarios;
    std::shared_ptr<const JointModel> model;  // may be null
    std::shared_ptr<const Nlu> dialog_nlu;    // required
    uint64_t seed = 0;
    bool reject_concurrent = false;
    std::filesystem::path transcript;
    // Injectable for reproducible bodies; defaults are random ids and UTC
    // wall-clock timestamps.
    std::function<std::string()> new_id;
    std::function<std::string()> now;
  };

  explicit ChatService(Options options);
  static std::unique_ptr<ChatService> from_config(const ServiceConfig& config);

  // Thread-safe. Turns on one session are serialized (or rejected with 409).
  HttpReply handle(const std::string& method, const std::string& path,
                   const std::string& body);

 private:
  struct Session {
    std::mutex mu;
    std::string id;
    DialogState state;
    Rng rng{0};
    uint64_t seed = 0;
    std::string created;
  };

  HttpReply nlu(const std::string& body);
  HttpReply scenarios() const;
  HttpReply create_session(const std::string& body);
  HttpReply turn(const std::string& id, const std::string& body);
  HttpReply tips(const std::string& id);
  std::shared_ptr<Session> find(const std::string& id);
  void log_turn(const std::string& line);

  Options options_;
  std::mutex store_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  uint64_t created_ = 0;
  std::mutex log_mu_;
};

// Serves a ChatService over HTTP (CORS enabled, optional static web dir).
class HttpServer {
 public:
  HttpServer(ChatService& service, std::filesystem::path web_dir = {});
  ~HttpServer();

  // Port 0 picks a free port. Returns the bound port; throws IoError.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sluj

#endif  // SLUJ_SERVICE_H_
