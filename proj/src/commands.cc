#include "sluj/commands.h"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sluj/corpus.h"
#include "sluj/errors.h"
#include "sluj/eval.h"
#include "sluj/model.h"
#include "sluj/service.h"

namespace sluj {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  bool json = false;

  std::string data, dev, config, out, metrics;
  std::optional<size_t> epochs;
  std::optional<uint64_t> seed;
  std::optional<double> learning_rate;

  std::string model, pred, report_path, name;
  std::string text;

  uint64_t synth_seed = 0;
  size_t synth_n = 0;

  std::optional<int> port;
  std::string web, transcript, service_config;
};

std::string dataset_name(const std::string& dir) {
  fs::path p = fs::path(dir).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

int cmd_train(const Options& o, std::ostream& out) {
  TrainConfig cfg;
  if (!o.config.empty()) cfg = load_train_config(o.config);
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.seed) cfg.seed = *o.seed;
  if (o.learning_rate) cfg.learning_rate = *o.learning_rate;
  validate_config(cfg);

  auto data = load_dataset(o.data);
  std::vector<Example> dev;
  if (!o.dev.empty()) dev = load_dataset(o.dev);

  const std::string metrics_path = o.metrics.empty() ? o.out + ".metrics.jsonl" : o.metrics;
  std::ofstream metrics(metrics_path);
  if (!metrics) throw IoError("cannot write " + metrics_path);

  auto log_epoch = [&](const EpochMetrics& m, const JointModel&) {
    const std::string line = metrics_line(m);
    metrics << line << '\n';
    if (o.json) {
      out << line << '\n';
    } else {
      out << "epoch " << m.epoch << " loss " << m.loss;
      if (m.dev_f1) out << " dev_f1 " << *m.dev_f1;
      if (m.dev_intent_accuracy) out << " dev_intent_acc " << *m.dev_intent_accuracy;
      out << '\n';
    }
    out.flush();
    return true;
  };
  TrainResult r = train(data, cfg, dev, log_epoch);
  r.model.save(o.out);
  if (o.json) {
    out << json{{"checkpoint", o.out}, {"best_epoch", r.best_epoch},
                {"metrics", metrics_path}}.dump()
        << '\n';
  } else {
    out << "saved " << o.out << " (epoch " << r.best_epoch << ")\n";
  }
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  auto gold = load_dataset(o.data);
  if (gold.empty()) throw ContractError("dataset " + o.data + " is empty");
  std::vector<std::vector<std::string>> gold_slots, pred_slots;
  std::vector<std::string> gold_intents, pred_intents;
  for (const auto& e : gold) {
    gold_slots.push_back(e.slots);
    gold_intents.push_back(e.intent);
  }
  if (!o.model.empty()) {
    JointModel model = JointModel::load(o.model);
    for (const auto& e : gold) {
      Prediction p = model.predict(e);
      pred_slots.push_back(p.slots);
      pred_intents.push_back(p.intent);
    }
  } else {
    auto pred = load_dataset(o.pred);
    if (pred.size() != gold.size()) {
      throw ParseError("prediction set has " + std::to_string(pred.size()) +
                       " examples, gold has " + std::to_string(gold.size()));
    }
    for (size_t i = 0; i < pred.size(); ++i) {
      if (pred[i].tokens != gold[i].tokens) {
        throw ParseError("prediction line " + std::to_string(i + 1) +
                         " has different tokens than the gold set");
      }
      pred_slots.push_back(pred[i].slots);
      pred_intents.push_back(pred[i].intent);
    }
  }
  DatasetMetrics m;
  m.dataset = o.name.empty() ? dataset_name(o.data) : o.name;
  m.slot_f1 = slot_f1(gold_slots, pred_slots).f1;
  m.intent_accuracy = intent_accuracy(gold_intents, pred_intents);
  ReportRow row{o.model.empty() ? "Predictions" : "Our Model", {m}};
  const std::string table = report(std::span<const ReportRow>(&row, 1));
  if (!o.report_path.empty()) {
    std::ofstream f(o.report_path);
    if (!f) throw IoError("cannot write " + o.report_path);
    f << table;
  }
  if (o.json) {
    out << json{{"dataset", m.dataset}, {"slot_f1", m.slot_f1},
                {"intent_accuracy", m.intent_accuracy}, {"examples", gold.size()}}.dump()
        << '\n';
  } else {
    out << table;
  }
  return 0;
}

int cmd_tag(const Options& o, std::ostream& out) {
  auto tokens = split_tokens(o.text);
  if (tokens.empty()) throw ContractError("--text is empty");
  JointModel model = JointModel::load(o.model);
  Prediction p = model.predict_tokens(tokens);
  if (o.json) {
    out << json{{"intent", p.intent}, {"tokens", tokens}, {"slots", p.slots}}.dump()
        << '\n';
  } else {
    out << "intent\t" << p.intent << '\n';
    for (size_t i = 0; i < tokens.size(); ++i) {
      out << tokens[i] << '\t' << p.slots[i] << '\n';
    }
  }
  return 0;
}

int cmd_synth(const Options& o, std::ostream& out) {
  auto data = synth_generate(o.synth_seed, o.synth_n);
  save_dataset(o.out, data);
  if (o.json) {
    out << json{{"out", o.out}, {"examples", data.size()}}.dump() << '\n';
  } else {
    out << "wrote " << data.size() << " examples to " << o.out << '\n';
  }
  return 0;
}

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Options& o, std::ostream& out) {
  ServiceConfig cfg;
  if (!o.service_config.empty()) cfg = ServiceConfig::load(o.service_config);
  cfg.apply_env([](const char* key) -> std::optional<std::string> {
    const char* v = std::getenv(key);
    return v ? std::optional<std::string>(v) : std::nullopt;
  });
  if (!o.model.empty()) cfg.model_path = o.model;
  if (!o.data.empty()) cfg.data_dir = o.data;
  if (o.port) cfg.port = *o.port;
  if (!o.web.empty()) cfg.web_dir = o.web;
  if (!o.transcript.empty()) cfg.transcript = o.transcript;

  auto service = ChatService::from_config(cfg);
  HttpServer server(*service, cfg.web_dir);
  const int port = server.bind(cfg.host, cfg.port);
  if (o.json) {
    out << json{{"host", cfg.host}, {"port", port}}.dump() << '\n';
  } else {
    out << "listening on http://" << cfg.host << ':' << port << '\n';
  }
  out.flush();
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

void report_error(const Options& o, std::ostream& err, const std::string& kind,
                  const std::string& message) {
  if (o.json) {
    err << json{{"error", message}, {"kind", kind}}.dump() << '\n';
  } else {
    err << "sluj: " << message << '\n';
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  Options o;
  CLI::App app{"Joint intent detection and slot filling, plus scenario chat"};
  app.require_subcommand(1);
  app.add_flag("--json", o.json, "Line-delimited JSON output");

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--data", o.data, "Training set directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--dev", o.dev, "Dev set directory")->check(CLI::ExistingDirectory);
  train->add_option("--config", o.config, "key = value training config")->check(CLI::ExistingFile);
  train->add_option("--out", o.out, "Checkpoint to write")->required();
  train->add_option("--metrics", o.metrics, "Per-epoch JSONL (default <out>.metrics.jsonl)");
  train->add_option("--epochs", o.epochs, "Overrides the config");
  train->add_option("--seed", o.seed, "Overrides the config");
  train->add_option("--learning-rate", o.learning_rate, "Overrides the config");

  auto* eval = app.add_subcommand("eval", "Score a model or a prediction set");
  eval->add_option("--data", o.data, "Gold set directory")->required()->check(CLI::ExistingDirectory);
  auto* model_opt = eval->add_option("--model", o.model, "Checkpoint")->check(CLI::ExistingFile);
  auto* pred_opt = eval->add_option("--pred", o.pred, "Prediction set directory")
                       ->check(CLI::ExistingDirectory);
  model_opt->excludes(pred_opt);
  eval->add_option("--report", o.report_path, "Also write the table here");
  eval->add_option("--name", o.name, "Dataset column name (default: directory name)");

  auto* tag = app.add_subcommand("tag", "Print the intent and slot labels of a sentence");
  tag->add_option("--model", o.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  tag->add_option("--text", o.text, "Sentence")->required();

  auto* synth = app.add_subcommand("synth", "Write the synthetic corpus");
  synth->add_option("--seed", o.synth_seed, "Generator seed")->required();
  synth->add_option("--n", o.synth_n, "Number of examples")->required();
  synth->add_option("--out", o.out, "Output directory")->required();

  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--model", o.model, "Checkpoint for /api/nlu")->check(CLI::ExistingFile);
  serve->add_option("--port", o.port, "Port (0 picks a free one)");
  serve->add_option("--data", o.data, "Directory with catalogs/ and templates/")
      ->check(CLI::ExistingDirectory);
  serve->add_option("--config", o.service_config, "Service config file")->check(CLI::ExistingFile);
  serve->add_option("--web", o.web, "Static files to serve at /")->check(CLI::ExistingDirectory);
  serve->add_option("--transcript", o.transcript, "Append per-turn JSONL here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(o, err, "usage", e.what());
    if (!o.json) err << "Run with --help for usage.\n";
    return 2;
  }
  if (eval->parsed() && o.model.empty() && o.pred.empty()) {
    report_error(o, err, "usage", "eval needs --model or --pred");
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (tag->parsed()) return cmd_tag(o, out);
    if (synth->parsed()) return cmd_synth(o, out);
    if (serve->parsed()) return cmd_serve(o, out);
  } catch (const ConfigError& e) {
    report_error(o, err, "config", e.what());
  } catch (const IoError& e) {
    report_error(o, err, "io", e.what());
  } catch (const ParseError& e) {
    report_error(o, err, "parse", e.what());
  } catch (const FormatError& e) {
    report_error(o, err, "format", e.what());
  } catch (const std::exception& e) {
    report_error(o, err, "error", e.what());
  }
  return 1;
}

}  // namespace sluj
