#include <cmath>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "sluj/errors.h"
#include "sluj/model.h"
#include "test_util.h"

namespace sluj {
namespace {

using testing::check_gradients;
using testing::kFdTolerance;

ModelConfig tiny_config() {
  ModelConfig m;
  m.word_dim = 4;
  m.char_embedding_dim = 3;
  m.char_hidden_dim = 2;
  m.attention_dim = 3;
  m.hidden_dim = 3;
  m.intent_hidden_dim = 4;
  m.heads = 2;
  m.window = 3;
  return m;
}

JointModel tiny_model(const std::vector<Example>& data, uint64_t seed) {
  Vocabularies v = build_vocab(data);
  PriorMask mask = build_prior_mask(data, v.intents, v.slots, 1e-3);
  return JointModel::init(v, mask, tiny_config(), seed);
}

std::vector<std::vector<double>> snapshot(const JointModel& m) {
  std::vector<std::vector<double>> out;
  for (const Tensor& t : m.parameters()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

TEST_SUITE("model") {

TEST_CASE("config text parsing") {
  TrainConfig c = parse_train_config(
      "# comment\nword_dim = 8\n\nlearning_rate=0.01  # trailing\nwindow = 3\n");
  CHECK(c.model.word_dim == 8);
  CHECK(c.learning_rate == 0.01);
  CHECK(c.model.window == 3);
  CHECK(c.model.half_width() == 1);
  CHECK(c.epochs == TrainConfig{}.epochs);
  CHECK_THROWS_AS(parse_train_config("colour = red\n"), ConfigError);
  CHECK_THROWS_AS(parse_train_config("epochs = -3\n"), ConfigError);
  CHECK_THROWS_AS(parse_train_config("learning_rate = fast\n"), ConfigError);
  CHECK_THROWS_AS(parse_train_config("just words\n"), ConfigError);
  CHECK_THROWS_AS(parse_train_config("window = 4\n"), ConfigError);
  CHECK(parse_train_config("attention_init_scale = 0.01\n").model.attention_init_scale == 0.01);
  CHECK_THROWS_AS(parse_train_config("attention_init_scale = 0\n"), ConfigError);
  CHECK_NOTHROW(load_train_config(testing::source_dir() / "config" / "train.conf"));
  CHECK_THROWS_AS(load_train_config("/nonexistent/train.conf"), IoError);
}

TEST_CASE("forward shapes and prediction") {
  auto data = load_dataset(testing::test_data_dir() / "atis_tiny");
  JointModel m = tiny_model(data, 3);
  auto out = m.forward(data[0]);
  CHECK(out.intent_probs.shape() == Shape{1, m.vocab().intents.size()});
  CHECK(out.lattice.emissions.shape() == Shape{6, m.vocab().slots.size()});
  CHECK(out.lattice.transitions.shape() ==
        Shape{m.vocab().slots.size() + 2, m.vocab().slots.size() + 2});
  Prediction p = m.predict(data[0]);
  CHECK(p.slots.size() == 6);
  CHECK(m.vocab().intents.find(p.intent).has_value());
  double total = 0;
  for (double v : p.intent_probs) total += v;
  CHECK(total == doctest::Approx(1.0));
  // Unseen words and a single token still decode.
  CHECK(m.predict_tokens({"Zyzzyva"}).slots.size() == 1);
  CHECK_THROWS_AS(m.predict_tokens({}), ContractError);
  CHECK(m.loss(out, data[0]).item() > 0.0);
}

TEST_CASE("joint loss is the sum of both terms") {
  auto data = load_dataset(testing::test_data_dir() / "atis_tiny");
  JointModel m = tiny_model(data, 4);
  const Example& ex = data[1];
  auto out = m.forward(ex);
  std::vector<size_t> tags;
  for (const auto& s : ex.slots) tags.push_back(m.vocab().slots.encode(s));
  const size_t intent = m.vocab().intents.encode(ex.intent);
  const double expected = intent_loss(out.intent_probs, intent).item() +
                          crf_nll(out.lattice, tags).item();
  CHECK(joint_loss(out.intent_probs, out.lattice, intent, tags).item() ==
        doctest::Approx(expected).epsilon(1e-12));
  CHECK(m.loss(out, ex).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("full model gradient matches central differences") {
  auto data = load_dataset(testing::test_data_dir() / "atis_tiny");
  for (uint64_t seed : {1, 2}) {
    JointModel m = tiny_model(data, seed);
    const Example& ex = data[seed];
    auto g = check_gradients([&] { return m.loss(m.forward(ex), ex); },
                             m.named_parameters());
    INFO(g.worst);
    CHECK(g.max_error < kFdTolerance);
  }
}

TEST_CASE("every parameter tensor receives gradient") {
  auto data = load_dataset(testing::test_data_dir() / "atis_tiny");
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    JointModel m = tiny_model(data, seed);
    for (const Tensor& t : m.parameters()) t.zero_grad();
    {
      Tape tape;
      Tensor total;
      for (const Example& ex : data) {
        Tensor l = m.loss(m.forward(ex), ex);
        total = total.defined() ? add(total, l) : l;
      }
      tape.backward(total);
    }
    for (const auto& [name, t] : m.named_parameters()) {
      double mag = 0;
      for (double g : t.grad()) mag += std::abs(g);
      INFO(name);
      CHECK(mag > 0.0);
    }
  }
}

TEST_CASE("parameter names are unique") {
  auto data = load_dataset(testing::test_data_dir() / "atis_tiny");
  auto named = tiny_model(data, 1).named_parameters();
  std::set<std::string> names;
  for (const auto& [name, t] : named) names.insert(name);
  CHECK(names.size() == named.size());
}

TEST_CASE("training is deterministic") {
  auto data = load_dataset(testing::test_data_dir() / "atis_tiny");
  TrainConfig cfg;
  cfg.model = tiny_config();
  cfg.epochs = 3;
  cfg.seed = 5;
  auto a = train(data, cfg);
  auto b = train(data, cfg);
  CHECK(snapshot(a.model) == snapshot(b.model));
  CHECK(a.history.size() == 3);
  CHECK(a.history[0].loss == b.history[0].loss);
  cfg.seed = 6;
  CHECK(snapshot(train(data, cfg).model) != snapshot(a.model));
}

TEST_CASE("zero learning rate leaves parameters at their initial values") {
  auto data = load_dataset(testing::test_data_dir() / "atis_tiny");
  TrainConfig cfg;
  cfg.model = tiny_config();
  cfg.epochs = 2;
  cfg.seed = 8;
  cfg.learning_rate = 0.0;
  auto r = train(data, cfg);
  CHECK(snapshot(r.model) == snapshot(tiny_model(data, 8)));
}

TEST_CASE("training reduces the loss on a tiny corpus") {
  auto data = load_dataset(testing::test_data_dir() / "atis_tiny");
  TrainConfig cfg;
  cfg.model = tiny_config();
  cfg.epochs = 15;
  cfg.learning_rate = 0.01;
  auto r = train(data, cfg);
  CHECK(r.history.back().loss < r.history.front().loss);
}

TEST_CASE("synthetic corpus loss is non-increasing in at least 95% of epochs") {
  auto data = synth_generate(7, 30);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.learning_rate = 1e-3;
  // One step per epoch, so each reported loss is the full-corpus loss at the
  // previous epoch's parameters. Per-example steps are too noisy for this.
  cfg.batch_size = data.size();
  auto r = train(data, cfg);
  size_t steps = 0, down = 0;
  for (size_t e = 1; e < r.history.size(); ++e) {
    ++steps;
    if (r.history[e].loss <= r.history[e - 1].loss) ++down;
  }
  INFO(down, "/", steps);
  CHECK(down * 100 >= steps * 95);
}

TEST_CASE("dev selection, early stopping and callbacks") {
  auto data = load_dataset(testing::test_data_dir() / "atis_tiny");
  TrainConfig cfg;
  cfg.model = tiny_config();
  cfg.epochs = 6;
  cfg.patience = 2;
  auto r = train(data, cfg, data);
  CHECK(r.best_epoch >= 1);
  CHECK(r.best_epoch <= r.history.size());
  for (const auto& h : r.history) CHECK(h.dev_f1.has_value());
  // The returned parameters are those of the best epoch.
  auto e = evaluate_model(r.model, data);
  CHECK(e.slots.f1 == doctest::Approx(*r.history[r.best_epoch - 1].dev_f1));

  size_t calls = 0;
  auto stopped = train(data, cfg, {}, [&](const EpochMetrics& m, const JointModel&) {
    ++calls;
    return m.epoch < 2;
  });
  CHECK(calls == 2);
  CHECK(stopped.history.size() == 2);
}

TEST_CASE("training errors") {
  TrainConfig cfg;
  cfg.model = tiny_config();
  CHECK_THROWS_AS(train(std::vector<Example>{}, cfg), ContractError);
  auto data = load_dataset(testing::test_data_dir() / "atis_tiny");
  cfg.learning_rate = 1e12;
  cfg.clip_norm = 1e300;
  cfg.epochs = 50;
  try {
    train(data, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(train(data, cfg), ConfigError);
}

TEST_CASE("metrics lines are JSON") {
  EpochMetrics m;
  m.epoch = 3;
  m.loss = 1.5;
  auto j = nlohmann::json::parse(metrics_line(m));
  CHECK(j["epoch"] == 3);
  CHECK(j["loss"] == 1.5);
  CHECK(j["dev_f1"].is_null());
  m.dev_f1 = 0.5;
  CHECK(nlohmann::json::parse(metrics_line(m))["dev_f1"] == 0.5);
}

TEST_CASE("adam clips by global norm") {
  Tensor p = Tensor::parameter(1, 2, {0.0, 0.0});
  Adam opt({p}, 0.1, 0.9, 0.999, 1e-8);
  p.mutable_grad()[0] = 30.0;
  p.mutable_grad()[1] = -40.0;
  CHECK(opt.step(5.0) == doctest::Approx(50.0));
  // The first Adam step moves each coordinate by about lr against its gradient.
  CHECK(p.values()[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.values()[1] == doctest::Approx(0.1).epsilon(1e-6));
  opt.zero_grad();
  CHECK(p.grad()[0] == 0.0);
}

}  // TEST_SUITE
}  // namespace
}  // namespace sluj
