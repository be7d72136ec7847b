// Acceptance run: one PASS/FAIL line per criterion, INFO lines for
// measurements without a threshold. Exits non-zero when any criterion fails.

#include <unistd.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sluj/corpus.h"
#include "sluj/crf.h"
#include "sluj/errors.h"
#include "sluj/heads.h"
#include "sluj/layers.h"
#include "sluj/model.h"
#include "sluj/service.h"
#include "test_util.h"
#include "trace.h"

namespace sluj {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

int g_failures = 0;

void verdict(bool ok, const std::string& name, const std::string& detail) {
  if (!ok) ++g_failures;
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

void info(const std::string& name, const std::string& detail) {
  std::cout << "INFO " << name << ": " << detail << std::endl;
}

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Runs a check and turns an unexpected exception into a failure line.
void guarded(const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    verdict(false, name, std::string("threw: ") + e.what());
  }
}

struct Shell {
  int code;
  std::string out;
};

Shell shell(const std::string& command) {
  Shell r{-1, {}};
  FILE* p = popen((command + " 2>&1").c_str(), "r");
  if (!p) return r;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  r.code = pclose(p);
  return r;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

// ---------------------------------------------------------------------------

void gradients() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string where;
  size_t checked = 0;
  auto record = [&](const std::string& what, const testing::GradCheck& g) {
    checked += g.checked;
    if (g.max_error > worst || std::isnan(g.max_error)) {
      worst = g.max_error;
      where = what + " " + g.worst;
    }
  };
  using testing::random_const;
  using testing::random_param;

  const auto data = synth_generate(3, 12);
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto readout = [&](size_t r, size_t c) { return random_const(r, c, rng); };

    LstmCell f = LstmCell::init(3, 2, rng), b = LstmCell::init(3, 2, rng);
    Tensor x = random_param(3, 3, rng);
    Tensor r1 = readout(3, 4);
    record("bilstm", testing::check_gradients(
                         [&] { return sum(mul(bilstm(x, f, b), r1)); },
                         {{"x", x}, {"wx", f.input_weights}, {"wh", f.recurrent_weights},
                          {"b", f.bias}, {"bwx", b.input_weights}}));

    Vocabulary chars = Vocabulary::with_reserved();
    for (const char* c : {"a", "b"}) chars.add(c);
    CharEncoder enc = CharEncoder::init(chars.size(), 2, 2, rng);
    Tensor r2 = readout(1, 4);
    record("char_embed", testing::check_gradients(
                             [&] { return sum(mul(char_embed("abba", chars, enc), r2)); },
                             {{"table", enc.table}, {"fwd", enc.forward.input_weights},
                              {"bwd", enc.backward.recurrent_weights}}));

    LocalAttentionHead h1 = LocalAttentionHead::init(3, 4, 2, rng);
    LocalAttentionHead h2 = LocalAttentionHead::init(3, 4, 2, rng);
    Tensor r3 = readout(3, 6);
    record("attention", testing::check_gradients(
                            [&] { return sum(mul(mh_local_attention(x, {h1, h2}), r3)); },
                            {{"x", x}, {"w1", h1.score}, {"w2", h1.projection},
                             {"w1b", h2.score}, {"w2b", h2.projection}}));

    IntentHead head = IntentHead::init(4, {3}, 3, rng);
    Tensor s = random_param(1, 4, rng);
    std::vector<std::pair<std::string, Tensor>> hp = {{"summary", s}};
    for (const Tensor& t : head.parameters()) hp.emplace_back("head", t);
    record("intent", testing::check_gradients(
                         [&] { return intent_loss(intent_forward(s, head), 1); }, hp));

    PriorMask mask{random_const(4, 3, rng), 0.0};
    Tensor y = random_param(1, 3, rng), ctx = random_param(3, 2, rng);
    Tensor r4 = readout(3, 6);
    record("mask_gate", testing::check_gradients(
                            [&] { return sum(mul(mask_gate(y, mask, ctx), r4)); },
                            {{"y", y}, {"ctx", ctx}}));

    Tensor p = random_param(3, 4, rng), a = random_param(6, 6, rng);
    const std::vector<size_t> gold = {1, 3, 0};
    record("crf", testing::check_gradients([&] { return crf_nll(Lattice{p, a}, gold); },
                                           {{"P", p}, {"A", a}}));

    // Full joint loss on a three-token example.
    Vocabularies v = build_vocab(data);
    PriorMask pm = build_prior_mask(data, v.intents, v.slots, 1e-3);
    ModelConfig mc;
    mc.word_dim = 4;
    mc.char_embedding_dim = 3;
    mc.char_hidden_dim = 2;
    mc.attention_dim = 3;
    mc.hidden_dim = 3;
    mc.intent_hidden_dim = 4;
    JointModel m = JointModel::init(v, pm, mc, seed);
    Example ex = data[seed % data.size()];
    ex.raw_tokens.resize(3);
    ex.tokens.resize(3);
    ex.slots.resize(3);
    record("joint", testing::check_gradients([&] { return m.loss(m.forward(ex), ex); },
                                             m.named_parameters()));
  }
  const double secs = seconds_since(start);
  verdict(worst < testing::kFdTolerance && secs < 60.0, "gradients",
          "max relative error " + fmt("%.3g", worst) + " over " + std::to_string(checked) +
              " entries, 5 seeds, " + fmt("%.1f", secs) + " s (worst: " + where + ")");
}

// ---------------------------------------------------------------------------

void crf_oracle() {
  const auto start = Clock::now();
  Rng rng(2024);
  double z_err = 0, v_err = 0, mass_err = 0;
  bool paths_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 1 + rng.index(5), t = 2 + rng.index(3);
    Lattice l{testing::random_const(n, t, rng, 2.0),
              testing::random_const(t + 2, t + 2, rng, 2.0)};
    std::vector<double> scores;
    std::vector<size_t> y(n, 0);
    double best = -std::numeric_limits<double>::infinity();
    while (true) {
      double s = l.transitions.at(t, y[0]) + l.transitions.at(y[n - 1], t + 1);
      for (size_t k = 0; k < n; ++k) {
        s += l.emissions.at(k, y[k]);
        if (k > 0) s += l.transitions.at(y[k - 1], y[k]);
      }
      scores.push_back(s);
      best = std::max(best, s);
      size_t k = n;
      while (k > 0 && ++y[k - 1] == t) y[--k] = 0;
      if (k == 0) break;
    }
    double total = 0;
    for (double s : scores) total += std::exp(s - best);
    const double logz_enum = best + std::log(total);
    const double logz = log_partition(l).item();
    z_err = std::max(z_err, std::abs(logz - logz_enum));
    double mass = 0;
    for (double s : scores) mass += std::exp(s - logz);
    mass_err = std::max(mass_err, std::abs(mass - 1.0));
    TagPath v = viterbi(l);
    v_err = std::max(v_err, std::abs(v.score - best));
    paths_ok = paths_ok && std::abs(sequence_score(l, v.tags).item() - best) <= 1e-9;
  }
  const double secs = seconds_since(start);
  verdict(z_err <= 1e-6 && v_err <= 1e-9 && mass_err <= 1e-6 && paths_ok && secs < 30,
          "crf_oracle",
          "200 lattices, |logZ diff| " + fmt("%.2g", z_err) + ", |viterbi diff| " +
              fmt("%.2g", v_err) + ", |mass - 1| " + fmt("%.2g", mass_err) +
              (paths_ok ? ", paths attain the max" : ", a path misses the max") + ", " +
              fmt("%.2f", secs) + " s");
}

// ---------------------------------------------------------------------------

// Random corpus: random intents and BIO labels over a small pool.
std::vector<Example> random_corpus(Rng& rng) {
  const char* intents[] = {"a", "b", "c", "d"};
  const char* slots[] = {"x", "y", "z"};
  std::vector<Example> out;
  const size_t n = 1 + rng.index(20);
  for (size_t i = 0; i < n; ++i) {
    Example e;
    const size_t len = 1 + rng.index(8);
    for (size_t k = 0; k < len; ++k) {
      e.raw_tokens.push_back("w" + std::to_string(rng.index(10)));
      e.tokens.push_back(e.raw_tokens.back());
      const size_t r = rng.index(7);
      e.slots.push_back(r < 3 ? std::string("O")
                              : std::string(r % 2 ? "B-" : "I-") + slots[r % 3]);
    }
    e.intent = intents[rng.index(4)];
    out.push_back(std::move(e));
  }
  return out;
}

void prior_mask() {
  Rng rng(77);
  double worst_sum = 0, min_entry = 1;
  for (int trial = 0; trial < 100; ++trial) {
    auto data = random_corpus(rng);
    Vocabularies v = build_vocab(data);
    const double eps = std::pow(10.0, -1.0 - 5.0 * rng.uniform());
    PriorMask m = build_prior_mask(data, v.intents, v.slots, eps);
    for (size_t i = 0; i < m.num_intents(); ++i) {
      double total = 0;
      for (size_t s = 0; s < m.num_slots(); ++s) {
        total += m.at(s, i);
        min_entry = std::min(min_entry, m.at(s, i));
      }
      worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    }
  }
  verdict(worst_sum <= 1e-9 && min_entry > 0, "prior_mask",
          "100 random corpora, max |column sum - 1| " + fmt("%.2g", worst_sum) +
              ", smallest entry " + fmt("%.3g", min_entry));
}

// ---------------------------------------------------------------------------

void locality() {
  Rng rng(99);
  int held = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const size_t w = 1 + rng.index(3), n = 1 + rng.index(12);
    Vocabulary words = Vocabulary::with_reserved(), chars = Vocabulary::with_reserved();
    for (int i = 0; i < 12; ++i) words.add("t" + std::to_string(i));
    for (const char* c : {"t", "0", "1", "2", "3", "4", "5", "6", "7", "8", "9"}) chars.add(c);
    Tensor table = glorot(words.size(), 6, rng);
    CharEncoder enc = CharEncoder::init(chars.size(), 3, 2, rng);
    std::vector<LocalAttentionHead> heads;
    for (size_t h = 0; h < 1 + rng.index(3); ++h) {
      heads.push_back(LocalAttentionHead::init(10, 5, w, rng));
    }
    std::vector<std::string> tokens;
    for (size_t i = 0; i < n; ++i) tokens.push_back("t" + std::to_string(rng.index(12)));
    const size_t k = rng.index(n);
    std::vector<std::string> changed = tokens;
    for (size_t i = 0; i < n; ++i) {
      if (i + w < k || i > k + w) changed[i] = "t" + std::to_string(rng.index(12)) + "9";
    }
    auto out = [&](const std::vector<std::string>& t) {
      return mh_local_attention(embed_tokens(make_example(t), words, chars, table, enc), heads);
    };
    Tensor a = out(tokens), b = out(changed);
    bool same = true;
    for (size_t j = 0; j < a.cols(); ++j) {
      same = same && std::bit_cast<uint64_t>(a.at(k, j)) == std::bit_cast<uint64_t>(b.at(k, j));
    }
    held += same;
  }
  verdict(held == 50, "locality",
          std::to_string(held) + "/50 trials bitwise unchanged outside [k-w, k+w]");
}

// ---------------------------------------------------------------------------

TrainConfig overfit_config() {
  return load_train_config(testing::source_dir() / "config" / "overfit.conf");
}

struct OverfitRun {
  size_t epoch = 0;  // 0: not reached
  double best_f1 = 0;
  double secs = 0;
};

OverfitRun overfit(const std::vector<Example>& data, TrainConfig cfg) {
  OverfitRun run;
  const auto start = Clock::now();
  train(data, cfg, {}, [&](const EpochMetrics& m, const JointModel& model) {
    EvalResult e = evaluate_model(model, data);
    if (e.intent_accuracy == 1.0) run.best_f1 = std::max(run.best_f1, e.slots.f1);
    if (e.intent_accuracy == 1.0 && e.slots.f1 >= 0.99) {
      run.epoch = m.epoch;
      return false;
    }
    return true;
  });
  run.secs = seconds_since(start);
  return run;
}

void synthetic_overfit() {
  const auto data = synth_generate(7, 30);
  std::set<std::string> intents, labels;
  for (const auto& e : data) {
    intents.insert(e.intent);
    labels.insert(e.slots.begin(), e.slots.end());
  }
  TrainConfig cfg = overfit_config();
  OverfitRun r = overfit(data, cfg);
  const bool ok = intents.size() == 3 && labels.size() == 6 && r.epoch > 0 &&
                  r.epoch <= 300 && r.secs < 300;
  verdict(ok, "synthetic_overfit",
          "corpus seed 7 (" + std::to_string(intents.size()) + " intents, " +
              std::to_string(labels.size()) + " slot labels), train seed " +
              std::to_string(cfg.seed) + ", lr " + fmt("%g", cfg.learning_rate) +
              ", attention init scale " + fmt("%g", cfg.model.attention_init_scale) + ": " +
              (r.epoch ? "intent acc 1 and slot F1 >= 0.99 at epoch " + std::to_string(r.epoch)
                       : "not reached in 300 epochs, best F1 " + fmt("%.4f", r.best_f1)) +
              ", " + fmt("%.1f", r.secs) + " s");

  // Other initialization seeds, reported without a threshold.
  for (uint64_t seed : {2, 3}) {
    cfg.seed = seed;
    OverfitRun other = overfit(data, cfg);
    info("synthetic_overfit_seed" + std::to_string(seed),
         other.epoch ? "reached at epoch " + std::to_string(other.epoch)
                     : "not reached in 300 epochs, best F1 " + fmt("%.4f", other.best_f1));
  }
}

// ---------------------------------------------------------------------------

void tagging(const fs::path& work) {
  const fs::path cli = SLUJ_CLI;
  const fs::path model = work / "tagging.bin";
  const auto start = Clock::now();
  Shell t = shell(quote(cli) + " train --data " + quote(testing::test_data_dir() / "atis_tiny") +
                  " --config " + quote(testing::source_dir() / "config" / "overfit.conf") +
                  " --epochs 150 --out " + quote(model) + " --metrics " +
                  quote(work / "tagging.jsonl"));
  if (t.code != 0) {
    verdict(false, "tagging", "training failed: " + t.out);
    return;
  }
  Shell tag = shell(quote(cli) + " tag --model " + quote(model) +
                    " --text 'all flights from boston to washington'");
  const std::string expected =
      "intent\tflight\n"
      "all\tO\n"
      "flights\tO\n"
      "from\tO\n"
      "boston\tB-fromloc.city_name\n"
      "to\tO\n"
      "washington\tB-toloc.city_name\n";
  std::string shown = tag.out;
  for (auto& c : shown) c = c == '\n' ? ' ' : c == '\t' ? '/' : c;
  verdict(tag.code == 0 && tag.out == expected, "tagging",
          "sluj tag after 150 epochs on the 8-sentence corpus -> " + shown + "(" +
              fmt("%.1f", seconds_since(start)) + " s)");
}

// ---------------------------------------------------------------------------

void atis_eval(const fs::path& work) {
  const char* dir = std::getenv("SLUJ_ATIS_DIR");
  if (!dir) {
    info("atis_eval", "skipped; set SLUJ_ATIS_DIR to a directory with train/ and test/ "
                   "in seq.in/seq.out/label format for a 10-epoch run");
    return;
  }
  const fs::path cli = SLUJ_CLI;
  const fs::path model = work / "atis.bin";
  Shell t = shell(quote(cli) + " train --data " + quote(fs::path(dir) / "train") +
                  " --config " + quote(testing::source_dir() / "config" / "train.conf") +
                  " --epochs 10 --out " + quote(model));
  if (t.code != 0) {
    info("atis_eval", "training failed: " + t.out);
    return;
  }
  Shell e = shell(quote(cli) + " eval --name ATIS --data " + quote(fs::path(dir) / "test") +
                  " --model " + quote(model));
  info("atis_eval", "10-epoch default config, no threshold:\n" + e.out);
}

// ---------------------------------------------------------------------------

void dst_trace(const fs::path& work) {
  json a = testing::run_shopping_trace(work / "a.jsonl");
  json b = testing::run_shopping_trace(work / "b.jsonl");
  std::vector<std::string> actions;
  std::set<std::string> acts;
  for (const auto& t : a["turns"]) {
    actions.push_back(t["reply"]["action"]);
    acts.insert(t["reply"]["nlu"]["intent"].get<std::string>());
  }
  const auto expected = testing::expected_trace_actions(testing::kTraceSeed);
  const std::string ta = testing::read_file(work / "a.jsonl");
  const bool same_log = !ta.empty() && ta == testing::read_file(work / "b.jsonl");
  const bool fixture = json::parse(testing::read_file(testing::trace_fixture())) == a;
  std::string trace;
  for (const auto& s : actions) trace += (trace.empty() ? "" : " > ") + s;
  verdict(actions == expected && acts.size() == 7 && same_log && fixture && a == b,
          "dst_trace",
          "seed " + std::to_string(testing::kTraceSeed) + ": " + trace + "; " +
              std::to_string(acts.size()) + "/7 user acts; transcripts " +
              (same_log ? "byte-identical" : "differ") + "; fixture " +
              (fixture ? "matches" : "differs"));
}

// ---------------------------------------------------------------------------

void checkpoint(const fs::path& work) {
  const auto data = synth_generate(5, 20);
  TrainConfig cfg = overfit_config();
  cfg.epochs = 2;
  JointModel m = train(data, cfg).model;
  m.save(work / "ckpt.bin");
  JointModel back = JointModel::load(work / "ckpt.bin");
  auto pa = m.named_parameters(), pb = back.named_parameters();
  size_t values = 0, equal = 0;
  bool names = pa.size() == pb.size();
  for (size_t i = 0; names && i < pa.size(); ++i) {
    names = pa[i].first == pb[i].first && pa[i].second.shape() == pb[i].second.shape();
    for (size_t j = 0; names && j < pa[i].second.values().size(); ++j) {
      ++values;
      equal += std::bit_cast<uint64_t>(pa[i].second.values()[j]) ==
               std::bit_cast<uint64_t>(pb[i].second.values()[j]);
    }
  }
  size_t same_pred = 0;
  for (const auto& e : data) {
    Prediction p = m.predict(e), q = back.predict(e);
    same_pred += p.slots == q.slots && p.intent == q.intent && p.intent_probs == q.intent_probs;
  }
  verdict(names && equal == values && same_pred == data.size(), "checkpoint",
          std::to_string(equal) + "/" + std::to_string(values) + " parameters bitwise equal, " +
              std::to_string(same_pred) + "/" + std::to_string(data.size()) +
              " predictions identical");
}

// ---------------------------------------------------------------------------

void primary_only() {
  // The service runs dialogs from rules alone: no model, no web client.
  auto o = testing::fixed_options();
  ChatService svc(std::move(o));
  HttpReply nlu = svc.handle("POST", "/api/nlu", R"({"text": "hi"})");
  json trace = testing::run_shopping_trace();
  bool web = false;
  for (const auto& entry : fs::recursive_directory_iterator(testing::source_dir() / "src")) {
    web = web || entry.path().string().find("webchat") != std::string::npos;
  }
  verdict(nlu.status == 503 && trace["turns"].size() == 10 && !web, "primary_only",
          "rule NLU drives the full dialog without a model (/api/nlu answers " +
              std::to_string(nlu.status) + "); no web client sources are built");
}

}  // namespace
}  // namespace sluj

int main() {
  using namespace sluj;
  const fs::path work = fs::temp_directory_path() / ("sluj-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(work);
  guarded("gradients", gradients);
  guarded("crf_oracle", crf_oracle);
  guarded("prior_mask", prior_mask);
  guarded("locality", locality);
  guarded("synthetic_overfit", synthetic_overfit);
  guarded("tagging", [&] { tagging(work); });
  guarded("atis_eval", [&] { atis_eval(work); });
  guarded("dst_trace", [&] { dst_trace(work); });
  guarded("checkpoint", [&] { checkpoint(work); });
  guarded("primary_only", primary_only);
  std::error_code ec;
  fs::remove_all(work, ec);
  std::cout << (g_failures ? "FAILED " : "ALL PASSED ") << g_failures << " failure(s)"
            << std::endl;
  return g_failures ? 1 : 0;
}
