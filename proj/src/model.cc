#include "sluj/model.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "sluj/errors.h"
#include "sluj/random.h"

namespace sluj {

// --- Configuration -------------------------------------------------------

void validate_config(const TrainConfig& cfg) {
  const ModelConfig& m = cfg.model;
  auto positive = [](size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(m.word_dim, "word_dim");
  positive(m.char_embedding_dim, "char_embedding_dim");
  positive(m.char_hidden_dim, "char_hidden_dim");
  positive(m.attention_dim, "attention_dim");
  positive(m.hidden_dim, "hidden_dim");
  positive(m.heads, "heads");
  positive(m.window, "window");
  positive(cfg.epochs, "epochs");
  positive(cfg.batch_size, "batch_size");
  positive(cfg.min_count, "min_count");
  if (m.window % 2 == 0) throw ConfigError("window must be odd");
  if (!(m.mask_eps >= 0)) throw ConfigError("mask_eps must be >= 0");
  if (!(m.attention_init_scale > 0)) {
    throw ConfigError("attention_init_scale must be positive");
  }
  if (!(cfg.learning_rate >= 0)) throw ConfigError("learning_rate must be >= 0");
  if (!(cfg.clip_norm > 0)) throw ConfigError("clip_norm must be positive");
  if (!(cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(cfg.adam_eps > 0)) throw ConfigError("adam_eps must be positive");
}

namespace {

size_t to_size(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    long long v = std::stoll(value, &pos);
    if (pos != value.size() || v < 0) throw std::invalid_argument(value);
    return static_cast<size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs a non-negative integer, got '" +
                      value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' needs a number, got '" + value + "'");
  }
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key,
                        const std::string& value) {
  ModelConfig& m = cfg.model;
  if (key == "word_dim") m.word_dim = to_size(key, value);
  else if (key == "char_embedding_dim") m.char_embedding_dim = to_size(key, value);
  else if (key == "char_hidden_dim") m.char_hidden_dim = to_size(key, value);
  else if (key == "attention_dim") m.attention_dim = to_size(key, value);
  else if (key == "hidden_dim") m.hidden_dim = to_size(key, value);
  else if (key == "intent_hidden_dim") m.intent_hidden_dim = to_size(key, value);
  else if (key == "heads") m.heads = to_size(key, value);
  else if (key == "window" || key == "attention_window") m.window = to_size(key, value);
  else if (key == "mask_eps") m.mask_eps = to_double(key, value);
  else if (key == "attention_init_scale") m.attention_init_scale = to_double(key, value);
  else if (key == "learning_rate") cfg.learning_rate = to_double(key, value);
  else if (key == "beta1") cfg.beta1 = to_double(key, value);
  else if (key == "beta2") cfg.beta2 = to_double(key, value);
  else if (key == "adam_eps") cfg.adam_eps = to_double(key, value);
  else if (key == "clip_norm") cfg.clip_norm = to_double(key, value);
  else if (key == "epochs") cfg.epochs = to_size(key, value);
  else if (key == "batch_size") cfg.batch_size = to_size(key, value);
  else if (key == "seed") cfg.seed = to_size(key, value);
  else if (key == "patience") cfg.patience = to_size(key, value);
  else if (key == "min_count") cfg.min_count = to_size(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
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
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate_config(cfg);
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_train_config(buf.str());
}

// --- Model ---------------------------------------------------------------

JointModel JointModel::init(Vocabularies vocab, PriorMask mask,
                            const ModelConfig& cfg, uint64_t seed) {
  if (cfg.window % 2 == 0) throw ConfigError("window must be odd");
  if (mask.num_slots() != vocab.slots.size() ||
      mask.num_intents() != vocab.intents.size()) {
    throw DimensionError("prior mask " + mask.matrix.shape().str() +
                         " does not match label vocabularies");
  }
  Rng rng(seed);
  JointModel m;
  m.config_ = cfg;
  const size_t w = cfg.half_width();
  const size_t embed_dim = cfg.word_dim + 2 * cfg.char_hidden_dim;
  const size_t encoded_dim = 2 * cfg.hidden_dim;
  const size_t num_slots = vocab.slots.size();

  m.word_table_ = glorot(vocab.words.size(), cfg.word_dim, rng);
  m.chars_ = CharEncoder::init(vocab.chars.size(), cfg.char_embedding_dim,
                               cfg.char_hidden_dim, rng);
  for (size_t h = 0; h < cfg.heads; ++h) {
    m.lower_heads_.push_back(
        LocalAttentionHead::init(embed_dim, cfg.attention_dim, w, rng,
                                 cfg.attention_init_scale));
  }
  m.encoder_forward_ = LstmCell::init(cfg.heads * embed_dim, cfg.hidden_dim, rng);
  m.encoder_backward_ = LstmCell::init(cfg.heads * embed_dim, cfg.hidden_dim, rng);
  for (size_t h = 0; h < cfg.heads; ++h) {
    m.upper_heads_.push_back(
        LocalAttentionHead::init(encoded_dim, cfg.attention_dim, w, rng,
                                 cfg.attention_init_scale));
  }
  std::vector<size_t> hidden;
  if (cfg.intent_hidden_dim > 0) hidden.push_back(cfg.intent_hidden_dim);
  m.intent_ = IntentHead::init(encoded_dim, hidden, vocab.intents.size(), rng);
  m.emission_ = DenseLayer::init(num_slots + cfg.heads * encoded_dim, num_slots, rng);
  m.transitions_ = glorot(num_slots + 2, num_slots + 2, rng);
  m.vocab_ = std::move(vocab);
  m.mask_ = std::move(mask);
  return m;
}

JointModel::Output JointModel::forward(const Example& example) const {
  Tensor embedded = embed_tokens(example, vocab_.words, vocab_.chars,
                                 word_table_, chars_);
  Tensor local = mh_local_attention(embedded, lower_heads_);
  Tensor encoded = bilstm(local, encoder_forward_, encoder_backward_);
  Tensor intent = intent_forward(sentence_summary(encoded), intent_);
  Tensor context = mh_local_attention(encoded, upper_heads_);
  Tensor gated = mask_gate(intent, mask_, context);
  return {intent, Lattice{emission_(gated), transitions_}};
}

Tensor joint_loss(const Tensor& intent_probs, const Lattice& lattice,
                  size_t gold_intent, std::span<const size_t> gold_tags) {
  return add(intent_loss(intent_probs, gold_intent), crf_nll(lattice, gold_tags));
}

Tensor JointModel::loss(const Output& out, const Example& example) const {
  validate_example(example);
  std::vector<size_t> tags;
  tags.reserve(example.slots.size());
  for (const auto& s : example.slots) tags.push_back(vocab_.slots.encode(s));
  return joint_loss(out.intent_probs, out.lattice,
                    vocab_.intents.encode(example.intent), tags);
}

Prediction JointModel::predict(const Example& example) const {
  Output out = forward(example);
  Prediction p;
  auto probs = out.intent_probs.values();
  p.intent_probs.assign(probs.begin(), probs.end());
  size_t best = 0;
  for (size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  p.intent = vocab_.intents.decode(best);
  p.path = viterbi(out.lattice);
  for (size_t t : p.path.tags) p.slots.push_back(vocab_.slots.decode(t));
  return p;
}

Prediction JointModel::predict_tokens(
    const std::vector<std::string>& raw_tokens) const {
  if (raw_tokens.empty()) throw ContractError("predict: no tokens");
  return predict(make_example(raw_tokens));
}

std::vector<std::pair<std::string, Tensor>> JointModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto cell = [&out](const std::string& prefix, const LstmCell& c) {
    out.emplace_back(prefix + ".input_weights", c.input_weights);
    out.emplace_back(prefix + ".recurrent_weights", c.recurrent_weights);
    out.emplace_back(prefix + ".bias", c.bias);
  };
  auto heads = [&out](const std::string& prefix,
                      const std::vector<LocalAttentionHead>& hs) {
    for (size_t h = 0; h < hs.size(); ++h) {
      const std::string p = prefix + "." + std::to_string(h);
      out.emplace_back(p + ".score", hs[h].score);
      out.emplace_back(p + ".projection", hs[h].projection);
    }
  };
  out.emplace_back("word_embedding", word_table_);
  out.emplace_back("char.embedding", chars_.table);
  cell("char.forward", chars_.forward);
  cell("char.backward", chars_.backward);
  heads("lower_attention", lower_heads_);
  cell("encoder.forward", encoder_forward_);
  cell("encoder.backward", encoder_backward_);
  heads("upper_attention", upper_heads_);
  for (size_t i = 0; i < intent_.hidden.size(); ++i) {
    const std::string p = "intent.hidden." + std::to_string(i);
    out.emplace_back(p + ".weights", intent_.hidden[i].weights);
    out.emplace_back(p + ".bias", intent_.hidden[i].bias);
  }
  out.emplace_back("intent.output.weights", intent_.output.weights);
  out.emplace_back("intent.output.bias", intent_.output.bias);
  out.emplace_back("emission.weights", emission_.weights);
  out.emplace_back("emission.bias", emission_.bias);
  out.emplace_back("transitions", transitions_);
  return out;
}

std::vector<Tensor> JointModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

JointModel JointModel::clone() const {
  JointModel c = *this;
  auto copy_cell = [](LstmCell& cell) {
    cell.input_weights = cell.input_weights.clone();
    cell.recurrent_weights = cell.recurrent_weights.clone();
    cell.bias = cell.bias.clone();
  };
  c.word_table_ = word_table_.clone();
  c.chars_.table = chars_.table.clone();
  copy_cell(c.chars_.forward);
  copy_cell(c.chars_.backward);
  for (auto& h : c.lower_heads_) {
    h.score = h.score.clone();
    h.projection = h.projection.clone();
  }
  copy_cell(c.encoder_forward_);
  copy_cell(c.encoder_backward_);
  for (auto& h : c.upper_heads_) {
    h.score = h.score.clone();
    h.projection = h.projection.clone();
  }
  for (auto& layer : c.intent_.hidden) {
    layer.weights = layer.weights.clone();
    layer.bias = layer.bias.clone();
  }
  c.intent_.output.weights = c.intent_.output.weights.clone();
  c.intent_.output.bias = c.intent_.output.bias.clone();
  c.emission_.weights = c.emission_.weights.clone();
  c.emission_.bias = c.emission_.bias.clone();
  c.transitions_ = transitions_.clone();
  c.mask_.matrix = mask_.matrix.clone();
  return c;
}

JointModel::Output forward_joint(const JointModel& model, const Example& example) {
  return model.forward(example);
}

EvalResult evaluate_model(const JointModel& model, std::span<const Example> data) {
  EvalResult r;
  std::vector<std::vector<std::string>> gold_slots, pred_slots;
  std::vector<std::string> gold_intents, pred_intents;
  for (const Example& ex : data) {
    Prediction p = model.predict(ex);
    gold_slots.push_back(ex.slots);
    pred_slots.push_back(p.slots);
    gold_intents.push_back(ex.intent);
    pred_intents.push_back(p.intent);
    r.predictions.push_back(std::move(p));
  }
  r.slots = slot_f1(gold_slots, pred_slots);
  if (!data.empty()) r.intent_accuracy = intent_accuracy(gold_intents, pred_intents);
  return r;
}

// --- Optimisation --------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double Adam::step(double clip_norm) {
  double sq = 0.0;
  for (Tensor& p : params_) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double factor = norm > clip_norm ? clip_norm / norm : 1.0;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto g = params_[i].grad();
    if (g.empty()) continue;
    auto w = params_[i].mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * factor;
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
  return norm;
}

// --- Training ------------------------------------------------------------

std::string metrics_line(const EpochMetrics& m) {
  nlohmann::json j;
  j["epoch"] = m.epoch;
  j["loss"] = m.loss;
  j["dev_f1"] = m.dev_f1 ? nlohmann::json(*m.dev_f1) : nlohmann::json(nullptr);
  j["dev_intent_acc"] = m.dev_intent_accuracy
                            ? nlohmann::json(*m.dev_intent_accuracy)
                            : nlohmann::json(nullptr);
  return j.dump();
}

TrainResult train(std::span<const Example> data, const TrainConfig& cfg,
                  std::span<const Example> dev, const EpochCallback& on_epoch) {
  if (data.empty()) throw ContractError("train: empty training set");
  validate_config(cfg);
  for (const Example& ex : data) validate_example(ex);

  Vocabularies vocab = build_vocab(data, cfg.min_count);
  PriorMask mask = build_prior_mask(data, vocab.intents, vocab.slots,
                                    cfg.model.mask_eps);
  TrainResult result;
  result.model = JointModel::init(std::move(vocab), std::move(mask), cfg.model,
                                  cfg.seed);
  JointModel& model = result.model;
  std::vector<Tensor> params = model.parameters();
  Adam opt(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);

  Rng order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<std::vector<double>> best_values;
  std::pair<double, double> best_key{-1.0, -1.0};
  size_t since_best = 0;

  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const size_t end = std::min(order.size(), b + cfg.batch_size);
      opt.zero_grad();
      Tape tape;
      Tensor batch_loss;
      for (size_t i = b; i < end; ++i) {
        const Example& ex = data[order[i]];
        Tensor l = model.loss(model.forward(ex), ex);
        batch_loss = batch_loss.defined() ? add(batch_loss, l) : l;
      }
      const double value = batch_loss.item();
      if (!std::isfinite(value)) {
        throw TrainingError("training diverged: loss is not finite in epoch " +
                            std::to_string(epoch));
      }
      total += value;
      tape.backward(scale(batch_loss, 1.0 / static_cast<double>(end - b)));
      opt.step(cfg.clip_norm);
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.loss = total / static_cast<double>(data.size());
    if (!dev.empty()) {
      EvalResult r = evaluate_model(model, dev);
      metrics.dev_f1 = r.slots.f1;
      metrics.dev_intent_accuracy = r.intent_accuracy;
      std::pair<double, double> key{r.slots.f1, r.intent_accuracy};
      if (key > best_key) {
        best_key = key;
        result.best_epoch = epoch;
        since_best = 0;
        best_values.clear();
        for (const Tensor& p : params) {
          best_values.emplace_back(p.values().begin(), p.values().end());
        }
      } else {
        ++since_best;
      }
    } else {
      result.best_epoch = epoch;
    }
    result.history.push_back(metrics);
    if (on_epoch && !on_epoch(metrics, model)) break;
    if (cfg.patience > 0 && !dev.empty() && since_best >= cfg.patience) break;
  }

  if (!best_values.empty()) {
    for (size_t i = 0; i < params.size(); ++i) {
      auto w = params[i].mutable_values();
      std::copy(best_values[i].begin(), best_values[i].end(), w.begin());
    }
  }
  return result;
}

}  // namespace sluj
