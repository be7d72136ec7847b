#ifndef SLUJ_MODEL_H_
#define SLUJ_MODEL_H_

// The joint intent / slot model.
//
//   tokens -> [word emb | char BiLSTM] -> local attention -> BiLSTM
//          -> intent head (softmax over intents)
//          -> local attention -> [P(slot | intent) y, context] -> linear
//          -> CRF over slot tags
//
// Training minimises intent cross-entropy + CRF negative log-likelihood.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sluj/corpus.h"
#include "sluj/crf.h"
#include "sluj/eval.h"
#include "sluj/heads.h"
#include "sluj/layers.h"
#include "sluj/tensor.h"

namespace sluj {

struct ModelConfig {
  size_t word_dim = 64;
  size_t char_embedding_dim = 16;
  size_t char_hidden_dim = 16;  // per direction
  size_t attention_dim = 64;
  size_t hidden_dim = 64;       // encoder, per direction
  size_t intent_hidden_dim = 64;
  size_t heads = 2;
  size_t window = 5;            // total attention width, odd
  double mask_eps = 1e-3;
  // Multiplies the Glorot init of every attention score vector.
  double attention_init_scale = 1.0;

  size_t half_width() const { return window / 2; }
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  size_t epochs = 30;
  size_t batch_size = 1;
  uint64_t seed = 1;
  size_t patience = 0;  // 0 disables early stopping
  size_t min_count = 1;
};

// Throws ConfigError on zero dimensions, an even window and the like.
void validate_config(const TrainConfig& cfg);

// Flat `key = value` text; '#' starts a comment. Keys are the TrainConfig
// and ModelConfig field names. Unknown keys are a ConfigError.
void apply_config_entry(TrainConfig& cfg, const std::string& key,
                        const std::string& value);
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

struct Prediction {
  std::string intent;
  std::vector<double> intent_probs;  // indexed like the intent vocabulary
  std::vector<std::string> slots;
  TagPath path;
};

class JointModel {
 public:
  struct Output {
    Tensor intent_probs;  // 1 x |intents|
    Lattice lattice;      // n x |slots| emissions
  };

  JointModel() = default;

  // Fresh parameters drawn from `seed`.
  static JointModel init(Vocabularies vocab, PriorMask mask,
                         const ModelConfig& cfg, uint64_t seed);

  Output forward(const Example& example) const;
  // Intent loss + CRF loss. Needs gold intent and slots.
  Tensor loss(const Output& out, const Example& example) const;
  Prediction predict(const Example& example) const;
  Prediction predict_tokens(const std::vector<std::string>& raw_tokens) const;

  // Every trainable tensor with a unique, stable name.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;

  const Vocabularies& vocab() const { return vocab_; }
  const ModelConfig& config() const { return config_; }
  const PriorMask& prior_mask() const { return mask_; }

  // Copies share parameters; clone() duplicates them.
  JointModel clone() const;

  // Checkpoint I/O; see checkpoint.cc for the byte layout.
  void save(const std::filesystem::path& path) const;
  static JointModel load(const std::filesystem::path& path);

 private:
  Vocabularies vocab_;
  PriorMask mask_;
  ModelConfig config_;

  Tensor word_table_;
  CharEncoder chars_;
  std::vector<LocalAttentionHead> lower_heads_;
  LstmCell encoder_forward_;
  LstmCell encoder_backward_;
  std::vector<LocalAttentionHead> upper_heads_;
  IntentHead intent_;
  DenseLayer emission_;
  Tensor transitions_;
};

// Free-function spellings of the model steps.
JointModel::Output forward_joint(const JointModel& model, const Example& example);
Tensor joint_loss(const Tensor& intent_probs, const Lattice& lattice,
                  size_t gold_intent, std::span<const size_t> gold_tags);

struct EvalResult {
  PrecisionRecall slots;
  double intent_accuracy = 0.0;
  std::vector<Prediction> predictions;
};

EvalResult evaluate_model(const JointModel& model, std::span<const Example> data);

struct EpochMetrics {
  size_t epoch = 0;  // 1-based
  double loss = 0.0;  // mean per-example training loss
  std::optional<double> dev_f1;
  std::optional<double> dev_intent_accuracy;
};

// Returning false stops training after the current epoch.
using EpochCallback =
    std::function<bool(const EpochMetrics&, const JointModel&)>;

struct TrainResult {
  JointModel model;
  std::vector<EpochMetrics> history;
  size_t best_epoch = 0;
};

// Adam with global-norm clipping, examples reshuffled every epoch. With a
// dev set the best epoch by dev slot F1 (then intent accuracy) is returned;
// otherwise the final parameters. Throws ContractError on empty data and
// TrainingError when the loss stops being finite.
TrainResult train(std::span<const Example> data, const TrainConfig& cfg,
                  std::span<const Example> dev = {},
                  const EpochCallback& on_epoch = {});

// One JSON object per line: epoch, loss, dev_f1, dev_intent_acc.
std::string metrics_line(const EpochMetrics& m);

class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1, double beta2,
       double eps);
  // Scales gradients down to `clip_norm` (global L2) when larger, then
  // applies one update. Returns the pre-clip norm.
  double step(double clip_norm);
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  size_t t_ = 0;
};

}  // namespace sluj

#endif  // SLUJ_MODEL_H_
