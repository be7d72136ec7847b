#ifndef SLUJ_NLU_H_
#define SLUJ_NLU_H_

// Turns a user utterance into a dialog act plus slot chunks for the tracker.
// Two sources: keyword rules (no model needed) and a trained JointModel whose
// intents are mapped onto dialog acts through a configuration file.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sluj/dst.h"
#include "sluj/model.h"

namespace sluj {

// Lowercased words with surrounding punctuation removed ("Goodbye!" ->
// "goodbye"). Apostrophes inside a word are kept.
std::vector<std::string> normalize_utterance(const std::string& text);

class Nlu {
 public:
  virtual ~Nlu() = default;
  virtual NluResult analyze(const std::string& text,
                            const Scenario& scenario) const = 0;
};

// Ordered (act, phrases) list; the first act with a phrase present on token
// boundaries wins. Without a match the act is inform when a catalog value
// was found and other otherwise.
struct NluRules {
  std::vector<std::pair<std::string, std::vector<std::string>>> acts;
};

// {"acts": [{"act": "byemsg", "phrases": ["goodbye", "bye"]}, ...]}
NluRules parse_nlu_rules(const std::string& json_text);

class RuleNlu : public Nlu {
 public:
  explicit RuleNlu(NluRules rules);
  // Reads `<data_dir>/nlu_rules.json`.
  static RuleNlu load(const std::filesystem::path& data_dir);

  // Slot values are catalog attribute values (longest token match first);
  // a scenario request keyword adds (slot, "?") unless the utterance also
  // names a value for that slot.
  NluResult analyze(const std::string& text,
                    const Scenario& scenario) const override;

 private:
  NluRules rules_;
};

// Model intent -> dialog act. Text format: `model_intent = act` per line,
// '#' comments. Unlisted intents that already are dialog acts map to
// themselves; anything else maps to "other".
class IntentMap {
 public:
  static IntentMap parse(const std::string& text);
  static IntentMap load(const std::filesystem::path& path);

  void set(const std::string& intent, const std::string& act);
  std::string map(const std::string& intent) const;

 private:
  std::map<std::string, std::string> table_;
};

class ModelNlu : public Nlu {
 public:
  ModelNlu(std::shared_ptr<const JointModel> model, IntentMap intents);

  // Chunks come from the predicted BIO labels; the chunk value is its
  // tokens joined by spaces.
  NluResult analyze(const std::string& text,
                    const Scenario& scenario) const override;

 private:
  std::shared_ptr<const JointModel> model_;
  IntentMap intents_;
};

}  // namespace sluj

#endif  // SLUJ_NLU_H_
