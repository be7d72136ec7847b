#ifndef SLUJ_DST_H_
#define SLUJ_DST_H_

// Rule-based dialog state tracking, catalog search and template NLG for the
// scenario chat agent.
//
// Each user turn is reduced to a dialog act plus (slot, value) chunks. The
// tracker then picks the agent action:
//
//   byemsg         -> break (dialog ends)
//   greeting       -> greeting
//   inform         -> inform or request (random), IS updated
//   request        -> inform, RS updated, catalog searched
//   ask_recommend  -> recommend, catalog searched
//   deny           -> request or recommend (random), DS updated
//   anything else  -> tips
//
// RS, IS and DS are the request, inform and deny slot-value sets.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sluj/random.h"

namespace sluj {

inline constexpr std::string_view kDialogActs[] = {
    "byemsg", "greeting", "inform", "request", "ask_recommend", "deny", "other"};

bool is_dialog_act(std::string_view act);

// Value recorded for a slot the user asked about without constraining it.
inline constexpr std::string_view kRequested = "?";

using SlotValues = std::map<std::string, std::string>;

struct NluResult {
  std::string intent;  // one of kDialogActs
  std::vector<std::pair<std::string, std::string>> chunks;  // (slot, value)
  // Token-aligned labels, for display.
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
};

struct DialogState {
  size_t turn = 0;
  SlotValues requested;  // RS
  SlotValues informed;   // IS
  SlotValues denied;     // DS
  bool active = true;
  std::string scenario;
  std::string last_action;
};

struct CatalogEntry {
  std::string scenario;
  SlotValues attributes;
};

struct Scenario {
  std::string name;
  std::vector<std::string> slots;       // schema
  std::vector<std::string> ask_slots;   // slots the agent may ask for
  std::map<std::string, std::vector<std::string>> request_keywords;
  std::vector<CatalogEntry> catalog;
  // Template key -> alternatives (tips keep every alternative; other keys
  // use the first).
  std::map<std::string, std::vector<std::string>> templates;
};

// Catalogs (`catalogs/<name>.json`) and templates (`templates/<name>.txt`)
// under one data directory.
class ScenarioSet {
 public:
  static ScenarioSet load(const std::filesystem::path& data_dir);

  void add(Scenario scenario);
  bool contains(const std::string& name) const;
  // Throws ConfigError for an unknown scenario.
  const Scenario& get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Scenario> scenarios_;
};

// Catalog JSON:
//   {"scenario": "...", "slots": [...], "ask_slots": [...],
//    "request_keywords": {"slot": ["phrase", ...]},
//    "entries": [{"slot": "value", ...}, ...]}
Scenario parse_catalog(const std::string& json_text);

// Template text: one `key = template` per line, '#' comments. Keys are an
// agent action, `<action>.results` (used when the search found entries),
// `request.complete` (nothing left to ask) or `tip.<act>` (suggested user
// utterances; may repeat).
std::map<std::string, std::vector<std::string>> parse_templates(
    const std::string& text);

// Entries that match every IS constraint and carry no DS value, in catalog
// order. Pairs present in both IS and DS do not constrain.
std::vector<CatalogEntry> db_search(const ScenarioSet& scenarios,
                                    const std::string& scenario,
                                    const SlotValues& informed,
                                    const SlotValues& denied);

// Uniform pick from two options driven by the session generator.
const std::string& random_choice(const std::string& a, const std::string& b,
                                 Rng& rng);

struct StepOutcome {
  DialogState state;
  std::string action;
  std::vector<CatalogEntry> results;
  bool searched = false;
};

// One tracker turn. Throws ContractError when the dialog already ended.
StepOutcome dst_step(const DialogState& state, const NluResult& nlu, Rng& rng,
                     const ScenarioSet& scenarios);

DialogState new_dialog(const std::string& scenario);

// Suggested utterances for the current state: inform-style tips while IS is
// empty, request/recommend/deny-style ones afterwards, plus `tip.any`.
std::vector<std::string> suggest_tips(const Scenario& scenario,
                                      const DialogState& state);

// Fills `{placeholder}`s of the template chosen for `action`. Placeholders:
// scenario, count, is, rs, ds, missing, tip, or any slot name (taken from
// the first result, then IS, then DS). Throws ConfigError when no template
// exists and TemplateError naming an unresolvable placeholder.
std::string nlg_render(const std::string& action, const DialogState& state,
                       const std::vector<CatalogEntry>& results,
                       const Scenario& scenario);

}  // namespace sluj

#endif  // SLUJ_DST_H_
