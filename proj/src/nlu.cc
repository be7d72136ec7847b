#include "sluj/nlu.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sluj/errors.h"
#include "sluj/eval.h"

namespace sluj {

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool is_word_char(unsigned char c) {
  return std::isalnum(c) || c >= 0x80 || c == '\'';
}

std::string strip_punct(const std::string& word) {
  size_t b = 0, e = word.size();
  while (b < e && !is_word_char(word[b])) ++b;
  while (e > b && !is_word_char(word[e - 1])) --e;
  while (b < e && word[b] == '\'') ++b;
  while (e > b && word[e - 1] == '\'') --e;
  return word.substr(b, e - b);
}

// Start of the first occurrence of `needle` in `hay`, or npos.
size_t find_tokens(const std::vector<std::string>& hay,
                   const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return std::string::npos;
  for (size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + i)) return i;
  }
  return std::string::npos;
}

std::string join(const std::vector<std::string>& words, size_t b, size_t e) {
  std::string out;
  for (size_t i = b; i < e; ++i) {
    if (i > b) out += ' ';
    out += words[i];
  }
  return out;
}

struct LexiconEntry {
  std::vector<std::string> tokens;
  std::string slot;
};

// Catalog values, longest first; ties keep schema order.
std::vector<LexiconEntry> lexicon_of(const Scenario& scenario) {
  std::vector<LexiconEntry> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& slot : scenario.slots) {
    for (const auto& entry : scenario.catalog) {
      auto it = entry.attributes.find(slot);
      if (it == entry.attributes.end()) continue;
      auto tokens = normalize_utterance(it->second);
      if (tokens.empty()) continue;
      if (!seen.insert({join(tokens, 0, tokens.size()), slot}).second) continue;
      out.push_back({std::move(tokens), slot});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.tokens.size() > b.tokens.size();
  });
  return out;
}

}  // namespace

std::vector<std::string> normalize_utterance(const std::string& text) {
  std::vector<std::string> out;
  for (const auto& raw : split_tokens(lowercase(text))) {
    std::string w = strip_punct(raw);
    if (!w.empty()) out.push_back(std::move(w));
  }
  return out;
}

NluRules parse_nlu_rules(const std::string& json_text) {
  NluRules rules;
  try {
    auto j = nlohmann::json::parse(json_text);
    for (const auto& a : j.at("acts")) {
      std::string act = a.at("act").get<std::string>();
      if (!is_dialog_act(act)) throw ConfigError("nlu rules: unknown act '" + act + "'");
      std::vector<std::string> phrases;
      for (const auto& p : a.at("phrases")) phrases.push_back(p.get<std::string>());
      rules.acts.emplace_back(std::move(act), std::move(phrases));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("nlu rules: ") + e.what());
  }
  return rules;
}

RuleNlu::RuleNlu(NluRules rules) : rules_(std::move(rules)) {}

RuleNlu RuleNlu::load(const std::filesystem::path& data_dir) {
  return RuleNlu(parse_nlu_rules(read_text(data_dir / "nlu_rules.json")));
}

NluResult RuleNlu::analyze(const std::string& text,
                           const Scenario& scenario) const {
  NluResult r;
  r.tokens = normalize_utterance(text);
  r.labels.assign(r.tokens.size(), "O");

  std::set<std::string> valued;
  const auto lexicon = lexicon_of(scenario);
  for (size_t i = 0; i < r.tokens.size();) {
    const LexiconEntry* hit = nullptr;
    for (const auto& e : lexicon) {
      if (i + e.tokens.size() <= r.tokens.size() &&
          std::equal(e.tokens.begin(), e.tokens.end(), r.tokens.begin() + i)) {
        hit = &e;
        break;
      }
    }
    if (!hit) {
      ++i;
      continue;
    }
    const size_t n = hit->tokens.size();
    r.labels[i] = "B-" + hit->slot;
    for (size_t k = 1; k < n; ++k) r.labels[i + k] = "I-" + hit->slot;
    r.chunks.emplace_back(hit->slot, join(r.tokens, i, i + n));
    valued.insert(hit->slot);
    i += n;
  }

  for (const auto& slot : scenario.slots) {
    auto it = scenario.request_keywords.find(slot);
    if (it == scenario.request_keywords.end() || valued.count(slot)) continue;
    for (const auto& phrase : it->second) {
      if (find_tokens(r.tokens, normalize_utterance(phrase)) != std::string::npos) {
        r.chunks.emplace_back(slot, std::string(kRequested));
        break;
      }
    }
  }

  for (const auto& [act, phrases] : rules_.acts) {
    for (const auto& phrase : phrases) {
      if (find_tokens(r.tokens, normalize_utterance(phrase)) != std::string::npos) {
        r.intent = act;
        return r;
      }
    }
  }
  r.intent = valued.empty() ? "other" : "inform";
  return r;
}

IntentMap IntentMap::parse(const std::string& text) {
  IntentMap m;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto words = split_tokens(line);
    if (words.empty()) continue;
    if (words.size() != 3 || words[1] != "=") {
      throw ConfigError("intent map line " + std::to_string(lineno) +
                        ": expected `intent = act`");
    }
    m.set(words[0], words[2]);
  }
  return m;
}

IntentMap IntentMap::load(const std::filesystem::path& path) {
  return parse(read_text(path));
}

void IntentMap::set(const std::string& intent, const std::string& act) {
  if (!is_dialog_act(act)) {
    throw ConfigError("intent map: '" + act + "' is not a dialog act");
  }
  table_[intent] = act;
}

std::string IntentMap::map(const std::string& intent) const {
  auto it = table_.find(intent);
  if (it != table_.end()) return it->second;
  return is_dialog_act(intent) ? intent : "other";
}

ModelNlu::ModelNlu(std::shared_ptr<const JointModel> model, IntentMap intents)
    : model_(std::move(model)), intents_(std::move(intents)) {
  if (!model_) throw ContractError("ModelNlu needs a model");
}

NluResult ModelNlu::analyze(const std::string& text, const Scenario&) const {
  NluResult r;
  r.tokens = normalize_utterance(text);
  if (r.tokens.empty()) {
    r.intent = "other";
    return r;
  }
  Prediction p = model_->predict_tokens(r.tokens);
  r.intent = intents_.map(p.intent);
  r.labels = p.slots;
  for (const Chunk& c : extract_chunks(r.labels)) {
    r.chunks.emplace_back(c.label, join(r.tokens, c.start, c.end + 1));
  }
  return r;
}

}  // namespace sluj
