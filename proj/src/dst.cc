#include "sluj/dst.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sluj/errors.h"

namespace sluj {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_dialog_act(std::string_view act) {
  return std::find(std::begin(kDialogActs), std::end(kDialogActs), act) !=
         std::end(kDialogActs);
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> string_list(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + " must be a list");
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(v.get<std::string>());
  return out;
}

}  // namespace

Scenario parse_catalog(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("catalog is not valid JSON: ") + e.what());
  }
  Scenario s;
  try {
    s.name = j.at("scenario").get<std::string>();
    s.slots = string_list(j.at("slots"), "slots");
    s.ask_slots = j.contains("ask_slots") ? string_list(j["ask_slots"], "ask_slots")
                                          : s.slots;
    if (j.contains("request_keywords")) {
      for (const auto& [slot, phrases] : j["request_keywords"].items()) {
        s.request_keywords[slot] = string_list(phrases, "request_keywords");
      }
    }
    for (const auto& entry : j.at("entries")) {
      CatalogEntry e;
      e.scenario = s.name;
      for (const auto& [slot, value] : entry.items()) {
        if (std::find(s.slots.begin(), s.slots.end(), slot) == s.slots.end()) {
          throw ConfigError("catalog " + s.name + ": entry uses slot '" + slot +
                            "' outside the schema");
        }
        e.attributes[slot] =
            value.is_string() ? value.get<std::string>() : value.dump();
      }
      s.catalog.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("catalog: ") + e.what());
  }
  return s;
}

std::map<std::string, std::vector<std::string>> parse_templates(
    const std::string& text) {
  std::map<std::string, std::vector<std::string>> out;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("template line " + std::to_string(lineno) +
                        ": expected key = template");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("template line " + std::to_string(lineno) + ": empty key");
    }
    out[key].push_back(value);
  }
  return out;
}

ScenarioSet ScenarioSet::load(const fs::path& data_dir) {
  ScenarioSet set;
  const fs::path catalogs = data_dir / "catalogs";
  if (!fs::is_directory(catalogs)) {
    throw ConfigError("no catalogs directory under " + data_dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(catalogs)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    Scenario s = parse_catalog(read_file(file));
    const fs::path tmpl = data_dir / "templates" / (s.name + ".txt");
    if (!fs::exists(tmpl)) {
      throw ConfigError("scenario " + s.name + " has no template file " +
                        tmpl.string());
    }
    s.templates = parse_templates(read_file(tmpl));
    set.add(std::move(s));
  }
  return set;
}

void ScenarioSet::add(Scenario scenario) {
  std::string name = scenario.name;
  scenarios_[name] = std::move(scenario);
}

bool ScenarioSet::contains(const std::string& name) const {
  return scenarios_.count(name) > 0;
}

const Scenario& ScenarioSet::get(const std::string& name) const {
  auto it = scenarios_.find(name);
  if (it == scenarios_.end()) throw ConfigError("unknown scenario '" + name + "'");
  return it->second;
}

std::vector<std::string> ScenarioSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, s] : scenarios_) out.push_back(name);
  return out;
}

std::vector<CatalogEntry> db_search(const ScenarioSet& scenarios,
                                    const std::string& scenario,
                                    const SlotValues& informed,
                                    const SlotValues& denied) {
  const Scenario& s = scenarios.get(scenario);
  std::vector<CatalogEntry> out;
  for (const CatalogEntry& e : s.catalog) {
    bool ok = true;
    for (const auto& [slot, value] : informed) {
      if (value == kRequested) continue;
      auto d = denied.find(slot);
      if (d != denied.end() && d->second == value) continue;
      auto a = e.attributes.find(slot);
      if (a == e.attributes.end() || a->second != value) ok = false;
    }
    for (const auto& [slot, value] : denied) {
      auto a = e.attributes.find(slot);
      if (a != e.attributes.end() && a->second == value) ok = false;
    }
    if (ok) out.push_back(e);
  }
  return out;
}

const std::string& random_choice(const std::string& a, const std::string& b,
                                 Rng& rng) {
  return rng.index(2) == 0 ? a : b;
}

DialogState new_dialog(const std::string& scenario) {
  DialogState s;
  s.scenario = scenario;
  return s;
}

StepOutcome dst_step(const DialogState& state, const NluResult& nlu, Rng& rng,
                     const ScenarioSet& scenarios) {
  if (!state.active) throw ContractError("dialog has ended");
  static const std::string kInform = "inform", kRequest = "request",
                           kRecommend = "recommend";
  StepOutcome out;
  out.state = state;
  DialogState& s = out.state;
  s.turn += 1;
  // Constraints for this turn's search: IS plus values named in a request.
  SlotValues constraints = s.informed;

  const std::string& act = nlu.intent;
  if (act == "byemsg") {
    s.active = false;
    out.action = "break";
  } else if (act == "greeting") {
    out.action = "greeting";
  } else if (act == "inform") {
    out.action = random_choice(kInform, kRequest, rng);
    for (const auto& [slot, value] : nlu.chunks) {
      if (value != kRequested) s.informed[slot] = value;
    }
    constraints = s.informed;
  } else if (act == "request") {
    out.action = "inform";
    for (const auto& [slot, value] : nlu.chunks) {
      s.requested[slot] = value;
      if (value != kRequested) constraints[slot] = value;
    }
    out.searched = true;
  } else if (act == "ask_recommend") {
    out.action = "recommend";
    out.searched = true;
  } else if (act == "deny") {
    out.action = random_choice(kRequest, kRecommend, rng);
    for (const auto& [slot, value] : nlu.chunks) {
      if (value != kRequested) s.denied[slot] = value;
    }
  } else {
    out.action = "tips";
  }
  // inform / recommend reached through a random branch need content too.
  if (out.action == "inform" || out.action == "recommend") out.searched = true;
  if (out.searched) {
    out.results = db_search(scenarios, s.scenario, constraints, s.denied);
  }
  s.last_action = out.action;
  return out;
}

std::vector<std::string> suggest_tips(const Scenario& scenario,
                                      const DialogState& state) {
  std::vector<std::string> keys;
  if (state.informed.empty()) {
    keys = {"tip.inform", "tip.greeting", "tip.any"};
  } else {
    keys = {"tip.request", "tip.ask_recommend", "tip.deny", "tip.any"};
  }
  std::vector<std::string> out;
  for (const auto& k : keys) {
    auto it = scenario.templates.find(k);
    if (it != scenario.templates.end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
  }
  if (out.empty()) {
    for (const auto& [key, values] : scenario.templates) {
      if (key.rfind("tip.", 0) == 0) out.insert(out.end(), values.begin(), values.end());
    }
  }
  return out;
}

namespace {

std::string join_values(const Scenario& scenario, const SlotValues& values) {
  std::string out;
  auto append = [&out](const std::string& v) {
    if (!out.empty()) out += ' ';
    out += v;
  };
  for (const auto& slot : scenario.slots) {
    auto it = values.find(slot);
    if (it != values.end() && it->second != kRequested) append(it->second);
  }
  return out;
}

std::string missing_slot(const Scenario& scenario, const DialogState& state) {
  for (const auto& slot : scenario.ask_slots) {
    if (!state.informed.count(slot)) return slot;
  }
  return {};
}

}  // namespace

std::string nlg_render(const std::string& action, const DialogState& state,
                       const std::vector<CatalogEntry>& results,
                       const Scenario& scenario) {
  const std::string missing = missing_slot(scenario, state);
  std::vector<std::string> keys;
  if (!results.empty()) keys.push_back(action + ".results");
  if (action == "request" && missing.empty()) keys.push_back("request.complete");
  keys.push_back(action);
  const std::string* tmpl = nullptr;
  for (const auto& k : keys) {
    auto it = scenario.templates.find(k);
    if (it != scenario.templates.end() && !it->second.empty()) {
      tmpl = &it->second.front();
      break;
    }
  }
  if (!tmpl) {
    throw ConfigError("no template for action '" + action + "' in scenario " +
                      scenario.name);
  }

  auto resolve = [&](const std::string& name) -> std::string {
    if (name == "scenario") return state.scenario;
    if (name == "count") return std::to_string(results.size());
    if (name == "is") {
      // A value the user later refused no longer describes the request.
      SlotValues live;
      for (const auto& [slot, value] : state.informed) {
        auto d = state.denied.find(slot);
        if (d == state.denied.end() || d->second != value) live[slot] = value;
      }
      std::string v = join_values(scenario, live);
      return v.empty() ? "your request" : v;
    }
    if (name == "ds") {
      std::string v = join_values(scenario, state.denied);
      return v.empty() ? "nothing" : v;
    }
    if (name == "rs") {
      std::string out;
      for (const auto& [slot, value] : state.requested) {
        if (!out.empty()) out += ", ";
        out += slot;
      }
      return out.empty() ? "nothing" : out;
    }
    if (name == "missing") {
      if (missing.empty()) throw TemplateError("placeholder {missing}: nothing left to ask");
      return missing;
    }
    if (name == "tip") {
      auto tips = suggest_tips(scenario, state);
      if (tips.empty()) throw TemplateError("placeholder {tip}: scenario has no tips");
      return tips.front();
    }
    if (!results.empty()) {
      auto it = results.front().attributes.find(name);
      if (it != results.front().attributes.end()) return it->second;
    }
    if (auto it = state.informed.find(name); it != state.informed.end()) return it->second;
    if (auto it = state.denied.find(name); it != state.denied.end()) return it->second;
    throw TemplateError("unresolvable placeholder {" + name + "} in template for '" +
                        action + "'");
  };

  std::string out;
  const std::string& t = *tmpl;
  for (size_t i = 0; i < t.size();) {
    if (t[i] == '{') {
      auto close = t.find('}', i);
      if (close == std::string::npos) {
        throw TemplateError("unterminated placeholder in template for '" + action + "'");
      }
      out += resolve(t.substr(i + 1, close - i - 1));
      i = close + 1;
    } else {
      out += t[i++];
    }
  }
  return out;
}

}  // namespace sluj
