#include "sluj/corpus.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "sluj/errors.h"
#include "sluj/random.h"

namespace sluj {

namespace fs = std::filesystem;

Example make_example(std::vector<std::string> raw_tokens,
                     std::vector<std::string> slots, std::string intent) {
  Example ex;
  ex.tokens.reserve(raw_tokens.size());
  for (const auto& t : raw_tokens) ex.tokens.push_back(lowercase(t));
  ex.raw_tokens = std::move(raw_tokens);
  ex.slots = std::move(slots);
  ex.intent = std::move(intent);
  return ex;
}

bool is_bio_label(std::string_view label) {
  if (label == "O") return true;
  return label.size() > 2 && (label[0] == 'B' || label[0] == 'I') &&
         label[1] == '-';
}

void validate_example(const Example& ex) {
  if (ex.tokens.empty()) throw ContractError("example has no tokens");
  if (!ex.raw_tokens.empty() && ex.raw_tokens.size() != ex.tokens.size()) {
    throw ContractError("raw token count differs from token count");
  }
  if (ex.slots.size() != ex.tokens.size()) {
    throw ContractError("example has " + std::to_string(ex.tokens.size()) +
                        " tokens but " + std::to_string(ex.slots.size()) +
                        " slot labels");
  }
  for (const auto& s : ex.slots) {
    if (!is_bio_label(s)) throw ContractError("not a BIO label: " + s);
  }
}

std::string lowercase(std::string_view text) {
  std::string out(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> split_chars(std::string_view word) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < word.size()) {
    const auto lead = static_cast<unsigned char>(word[i]);
    size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    len = std::min(len, word.size() - i);
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  // A trailing blank line is the usual end-of-file newline artifact.
  while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos) {
    lines.pop_back();
  }
  return lines;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<Example> load_dataset(const fs::path& dir) {
  auto seq_in = read_lines(dir / "seq.in");
  auto seq_out = read_lines(dir / "seq.out");
  auto labels = read_lines(dir / "label");
  if (seq_in.size() != seq_out.size() || seq_in.size() != labels.size()) {
    size_t first = std::min({seq_in.size(), seq_out.size(), labels.size()}) + 1;
    std::ostringstream msg;
    msg << dir.string() << ": line " << first << ": line counts differ (seq.in "
        << seq_in.size() << ", seq.out " << seq_out.size() << ", label "
        << labels.size() << ")";
    throw ParseError(msg.str());
  }
  std::vector<Example> data;
  data.reserve(seq_in.size());
  for (size_t i = 0; i < seq_in.size(); ++i) {
    const size_t line = i + 1;
    auto tokens = split_tokens(seq_in[i]);
    auto slots = split_tokens(seq_out[i]);
    std::string intent = trim(labels[i]);
    auto fail = [&](const std::string& what) {
      throw ParseError(dir.string() + ": line " + std::to_string(line) + ": " +
                       what);
    };
    if (tokens.empty()) fail("no tokens");
    if (tokens.size() != slots.size()) {
      fail("seq.in has " + std::to_string(tokens.size()) +
           " tokens but seq.out has " + std::to_string(slots.size()));
    }
    if (intent.empty()) fail("empty intent label");
    for (const auto& s : slots) {
      if (!is_bio_label(s)) fail("not a BIO label: " + s);
    }
    data.push_back(make_example(std::move(tokens), std::move(slots), intent));
  }
  return data;
}

void save_dataset(const fs::path& dir, std::span<const Example> data) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream seq_in(dir / "seq.in"), seq_out(dir / "seq.out"),
      label(dir / "label");
  if (!seq_in || !seq_out || !label) {
    throw IoError("cannot write dataset under " + dir.string());
  }
  auto join = [](const std::vector<std::string>& parts) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
      if (i) out += ' ';
      out += parts[i];
    }
    return out;
  };
  for (const Example& ex : data) {
    seq_in << join(ex.raw_tokens.empty() ? ex.tokens : ex.raw_tokens) << '\n';
    seq_out << join(ex.slots) << '\n';
    label << ex.intent << '\n';
  }
  if (!seq_in || !seq_out || !label) {
    throw IoError("failed writing dataset under " + dir.string());
  }
}

// --- Vocabulary ----------------------------------------------------------

Vocabulary Vocabulary::with_reserved() {
  Vocabulary v;
  v.reserved_ = true;
  v.add("<pad>");
  v.add("<unk>");
  return v;
}

Vocabulary Vocabulary::labels() { return Vocabulary(); }

Vocabulary Vocabulary::from_entries(std::vector<std::string> entries,
                                    bool reserved) {
  Vocabulary v;
  v.reserved_ = reserved;
  for (const auto& e : entries) {
    if (v.ids_.count(e)) throw ContractError("duplicate vocabulary entry: " + e);
    v.add(e);
  }
  if (reserved && v.size() < 2) {
    throw ContractError("reserved vocabulary lacks PAD/UNK");
  }
  return v;
}

size_t Vocabulary::add(std::string_view entry) {
  std::string key(entry);
  auto it = ids_.find(key);
  if (it != ids_.end()) return it->second;
  size_t id = entries_.size();
  entries_.push_back(key);
  ids_.emplace(std::move(key), id);
  return id;
}

std::optional<size_t> Vocabulary::find(std::string_view entry) const {
  auto it = ids_.find(std::string(entry));
  if (it == ids_.end()) return std::nullopt;
  if (reserved_ && it->second < 2) return std::nullopt;
  return it->second;
}

size_t Vocabulary::encode(std::string_view entry) const {
  if (auto id = find(entry)) return *id;
  if (reserved_) return kUnk;
  throw ContractError("unknown label: " + std::string(entry));
}

const std::string& Vocabulary::decode(size_t id) const {
  if (id >= entries_.size()) {
    throw ContractError("id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(entries_.size()));
  }
  return entries_[id];
}

Vocabularies build_vocab(std::span<const Example> data, size_t min_count) {
  if (data.empty()) throw ContractError("build_vocab: empty dataset");
  Vocabularies v;
  // First-occurrence order keeps ids stable for a given corpus.
  std::vector<std::string> order;
  std::unordered_map<std::string, size_t> counts;
  for (const Example& ex : data) {
    for (const auto& t : ex.tokens) {
      if (counts[t]++ == 0) order.push_back(t);
    }
    const auto& raw = ex.raw_tokens.empty() ? ex.tokens : ex.raw_tokens;
    for (const auto& w : raw) {
      for (const auto& c : split_chars(w)) v.chars.add(c);
    }
    for (const auto& s : ex.slots) v.slots.add(s);
    v.intents.add(ex.intent);
  }
  for (const auto& w : order) {
    if (counts[w] >= min_count) v.words.add(w);
  }
  return v;
}

// --- Synthetic corpus ----------------------------------------------------

namespace {

using Filler = std::vector<std::string>;

struct IntentShape {
  std::string intent;
  std::string slot;
  std::vector<std::vector<std::string>> templates;  // "{}" marks the slot
  std::vector<Filler> fillers;
};

const std::vector<IntentShape>& synth_shapes() {
  static const std::vector<IntentShape> shapes = {
      {"flight",
       "city",
       {{"show", "flights", "from", "{}", "to", "{}"},
        {"i", "need", "a", "flight", "to", "{}"},
        {"flights", "from", "{}", "to", "{}", "please"},
        {"cheapest", "fare", "to", "{}"}},
       {{"boston"}, {"denver"}, {"dallas"}, {"new", "york"},
        {"san", "francisco"}, {"los", "angeles"}}},
      {"shopping",
       "item",
       {{"i", "want", "to", "buy", "a", "{}"},
        {"do", "you", "have", "a", "{}", "in", "stock"},
        {"show", "me", "the", "{}"}},
       {{"shirt"}, {"hat"}, {"running", "shoes"}, {"winter", "jacket"}}},
      {"restaurant",
       "cuisine",
       {{"book", "a", "table", "for", "{}", "food"},
        {"find", "a", "{}", "restaurant", "nearby"},
        {"i", "want", "{}", "food", "tonight"}},
       {{"italian"}, {"thai"}, {"mexican"}, {"chinese"}}},
  };
  return shapes;
}

}  // namespace

std::vector<Example> synth_generate(uint64_t seed, size_t n) {
  if (n == 0) throw ContractError("synth_generate: n must be positive");
  Rng rng(seed);
  const auto& shapes = synth_shapes();
  std::vector<Example> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const IntentShape& shape = shapes[i % shapes.size()];
    const auto& tmpl = shape.templates[rng.index(shape.templates.size())];
    std::vector<std::string> tokens, slots;
    for (const auto& piece : tmpl) {
      if (piece != "{}") {
        tokens.push_back(piece);
        slots.push_back("O");
        continue;
      }
      Filler filler;
      if (i < shapes.size()) {
        // The first round always carries a multi-token chunk where the
        // intent has one, so B-/I- sequences are guaranteed to appear.
        std::vector<Filler> multi;
        for (const auto& f : shape.fillers) {
          if (f.size() > 1) multi.push_back(f);
        }
        const auto& pool = multi.empty() ? shape.fillers : multi;
        filler = pool[rng.index(pool.size())];
      } else {
        filler = shape.fillers[rng.index(shape.fillers.size())];
      }
      for (size_t k = 0; k < filler.size(); ++k) {
        tokens.push_back(filler[k]);
        slots.push_back((k == 0 ? "B-" : "I-") + shape.slot);
      }
    }
    out.push_back(make_example(std::move(tokens), std::move(slots), shape.intent));
  }
  return out;
}

}  // namespace sluj
