#ifndef SLUJ_CORPUS_H_
#define SLUJ_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sluj {

// One utterance with per-token BIO slot labels and a sentence intent.
struct Example {
  std::vector<std::string> tokens;      // lowercased
  std::vector<std::string> raw_tokens;  // original case, same length
  std::vector<std::string> slots;       // may be empty for unlabeled input
  std::string intent;

  bool operator==(const Example&) const = default;
};

// Builds an Example from tokens as written; lowercases the word forms.
Example make_example(std::vector<std::string> raw_tokens,
                     std::vector<std::string> slots = {},
                     std::string intent = {});

// "O", "B-<type>" or "I-<type>" with a nonempty type.
bool is_bio_label(std::string_view label);

// Throws ContractError when tokens and slots disagree or a label is not BIO.
void validate_example(const Example& example);

std::string lowercase(std::string_view text);
std::vector<std::string> split_tokens(std::string_view text);
// UTF-8 code points of `word`, each as its own string.
std::vector<std::string> split_chars(std::string_view word);

// Reads `seq.in`, `seq.out` and `label` from `dir`. Throws IoError when a
// file is missing and ParseError (with a 1-based line number) on mismatch.
std::vector<Example> load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir,
                  std::span<const Example> data);

class Vocabulary {
 public:
  static constexpr size_t kPad = 0;
  static constexpr size_t kUnk = 1;

  // With PAD and UNK at ids 0 and 1 (words, characters).
  static Vocabulary with_reserved();
  // Plain label inventory; unknown labels are an error (slots, intents).
  static Vocabulary labels();

  // Returns the id of `entry`, adding it if new.
  size_t add(std::string_view entry);
  std::optional<size_t> find(std::string_view entry) const;
  // Unknown entries map to UNK when reserved ids exist, otherwise throw
  // ContractError.
  size_t encode(std::string_view entry) const;
  const std::string& decode(size_t id) const;

  size_t size() const { return entries_.size(); }
  bool has_reserved() const { return reserved_; }
  const std::vector<std::string>& entries() const { return entries_; }

  // Rebuilds from a stored entry list (reserved entries included).
  static Vocabulary from_entries(std::vector<std::string> entries,
                                 bool reserved);

  bool operator==(const Vocabulary& o) const {
    return reserved_ == o.reserved_ && entries_ == o.entries_;
  }

 private:
  bool reserved_ = false;
  std::vector<std::string> entries_;
  std::unordered_map<std::string, size_t> ids_;
};

struct Vocabularies {
  Vocabulary words = Vocabulary::with_reserved();
  Vocabulary chars = Vocabulary::with_reserved();
  Vocabulary slots = Vocabulary::labels();
  Vocabulary intents = Vocabulary::labels();
};

// Words seen fewer than `min_count` times stay out of the word vocabulary
// and encode as UNK. Characters come from the raw word forms.
Vocabularies build_vocab(std::span<const Example> data, size_t min_count = 1);

// Deterministic templated corpus: three intents (flight, shopping,
// restaurant) cycling in order, six slot labels including multi-token
// chunks, sentences of 4 to 9 tokens.
std::vector<Example> synth_generate(uint64_t seed, size_t n);

}  // namespace sluj

#endif  // SLUJ_CORPUS_H_
