#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/trie.hpp"

namespace qac {

/// Generator input triple: session queries, trie context, prefix.
struct AugmentedInput {
  std::vector<std::string> session_queries;   // earliest to latest
  std::vector<std::string> trie_completions;  // rank order
  std::string prefix;
  SuggestionSource source_tag = SuggestionSource::None;
};

inline constexpr std::string_view kSepLiteral = "[SEP]";
inline constexpr std::string_view kQsepLiteral = "[QSEP]";

/// `q_1 [QSEP] ... q_n [SEP] c_1 [QSEP] ... c_m [SEP] p`.
std::string format_input(const AugmentedInput& input);

namespace token {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kSep = 3;
inline constexpr int kQsep = 4;
inline constexpr int kUnk = 5;
inline constexpr int kFirstCharacter = 6;
}  // namespace token

inline constexpr std::size_t kMaxSourceLength = 200;
inline constexpr std::size_t kMaxTargetLength = 32;

/// Character-level tokenizer. Ids 0..5 are the special tokens, characters
/// follow in alphabet order. Special-token literals in the text map to their
/// ids, absorbing one adjacent space on each side.
class Tokenizer {
 public:
  explicit Tokenizer(std::u32string alphabet);

  /// Lowercase ASCII letters, digits, space and common query punctuation.
  static Tokenizer default_tokenizer();

  std::vector<int> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const int> ids) const;

  int id_of(char32_t c) const;  // kUnk when outside the alphabet
  bool is_character(int id) const { return id >= token::kFirstCharacter && id < vocab_size(); }
  int vocab_size() const { return token::kFirstCharacter + static_cast<int>(alphabet_.size()); }
  const std::u32string& alphabet() const { return alphabet_; }

  bool operator==(const Tokenizer& other) const { return alphabet_ == other.alphabet_; }

 private:
  std::u32string alphabet_;
  std::vector<int> ascii_ids_;  // fast path for code points < 128
};

/// Keeps the source within `max_length` tokens: drops whole session queries
/// oldest first, then trie completions lowest rank first. The prefix segment
/// is never cut; throws InputError when it alone does not fit. Throws
/// PreconditionError when the stream lacks exactly two [SEP] tokens.
std::vector<int> truncate_source(std::span<const int> tokens, std::size_t max_length = kMaxSourceLength);

/// Removes the trie-context segment, yielding the no-trie-context encoding.
std::vector<int> drop_trie_context(std::span<const int> tokens);

/// tokenize(format_input(input)) followed by truncate_source.
std::vector<int> encode_source(const Tokenizer& tokenizer, const AugmentedInput& input,
                               std::size_t max_length = kMaxSourceLength);

/// Which parts of the context reach the generator (ablation switches).
struct ContextOptions {
  std::size_t m = 3;
  bool use_session = true;
  bool use_trie = true;
};

/// Builds the augmented input for a (session, prefix) pair using the main
/// trie with suffix-trie fallback. Either trie may be null.
AugmentedInput make_augmented_input(std::span<const std::string> session_queries, std::string_view prefix,
                                    const PopularityTrie* main, const SuffixTrie* synth,
                                    const ContextOptions& options);

}  // namespace qac
