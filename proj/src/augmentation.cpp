#include "qac/augmentation.hpp"

#include <algorithm>
#include <array>

#include "qac/errors.hpp"
#include "qac/utf8.hpp"

namespace qac {

namespace {

struct SpecialLiteral {
  std::string_view text;
  int id;
};

// Longest literal first so "[QSEP]" never half-matches.
constexpr std::array<SpecialLiteral, 2> kLiterals{{{kQsepLiteral, token::kQsep}, {kSepLiteral, token::kSep}}};

using Segment = std::vector<std::vector<int>>;

Segment split_list(std::span<const int> tokens) {
  Segment items;
  if (tokens.empty()) return items;
  items.emplace_back();
  for (int t : tokens) {
    if (t == token::kQsep) {
      items.emplace_back();
    } else {
      items.back().push_back(t);
    }
  }
  return items;
}

std::size_t list_length(const Segment& items) {
  std::size_t n = items.empty() ? 0 : items.size() - 1;
  for (const auto& item : items) n += item.size();
  return n;
}

void append_list(std::vector<int>& out, const Segment& items) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out.push_back(token::kQsep);
    out.insert(out.end(), items[i].begin(), items[i].end());
  }
}

struct SourceLayout {
  Segment session;
  Segment completions;
  std::vector<int> prefix;
};

SourceLayout parse_source(std::span<const int> tokens) {
  std::vector<std::size_t> seps;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == token::kSep) seps.push_back(i);
  if (seps.size() != 2) throw PreconditionError("source must contain exactly two [SEP] tokens");
  SourceLayout layout;
  layout.session = split_list(tokens.subspan(0, seps[0]));
  layout.completions = split_list(tokens.subspan(seps[0] + 1, seps[1] - seps[0] - 1));
  layout.prefix.assign(tokens.begin() + static_cast<long>(seps[1]) + 1, tokens.end());
  return layout;
}

std::vector<int> assemble(const SourceLayout& layout) {
  std::vector<int> out;
  append_list(out, layout.session);
  out.push_back(token::kSep);
  append_list(out, layout.completions);
  out.push_back(token::kSep);
  out.insert(out.end(), layout.prefix.begin(), layout.prefix.end());
  return out;
}

}  // namespace

std::string format_input(const AugmentedInput& input) {
  std::vector<std::string_view> pieces;
  auto add_list = [&](const std::vector<std::string>& items) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i > 0) pieces.push_back(kQsepLiteral);
      pieces.push_back(items[i]);
    }
  };
  add_list(input.session_queries);
  pieces.push_back(kSepLiteral);
  add_list(input.trie_completions);
  pieces.push_back(kSepLiteral);
  pieces.push_back(input.prefix);

  std::string out;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += pieces[i];
  }
  return out;
}

Tokenizer::Tokenizer(std::u32string alphabet) : alphabet_(std::move(alphabet)), ascii_ids_(128, token::kUnk) {
  auto sorted = alphabet_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("tokenizer alphabet contains duplicate characters");
  for (std::size_t i = 0; i < alphabet_.size(); ++i)
    if (alphabet_[i] < 128) ascii_ids_[alphabet_[i]] = token::kFirstCharacter + static_cast<int>(i);
}

Tokenizer Tokenizer::default_tokenizer() {
  return Tokenizer(U" abcdefghijklmnopqrstuvwxyz0123456789.-'&/:_,+!?#@$%*()\"=;~<>|");
}

int Tokenizer::id_of(char32_t c) const {
  if (c < 128) return ascii_ids_[c];
  const auto pos = alphabet_.find(c);
  return pos == std::u32string::npos ? token::kUnk : token::kFirstCharacter + static_cast<int>(pos);
}

std::vector<int> Tokenizer::tokenize(std::string_view text) const {
  const auto cps = utf8::decode(text);
  std::vector<int> ids;
  ids.reserve(cps.size());
  const int space_id = id_of(U' ');
  bool last_was_text_space = false;
  std::size_t i = 0;
  while (i < cps.size()) {
    bool matched = false;
    if (cps[i] == U'[') {
      for (const auto& lit : kLiterals) {
        if (i + lit.text.size() > cps.size()) continue;
        bool equal = true;
        for (std::size_t k = 0; k < lit.text.size() && equal; ++k)
          equal = cps[i + k] == static_cast<char32_t>(lit.text[k]);
        if (!equal) continue;
        if (last_was_text_space) ids.pop_back();
        ids.push_back(lit.id);
        i += lit.text.size();
        if (i < cps.size() && cps[i] == U' ') ++i;
        last_was_text_space = false;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    const int id = id_of(cps[i]);
    ids.push_back(id);
    last_was_text_space = cps[i] == U' ' && id == space_id;
    ++i;
  }
  return ids;
}

std::string Tokenizer::detokenize(std::span<const int> ids) const {
  std::string out;
  bool space_pending = false;
  for (int id : ids) {
    if (is_character(id)) {
      if (space_pending) out.push_back(' ');
      space_pending = false;
      out += utf8::encode(alphabet_[static_cast<std::size_t>(id - token::kFirstCharacter)]);
      continue;
    }
    std::string_view literal;
    switch (id) {
      case token::kSep: literal = kSepLiteral; break;
      case token::kQsep: literal = kQsepLiteral; break;
      case token::kUnk: literal = "[UNK]"; break;
      case token::kBos: literal = "[BOS]"; break;
      case token::kEos: literal = "[EOS]"; break;
      default: literal = "[PAD]"; break;
    }
    if (id == token::kUnk) {
      // Unknown characters stay inline with their neighbours.
      if (space_pending) out.push_back(' ');
      space_pending = false;
      out += literal;
      continue;
    }
    if (!out.empty() || space_pending) out.push_back(' ');
    out += literal;
    space_pending = true;
  }
  return out;
}

std::vector<int> truncate_source(std::span<const int> tokens, std::size_t max_length) {
  auto layout = parse_source(tokens);
  if (layout.prefix.size() + 2 > max_length)
    throw InputError("prefix of " + std::to_string(layout.prefix.size()) +
                     " tokens exceeds the source budget of " + std::to_string(max_length));
  if (tokens.size() <= max_length) return {tokens.begin(), tokens.end()};

  auto total = [&] { return list_length(layout.session) + list_length(layout.completions) + 2 + layout.prefix.size(); };
  while (total() > max_length && !layout.session.empty()) layout.session.erase(layout.session.begin());
  while (total() > max_length && !layout.completions.empty()) layout.completions.pop_back();
  return assemble(layout);
}

std::vector<int> drop_trie_context(std::span<const int> tokens) {
  auto layout = parse_source(tokens);
  layout.completions.clear();
  return assemble(layout);
}

std::vector<int> encode_source(const Tokenizer& tokenizer, const AugmentedInput& input, std::size_t max_length) {
  return truncate_source(tokenizer.tokenize(format_input(input)), max_length);
}

AugmentedInput make_augmented_input(std::span<const std::string> session_queries, std::string_view prefix,
                                    const PopularityTrie* main, const SuffixTrie* synth,
                                    const ContextOptions& options) {
  AugmentedInput input;
  input.prefix = std::string(prefix);
  if (options.use_session) input.session_queries.assign(session_queries.begin(), session_queries.end());
  if (options.use_trie && options.m > 0 && !prefix.empty()) {
    static const PopularityTrie kEmpty;
    const auto result =
        lookup_with_fallback(main ? *main : kEmpty, synth ? *synth : kEmpty, prefix, options.m);
    input.source_tag = result.source;
    for (const auto& s : result.suggestions) input.trie_completions.push_back(s.text);
  }
  return input;
}

}  // namespace qac
