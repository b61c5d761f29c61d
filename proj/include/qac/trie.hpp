#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qac/corpus.hpp"

namespace qac {

enum class SuggestionSource { Main, Synth, None };

const char* to_string(SuggestionSource source);

struct Suggestion {
  std::string text;
  std::uint64_t popularity = 0;
  std::size_t rank = 0;  // 1-based
  SuggestionSource source = SuggestionSource::Main;

  bool operator==(const Suggestion&) const = default;
};

/// Byte-keyed prefix tree with popularity counts on terminal nodes.
///
/// Every node caches the maximum terminal count in its subtree, so top-k
/// retrieval is a best-first walk that only opens subtrees able to beat the
/// current frontier. Children are kept sorted by byte, which makes ties
/// resolve in ascending text order.
class PopularityTrie {
 public:
  PopularityTrie();

  /// Adds `count` to the terminal count of `completion`.
  void insert(std::string_view completion, std::uint64_t count);

  /// Up to `m` completions starting with `prefix`, ordered by
  /// (popularity desc, text asc), ranks 1..n.
  std::vector<Suggestion> top_k(std::string_view prefix, std::size_t m,
                                SuggestionSource source = SuggestionSource::Main) const;

  /// Terminal count of `text`, 0 when absent.
  std::uint64_t popularity(std::string_view text) const;

  bool has_completion_with_prefix(std::string_view prefix) const;

  /// Number of distinct stored completions.
  std::size_t completion_count() const { return nodes_[0].subtree_completions; }
  std::size_t node_count() const { return nodes_.size(); }
  /// Number of insert() calls since construction (persisted).
  std::uint64_t insertions() const { return insertions_; }
  bool empty() const { return completion_count() == 0; }

  /// Visits every completion in lexicographic (byte) order.
  void for_each_completion(const std::function<void(const std::string&, std::uint64_t)>& fn) const;

  void save(const std::string& path) const;
  static PopularityTrie load(const std::string& path);

 private:
  struct Node {
    std::vector<std::pair<unsigned char, std::uint32_t>> children;  // sorted by label
    std::uint64_t count = 0;                                         // 0: not terminal
    std::uint64_t subtree_max = 0;
    std::uint32_t subtree_completions = 0;
  };

  std::uint32_t find_node(std::string_view key) const;  // kNone when absent
  std::uint32_t child(std::uint32_t node, unsigned char label) const;
  void rebuild_aggregates();

  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;

  std::vector<Node> nodes_;
  std::uint64_t insertions_ = 0;
};

using SuffixTrie = PopularityTrie;

PopularityTrie build_main_trie(const FrequencyTable& table);

std::vector<Suggestion> mpc_lookup(const PopularityTrie& trie, std::string_view prefix, std::size_t m);

/// True iff the main trie holds at least one completion for `prefix`.
bool is_seen(const PopularityTrie& trie, std::string_view prefix);

/// Word-boundary suffixes w_i..w_n for i = 1..n, longest first.
std::vector<std::string> enumerate_suffixes(const Query& query);

/// Inserts every suffix of every query with that query's frequency.
SuffixTrie build_suffix_trie(const FrequencyTable& table);

std::vector<Suggestion> mpc_synth_lookup(const SuffixTrie& trie, std::string_view prefix, std::size_t m);

struct FallbackResult {
  SuggestionSource source = SuggestionSource::None;
  std::vector<Suggestion> suggestions;
};

/// Main-trie results when there are any, otherwise suffix-trie results.
FallbackResult lookup_with_fallback(const PopularityTrie& main, const SuffixTrie& synth,
                                    std::string_view prefix, std::size_t m);

inline void save_trie(const PopularityTrie& trie, const std::string& path) { trie.save(path); }
inline PopularityTrie load_trie(const std::string& path) { return PopularityTrie::load(path); }

}  // namespace qac
