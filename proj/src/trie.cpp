#include "qac/trie.hpp"

#include <algorithm>
#include <queue>

#include "qac/binary_io.hpp"
#include "qac/errors.hpp"

namespace qac {

namespace {

constexpr std::string_view kTrieMagic = "QACTRIE1";
constexpr std::uint32_t kTrieVersion = 1;

struct Frontier {
  std::uint64_t popularity;
  std::string text;
  std::uint32_t node;
  bool terminal;
};

// Max-heap order: higher popularity first, then smaller text.
struct FrontierLess {
  bool operator()(const Frontier& a, const Frontier& b) const {
    if (a.popularity != b.popularity) return a.popularity < b.popularity;
    return a.text > b.text;
  }
};

void require_prefix(std::string_view prefix) {
  if (prefix.empty()) throw PreconditionError("lookup prefix must be non-empty");
}

}  // namespace

const char* to_string(SuggestionSource source) {
  switch (source) {
    case SuggestionSource::Main: return "Main";
    case SuggestionSource::Synth: return "Synth";
    case SuggestionSource::None: return "None";
  }
  return "None";
}

PopularityTrie::PopularityTrie() : nodes_(1) {}

std::uint32_t PopularityTrie::child(std::uint32_t node, unsigned char label) const {
  const auto& children = nodes_[node].children;
  auto it = std::lower_bound(children.begin(), children.end(), label,
                             [](const auto& entry, unsigned char l) { return entry.first < l; });
  if (it == children.end() || it->first != label) return kNone;
  return it->second;
}

std::uint32_t PopularityTrie::find_node(std::string_view key) const {
  std::uint32_t node = 0;
  for (char c : key) {
    node = child(node, static_cast<unsigned char>(c));
    if (node == kNone) return kNone;
  }
  return node;
}

void PopularityTrie::insert(std::string_view completion, std::uint64_t count) {
  if (completion.empty()) throw PreconditionError("cannot insert an empty completion");
  if (count == 0) throw PreconditionError("insert count must be positive");

  std::vector<std::uint32_t> path;
  path.reserve(completion.size() + 1);
  std::uint32_t node = 0;
  path.push_back(node);
  for (char c : completion) {
    const auto label = static_cast<unsigned char>(c);
    auto next = child(node, label);
    if (next == kNone) {
      next = static_cast<std::uint32_t>(nodes_.size());
      nodes_.emplace_back();
      auto& children = nodes_[node].children;
      auto it = std::lower_bound(children.begin(), children.end(), label,
                                 [](const auto& entry, unsigned char l) { return entry.first < l; });
      children.insert(it, {label, next});
    }
    node = next;
    path.push_back(node);
  }

  const bool new_terminal = nodes_[node].count == 0;
  nodes_[node].count += count;
  const auto updated = nodes_[node].count;
  for (auto id : path) {
    auto& n = nodes_[id];
    n.subtree_max = std::max(n.subtree_max, updated);
    if (new_terminal) ++n.subtree_completions;
  }
  ++insertions_;
}

std::vector<Suggestion> PopularityTrie::top_k(std::string_view prefix, std::size_t m,
                                              SuggestionSource source) const {
  require_prefix(prefix);
  std::vector<Suggestion> out;
  if (m == 0) return out;
  const auto start = find_node(prefix);
  if (start == kNone || nodes_[start].subtree_completions == 0) return out;

  std::priority_queue<Frontier, std::vector<Frontier>, FrontierLess> frontier;
  frontier.push({nodes_[start].subtree_max, std::string(prefix), start, false});
  while (!frontier.empty() && out.size() < m) {
    auto item = frontier.top();
    frontier.pop();
    if (item.terminal) {
      out.push_back({std::move(item.text), item.popularity, out.size() + 1, source});
      continue;
    }
    const auto& node = nodes_[item.node];
    if (node.count > 0) frontier.push({node.count, item.text, item.node, true});
    for (const auto& [label, id] : node.children) {
      std::string text = item.text;
      text.push_back(static_cast<char>(label));
      frontier.push({nodes_[id].subtree_max, std::move(text), id, false});
    }
  }
  return out;
}

std::uint64_t PopularityTrie::popularity(std::string_view text) const {
  const auto node = find_node(text);
  return node == kNone ? 0 : nodes_[node].count;
}

bool PopularityTrie::has_completion_with_prefix(std::string_view prefix) const {
  const auto node = find_node(prefix);
  return node != kNone && nodes_[node].subtree_completions > 0;
}

void PopularityTrie::for_each_completion(
    const std::function<void(const std::string&, std::uint64_t)>& fn) const {
  std::string path;
  // Iterative DFS keeping (node, next child index).
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
  if (nodes_[0].count > 0) fn(path, nodes_[0].count);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const auto& children = nodes_[node].children;
    if (next == children.size()) {
      stack.pop_back();
      if (!path.empty()) path.pop_back();
      continue;
    }
    const auto [label, id] = children[next++];
    path.push_back(static_cast<char>(label));
    if (nodes_[id].count > 0) fn(path, nodes_[id].count);
    stack.emplace_back(id, 0);
  }
}

void PopularityTrie::rebuild_aggregates() {
  // Children always have larger indices than their parent.
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    auto& n = nodes_[i];
    n.subtree_max = n.count;
    n.subtree_completions = n.count > 0 ? 1 : 0;
    for (const auto& [label, id] : n.children) {
      n.subtree_max = std::max(n.subtree_max, nodes_[id].subtree_max);
      n.subtree_completions += nodes_[id].subtree_completions;
    }
  }
}

void PopularityTrie::save(const std::string& path) const {
  ByteWriter w;
  w.put_u64(nodes_.size());
  w.put_u64(insertions_);
  for (const auto& n : nodes_) {
    w.put_u64(n.count);
    w.put_u32(static_cast<std::uint32_t>(n.children.size()));
    for (const auto& [label, id] : n.children) {
      w.put_u8(label);
      w.put_u32(id);
    }
  }
  write_container(path, kTrieMagic, kTrieVersion, w.bytes());
}

PopularityTrie PopularityTrie::load(const std::string& path) {
  const auto payload = read_container(path, kTrieMagic, kTrieVersion);
  ByteReader r(payload);
  PopularityTrie trie;
  try {
    const auto node_count = r.get_u64();
    if (node_count == 0 || node_count > payload.size()) throw FormatError("implausible node count");
    trie.insertions_ = r.get_u64();
    trie.nodes_.assign(node_count, Node{});
    std::vector<bool> referenced(node_count, false);
    for (std::uint64_t i = 0; i < node_count; ++i) {
      auto& n = trie.nodes_[i];
      n.count = r.get_u64();
      const auto children = r.get_u32();
      n.children.reserve(children);
      for (std::uint32_t c = 0; c < children; ++c) {
        const auto label = r.get_u8();
        const auto id = r.get_u32();
        if (id <= i || id >= node_count || referenced[id])
          throw FormatError("invalid child reference");
        if (!n.children.empty() && n.children.back().first >= label)
          throw FormatError("children out of order");
        referenced[id] = true;
        n.children.emplace_back(label, id);
      }
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after node table");
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
  trie.rebuild_aggregates();
  return trie;
}

PopularityTrie build_main_trie(const FrequencyTable& table) {
  PopularityTrie trie;
  for (const auto& [query, freq] : table) trie.insert(query, freq);
  return trie;
}

std::vector<Suggestion> mpc_lookup(const PopularityTrie& trie, std::string_view prefix, std::size_t m) {
  return trie.top_k(prefix, m, SuggestionSource::Main);
}

bool is_seen(const PopularityTrie& trie, std::string_view prefix) {
  require_prefix(prefix);
  return trie.has_completion_with_prefix(prefix);
}

std::vector<std::string> enumerate_suffixes(const Query& query) {
  const auto& words = query.words();
  if (words.empty()) throw PreconditionError("cannot enumerate suffixes of an empty query");
  std::vector<std::string> suffixes;
  suffixes.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::string suffix;
    for (std::size_t k = i; k < words.size(); ++k) {
      if (k > i) suffix.push_back(' ');
      suffix += words[k];
    }
    suffixes.push_back(std::move(suffix));
  }
  return suffixes;
}

SuffixTrie build_suffix_trie(const FrequencyTable& table) {
  SuffixTrie trie;
  for (const auto& [query, freq] : table)
    for (const auto& suffix : enumerate_suffixes(Query::from_normalized(query))) trie.insert(suffix, freq);
  return trie;
}

std::vector<Suggestion> mpc_synth_lookup(const SuffixTrie& trie, std::string_view prefix, std::size_t m) {
  return trie.top_k(prefix, m, SuggestionSource::Synth);
}

FallbackResult lookup_with_fallback(const PopularityTrie& main, const SuffixTrie& synth,
                                    std::string_view prefix, std::size_t m) {
  FallbackResult result;
  result.suggestions = mpc_lookup(main, prefix, m);
  if (!result.suggestions.empty()) {
    result.source = SuggestionSource::Main;
    return result;
  }
  result.suggestions = mpc_synth_lookup(synth, prefix, m);
  result.source = result.suggestions.empty() ? SuggestionSource::None : SuggestionSource::Synth;
  return result;
}

}  // namespace qac
