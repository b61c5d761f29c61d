#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "qac/binary_io.hpp"
#include "qac/errors.hpp"
#include "qac/random.hpp"
#include "qac/trie.hpp"
#include "support/oracles.hpp"

using namespace qac;
namespace fs = std::filesystem;

namespace {

const FrequencyTable kGoFixture = {{"google", 10}, {"google.com", 7}, {"good", 5}, {"go-kart", 1}};

const FrequencyTable kKindleFixture = {
    {"amazon kindle e-reader book", 40},    {"cheap kindle e-reader price", 30},
    {"kindle e-reader questions", 20},       {"new kindle e-reader book", 15},
    {"used kindle e-reader price", 12},      {"best kindle e-reader case cover", 3},
    {"university of west florida", 8},
};

std::vector<std::string> texts(const std::vector<Suggestion>& s) {
  std::vector<std::string> out;
  for (const auto& x : s) out.push_back(x.text);
  return out;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("qac_trie_test_" + name); }

}  // namespace

TEST_SUITE("trie") {

TEST_CASE("insert accumulates counts and subtree totals") {
  PopularityTrie t;
  t.insert("go", 1);
  t.insert("go", 1);
  CHECK(t.popularity("go") == 2);
  CHECK(t.completion_count() == 1);

  PopularityTrie u;
  u.insert("google", 5);
  u.insert("good", 3);
  CHECK(u.completion_count() == 2);
  CHECK(u.popularity("goo") == 0);
  CHECK(u.has_completion_with_prefix("goo"));
  CHECK_THROWS_AS(u.insert("", 1), PreconditionError);
  CHECK_THROWS_AS(u.insert("x", 0), PreconditionError);
}

TEST_CASE("ten thousand random inserts are all retrievable") {
  const auto table = testing::random_frequency_table(10000, 17);
  const auto trie = build_main_trie(table);
  CHECK(trie.completion_count() == table.size());
  for (const auto& [q, f] : table) CHECK(trie.popularity(q) == f);
}

TEST_CASE("most popular completions of the go fixture") {
  const auto trie = build_main_trie(kGoFixture);
  const auto got = mpc_lookup(trie, "go", 3);
  CHECK(texts(got) == std::vector<std::string>{"google", "google.com", "good"});
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].rank == i + 1);
    CHECK(got[i].source == SuggestionSource::Main);
  }
  CHECK(got[0].popularity == 10);
  CHECK(mpc_lookup(trie, "kindle e-reader", 3).empty());
  CHECK(is_seen(trie, "go"));
  CHECK_FALSE(is_seen(trie, "zzzz"));
  CHECK(trie.completion_count() == kGoFixture.size());
}

TEST_CASE("empty table gives an empty trie") {
  const auto trie = build_main_trie({});
  CHECK(trie.empty());
  CHECK(mpc_lookup(trie, "a", 5).empty());
  CHECK_FALSE(is_seen(trie, "a"));
}

TEST_CASE("ties break by ascending text") {
  const auto trie = build_main_trie({{"bb", 3}, {"ba", 3}, {"bc", 3}, {"b", 1}});
  CHECK(texts(mpc_lookup(trie, "b", 4)) == std::vector<std::string>{"ba", "bb", "bc", "b"});
}

TEST_CASE("lookups match the linear-scan oracle") {
  const auto table = testing::random_frequency_table(3000, 23);
  const auto trie = build_main_trie(table);
  const auto prefixes = testing::random_prefixes(table, 400, 29);
  for (const auto& p : prefixes) {
    for (std::size_t m : {1, 3, 8}) {
      const auto got = mpc_lookup(trie, p, m);
      const auto want = testing::linear_top_k(table, p, m);
      REQUIRE(texts(got) == want);
      CHECK(is_seen(trie, p) == !want.empty());
    }
  }
}

TEST_CASE("results for an extended prefix are a subset") {
  const auto table = testing::random_frequency_table(2000, 31);
  const auto trie = build_main_trie(table);
  for (const auto& p : testing::random_prefixes(table, 100, 37)) {
    const auto wide = mpc_lookup(trie, p, 100000);
    for (char c : std::string("aeiou ")) {
      for (const auto& s : mpc_lookup(trie, p + c, 100000)) {
        CHECK(std::any_of(wide.begin(), wide.end(), [&](const Suggestion& w) { return w.text == s.text; }));
        CHECK(s.text.rfind(p + c, 0) == 0);
      }
    }
  }
}

TEST_CASE("suffixes start at word boundaries") {
  CHECK(enumerate_suffixes(Query::from_normalized("university of west florida")) ==
        std::vector<std::string>{"university of west florida", "of west florida", "west florida", "florida"});
  CHECK(enumerate_suffixes(Query::from_normalized("florida")) == std::vector<std::string>{"florida"});
  CHECK_THROWS_AS(enumerate_suffixes(Query()), PreconditionError);
}

TEST_CASE("suffix popularity accumulates across queries") {
  const auto trie = build_suffix_trie({{"west florida", 2}, {"university of west florida", 3}});
  CHECK(trie.popularity("west florida") == 5);
  CHECK(trie.popularity("florida") == 5);
  CHECK(trie.popularity("of west florida") == 3);
  CHECK(trie.insertions() == 6);

  const auto single = build_suffix_trie({{"a b c d", 1}});
  CHECK(single.completion_count() == 4);
}

TEST_CASE("suffix lookup for an unseen prefix") {
  const auto synth = build_suffix_trie(kKindleFixture);
  const auto got = mpc_synth_lookup(synth, "kindle e-reader", 3);
  CHECK(texts(got) ==
        std::vector<std::string>{"kindle e-reader book", "kindle e-reader price", "kindle e-reader questions"});
  for (const auto& s : got) CHECK(s.source == SuggestionSource::Synth);
  CHECK(mpc_synth_lookup(synth, "zebra", 3).empty());
}

TEST_CASE("suffix lookups match the linear-scan oracle over enumerated suffixes") {
  const auto table = testing::random_frequency_table(1500, 41);
  const auto synth = build_suffix_trie(table);
  const auto suffix_table = testing::suffix_frequency_table(table);
  std::size_t total_words = 0;
  for (const auto& [q, f] : table) total_words += Query::from_normalized(q).words().size();
  CHECK(synth.insertions() == total_words);
  for (const auto& p : testing::random_prefixes(suffix_table, 300, 43))
    REQUIRE(texts(mpc_synth_lookup(synth, p, 5)) == testing::linear_top_k(suffix_table, p, 5));
}

TEST_CASE("fallback consults the suffix trie only on a total miss") {
  FrequencyTable main_table = kGoFixture;
  const auto main = build_main_trie(main_table);
  const auto synth = build_suffix_trie(kKindleFixture);

  auto r = lookup_with_fallback(main, synth, "go", 3);
  CHECK(r.source == SuggestionSource::Main);
  CHECK(r.suggestions.size() == 3);

  r = lookup_with_fallback(main, synth, "kindle e-reader", 3);
  CHECK(r.source == SuggestionSource::Synth);
  CHECK(texts(r.suggestions) ==
        std::vector<std::string>{"kindle e-reader book", "kindle e-reader price", "kindle e-reader questions"});

  r = lookup_with_fallback(main, synth, "qqq", 3);
  CHECK(r.source == SuggestionSource::None);
  CHECK(r.suggestions.empty());

  // One main hit is not padded from the suffix trie.
  r = lookup_with_fallback(main, synth, "go-", 3);
  CHECK(r.source == SuggestionSource::Main);
  CHECK(texts(r.suggestions) == std::vector<std::string>{"go-kart"});
}

TEST_CASE("save and load preserve every lookup") {
  const auto table = testing::random_frequency_table(2000, 47);
  const auto trie = build_main_trie(table);
  const auto path = temp_file("roundtrip.bin");
  save_trie(trie, path.string());
  const auto back = load_trie(path.string());
  CHECK(back.completion_count() == trie.completion_count());
  CHECK(back.node_count() == trie.node_count());
  CHECK(back.insertions() == trie.insertions());
  for (const auto& p : testing::random_prefixes(table, 300, 53)) CHECK(texts(back.top_k(p, 8)) == texts(trie.top_k(p, 8)));

  const auto go = build_main_trie(kGoFixture);
  save_trie(go, path.string());
  CHECK(texts(mpc_lookup(load_trie(path.string()), "go", 3)) == texts(mpc_lookup(go, "go", 3)));

  save_trie(PopularityTrie(), path.string());
  CHECK(load_trie(path.string()).empty());
  fs::remove(path);
}

TEST_CASE("damaged trie files are rejected") {
  const auto trie = build_main_trie(kGoFixture);
  const auto path = temp_file("damaged.bin");
  save_trie(trie, path.string());
  const auto size = fs::file_size(path);

  SUBCASE("truncated") {
    fs::resize_file(path, size - 7);
    CHECK_THROWS_AS(load_trie(path.string()), ChecksumError);
  }
  SUBCASE("flipped byte") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size / 2));
    char c = 0;
    f.read(&c, 1);
    f.seekp(static_cast<std::streamoff>(size / 2));
    c = static_cast<char>(c ^ 0x5a);
    f.write(&c, 1);
    f.close();
    CHECK_THROWS_AS(load_trie(path.string()), ChecksumError);
  }
  SUBCASE("wrong version") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    write_container(path.string(), "QACTRIE1", 9, bytes.substr(12, bytes.size() - 16));
    CHECK_THROWS_AS(load_trie(path.string()), VersionMismatchError);
  }
  SUBCASE("not a trie") {
    std::ofstream(path, std::ios::binary) << "hello";
    CHECK_THROWS_AS(load_trie(path.string()), FormatError);
  }
  fs::remove(path);
}

TEST_CASE("lookups reject an empty prefix") {
  const auto trie = build_main_trie(kGoFixture);
  CHECK_THROWS_AS(mpc_lookup(trie, "", 3), PreconditionError);
}

}  // TEST_SUITE
