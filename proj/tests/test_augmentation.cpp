#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "qac/augmentation.hpp"
#include "qac/errors.hpp"
#include "qac/random.hpp"

using namespace qac;

namespace {

std::size_t count_of(const std::vector<int>& ids, int id) {
  return static_cast<std::size_t>(std::count(ids.begin(), ids.end(), id));
}

std::size_t count_substr(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("augmentation") {

TEST_CASE("format_input lays out session, trie context and prefix") {
  CHECK(format_input({{"flights to goa"}, {"google"}, "go", SuggestionSource::Main}) ==
        "flights to goa [SEP] google [SEP] go");
  CHECK(format_input({{}, {}, "go", SuggestionSource::None}) == "[SEP] [SEP] go");

  const auto text = format_input({{"a1", "a2", "a3"}, {"c1", "c2", "c3"}, "p", SuggestionSource::Main});
  CHECK(text == "a1 [QSEP] a2 [QSEP] a3 [SEP] c1 [QSEP] c2 [QSEP] c3 [SEP] p");
  CHECK(count_substr(text, "[SEP]") == 2);
  CHECK(count_substr(text, "[QSEP]") == 4);
}

TEST_CASE("special token ids sit below the alphabet") {
  const auto tok = Tokenizer::default_tokenizer();
  for (int id : {token::kPad, token::kBos, token::kEos, token::kSep, token::kQsep, token::kUnk})
    CHECK(id < token::kFirstCharacter);
  CHECK(tok.id_of(U' ') >= token::kFirstCharacter);
  CHECK(tok.vocab_size() == token::kFirstCharacter + static_cast<int>(tok.alphabet().size()));
  CHECK_THROWS_AS(Tokenizer(U"abca"), ConfigError);
}

TEST_CASE("tokenize and detokenize") {
  const auto tok = Tokenizer::default_tokenizer();
  const auto go = tok.tokenize("go");
  CHECK(go == std::vector<int>{tok.id_of(U'g'), tok.id_of(U'o')});
  CHECK(tok.detokenize(go) == "go");
  CHECK(tok.tokenize("g\xc3\xb6") == std::vector<int>{tok.id_of(U'g'), token::kUnk});

  const auto src = tok.tokenize("flights to goa [SEP] google [SEP] go");
  CHECK(count_of(src, token::kSep) == 2);
  CHECK(src.size() == std::string("flights to goa").size() + 1 + std::string("google").size() + 1 + 2);
  CHECK(tok.detokenize(src) == "flights to goa [SEP] google [SEP] go");
  CHECK(tok.detokenize(tok.tokenize("[SEP] [SEP] go")) == "[SEP] [SEP] go");
}

TEST_CASE("round trip holds on random in-alphabet strings") {
  const auto tok = Tokenizer::default_tokenizer();
  const auto& alphabet = tok.alphabet();
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    std::u32string s;
    const auto len = uniform_index(rng, 30);
    for (std::uint64_t k = 0; k < len; ++k) s.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    std::string utf8;
    for (char32_t c : s) utf8.push_back(static_cast<char>(c));
    const auto ids = tok.tokenize(utf8);
    REQUIRE(ids.size() == s.size());
    REQUIRE(tok.detokenize(ids) == utf8);
  }
}

TEST_CASE("format_input is injective on random triples") {
  const auto tok = Tokenizer::default_tokenizer();
  std::mt19937_64 rng(9);
  auto word = [&] {
    std::string w;
    const auto len = 1 + uniform_index(rng, 3);
    for (std::uint64_t k = 0; k < len; ++k) w.push_back(static_cast<char>('a' + uniform_index(rng, 3)));
    return w;
  };
  std::map<std::vector<int>, std::string> seen;
  for (int i = 0; i < 2000; ++i) {
    AugmentedInput in;
    for (std::uint64_t k = uniform_index(rng, 3); k > 0; --k) in.session_queries.push_back(word());
    for (std::uint64_t k = uniform_index(rng, 3); k > 0; --k) in.trie_completions.push_back(word());
    in.prefix = word();
    std::string key;
    for (auto& q : in.session_queries) key += q + "|";
    key += "#";
    for (auto& c : in.trie_completions) key += c + "|";
    key += "#" + in.prefix;
    const auto ids = tok.tokenize(format_input(in));
    auto [it, inserted] = seen.emplace(ids, key);
    if (!inserted) CHECK(it->second == key);
  }
}

TEST_CASE("short sources are left alone") {
  const auto tok = Tokenizer::default_tokenizer();
  AugmentedInput in{{std::string(60, 'a'), std::string(60, 'b')}, {"c1", "c2"}, "go", SuggestionSource::Main};
  const auto ids = tok.tokenize(format_input(in));
  REQUIRE(ids.size() < 150);
  CHECK(truncate_source(ids) == ids);
}

TEST_CASE("truncation drops the oldest session queries first, then low-rank completions") {
  const auto tok = Tokenizer::default_tokenizer();
  AugmentedInput in;
  for (int i = 0; i < 10; ++i) in.session_queries.push_back("query " + std::string(1, char('a' + i)) + std::string(20, 'x'));
  in.trie_completions = {"first", "second", "third"};
  in.prefix = "pre fix";
  const auto ids = tok.tokenize(format_input(in));
  REQUIRE(ids.size() > kMaxSourceLength);

  const auto cut = truncate_source(ids);
  CHECK(cut.size() <= kMaxSourceLength);
  CHECK(count_of(cut, token::kSep) == 2);
  const auto text = tok.detokenize(cut);
  CHECK(text.find("query a") == std::string::npos);
  CHECK(text.find("query j") != std::string::npos);
  CHECK(text.size() >= 7);
  CHECK(text.substr(text.size() - 7) == "pre fix");
  CHECK(text.find("first [QSEP] second [QSEP] third") != std::string::npos);

  // With a tight budget the session goes entirely, then completions from the end.
  const auto tight = truncate_source(ids, 2 + 7 + 5 + 1 + 6);
  CHECK(tok.detokenize(tight) == "[SEP] first [QSEP] second [SEP] pre fix");
}

TEST_CASE("an oversized prefix is an input error") {
  const auto tok = Tokenizer::default_tokenizer();
  const auto ids = tok.tokenize(format_input({{}, {}, std::string(250, 'p'), SuggestionSource::None}));
  CHECK_THROWS_AS(truncate_source(ids), InputError);
  CHECK_THROWS_AS(truncate_source(tok.tokenize("no separators")), PreconditionError);
}

TEST_CASE("dropping the trie segment equals the no-trie-context encoding") {
  const auto tok = Tokenizer::default_tokenizer();
  const auto main = build_main_trie({{"google", 10}, {"google.com", 7}, {"good", 5}});
  const SuffixTrie synth;
  const std::vector<std::string> session = {"flights to goa"};
  const auto with = make_augmented_input(session, "go", &main, &synth, {3, true, true});
  const auto without = make_augmented_input(session, "go", &main, &synth, {3, true, false});
  CHECK(with.trie_completions == std::vector<std::string>{"google", "google.com", "good"});
  CHECK(with.source_tag == SuggestionSource::Main);
  CHECK(without.trie_completions.empty());
  CHECK(drop_trie_context(encode_source(tok, with)) == encode_source(tok, without));

  const auto no_session = make_augmented_input(session, "go", &main, &synth, {1, false, true});
  CHECK(no_session.session_queries.empty());
  CHECK(no_session.trie_completions == std::vector<std::string>{"google"});
  CHECK(format_input(no_session) == "[SEP] google [SEP] go");
}

TEST_CASE("missing tries give an empty context") {
  const auto in = make_augmented_input({}, "go", nullptr, nullptr, {});
  CHECK(in.trie_completions.empty());
  CHECK(in.source_tag == SuggestionSource::None);
}

}  // TEST_SUITE
