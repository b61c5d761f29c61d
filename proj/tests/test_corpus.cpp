#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "qac/corpus.hpp"
#include "qac/errors.hpp"
#include "qac/random.hpp"
#include "qac/utf8.hpp"

using namespace qac;

namespace {

LogEntry entry(const std::string& user, const std::string& text, std::int64_t ts) {
  return {user, {Query::from_normalized(text), ts}};
}

Session make_session(const std::string& user, std::vector<std::string> texts, std::int64_t start) {
  Session s{user, {}};
  for (auto& t : texts) s.queries.push_back({Query::from_normalized(t), start += 10});
  return s;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("normalize lowercases, trims and collapses whitespace") {
  auto r = normalize_query("  Google.COM ");
  REQUIRE(r);
  CHECK(r.query->text() == "google.com");

  r = normalize_query("New   York\tTimes");
  REQUIRE(r);
  CHECK(r.query->text() == "new york times");
  CHECK(r.query->words() == std::vector<std::string>{"new", "york", "times"});
}

TEST_CASE("normalize rejects empty, single-character and symbol-heavy queries") {
  auto r = normalize_query("   ");
  CHECK_FALSE(r);
  CHECK(r.reason == Rejection::empty);

  r = normalize_query("a");
  CHECK_FALSE(r);
  CHECK(r.reason == Rejection::too_short);

  // 2 alphanumerics out of 8 non-space characters.
  r = normalize_query("!!!???x1");
  CHECK_FALSE(r);
  CHECK(r.reason == Rejection::non_alnum_dominant);

  // Exactly half is not a majority.
  r = normalize_query("ab!?");
  CHECK_FALSE(r);
  CHECK(r.reason == Rejection::non_alnum_dominant);

  // Spaces do not count either way.
  CHECK(normalize_query("a b c !"));
}

TEST_CASE("prepare_log groups users, sorts by time and drops consecutive duplicates") {
  std::vector<RawLogRecord> raw = {
      {"u1", "Weather", 30}, {"u2", "maps", 5},     {"u1", "weather", 10},
      {"u1", "weather ", 20}, {"u1", "news", 40},   {"u2", "x", 6},
      {"u1", "weather", 50},
  };
  const auto entries = prepare_log(raw);
  std::vector<std::pair<std::string, std::string>> got;
  for (const auto& e : entries) got.emplace_back(e.user_id, e.item.query.text());
  const std::vector<std::pair<std::string, std::string>> want = {
      {"u1", "weather"}, {"u1", "news"}, {"u1", "weather"}, {"u2", "maps"}};
  CHECK(got == want);
}

TEST_CASE("segment_sessions applies the idle gap as a closed boundary") {
  constexpr std::int64_t minute = 60;
  SUBCASE("29 minutes keeps one session") {
    std::vector<LogEntry> e = {entry("u", "aa", 0), entry("u", "bb", 29 * minute)};
    const auto s = segment_sessions(e);
    REQUIRE(s.size() == 1);
    CHECK(s[0].queries.size() == 2);
    CHECK(s[0].start_ts() == 0);
    CHECK(s[0].end_ts() == 29 * minute);
  }
  SUBCASE("31 minutes leaves two singletons, both dropped") {
    std::vector<LogEntry> e = {entry("u", "aa", 0), entry("u", "bb", 31 * minute)};
    CHECK(segment_sessions(e).empty());
  }
  SUBCASE("exactly 30 minutes splits") {
    std::vector<LogEntry> e = {entry("u", "aa", 0), entry("u", "bb", 30 * minute)};
    CHECK(segment_sessions(e).empty());
  }
  SUBCASE("users never share a session") {
    std::vector<LogEntry> e = {entry("u", "aa", 0), entry("v", "bb", 1), entry("v", "cc", 2)};
    const auto s = segment_sessions(e);
    REQUIRE(s.size() == 1);
    CHECK(s[0].user_id == "v");
  }
}

TEST_CASE("segment_sessions rejects unsorted or interleaved input") {
  std::vector<LogEntry> unsorted = {entry("u", "aa", 10), entry("u", "bb", 5)};
  CHECK_THROWS_AS(segment_sessions(unsorted), PreconditionError);
  std::vector<LogEntry> interleaved = {entry("u", "aa", 1), entry("v", "bb", 2), entry("u", "cc", 3)};
  CHECK_THROWS_AS(segment_sessions(interleaved), PreconditionError);
  CHECK_THROWS_AS(segment_sessions(interleaved, 0), ConfigError);
}

TEST_CASE("segmenting the queries of finished sessions reproduces them") {
  std::vector<RawLogRecord> raw;
  std::mt19937_64 rng(3);
  std::int64_t t = 0;
  for (int i = 0; i < 300; ++i) {
    t += static_cast<std::int64_t>(uniform_index(rng, 3600));
    raw.push_back({"u" + std::to_string(i % 3), "query " + std::to_string(uniform_index(rng, 20)), t});
  }
  const auto sessions = segment_sessions(prepare_log(raw));
  std::vector<LogEntry> flat;
  for (const auto& s : sessions)
    for (const auto& q : s.queries) flat.push_back({s.user_id, q});
  // Sessions come out user by user, so the flattened stream is still valid input.
  const auto again = segment_sessions(flat);
  REQUIRE(again.size() == sessions.size());
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].user_id == sessions[i].user_id);
    REQUIRE(again[i].queries.size() == sessions[i].queries.size());
    for (std::size_t k = 0; k < again[i].queries.size(); ++k)
      CHECK(again[i].queries[k].query.text() == sessions[i].queries[k].query.text());
  }
}

TEST_CASE("prefix length distribution has the closed form") {
  const auto p = prefix_length_distribution(2, std::numbers::ln2);
  REQUIRE(p.size() == 2);
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(prefix_length_distribution(5, 0.0), ConfigError);
  CHECK_THROWS_AS(prefix_length_distribution(5, -1.0), ConfigError);
}

TEST_CASE("sample_prefix is deterministic and a prefix") {
  const auto q = Query::from_normalized("kindle e-reader");
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto p = sample_prefix(q, seed, 0.2);
    CHECK(p == sample_prefix(q, seed, 0.2));
    CHECK(!p.empty());
    CHECK(q.text().compare(0, p.size(), p) == 0);
  }
  CHECK_THROWS_AS(sample_prefix(q, 1, 0.0), ConfigError);
}

TEST_CASE("large lambda almost always yields one character") {
  const auto q = Query::from_normalized("google maps");
  int ones = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) ones += sample_prefix(q, seed, 50.0).size() == 1;
  CHECK(ones == 1000);
}

TEST_CASE("prefix lengths follow the truncated exponential (chi-square, alpha 0.01)") {
  const auto q = Query::from_normalized("abcdefghij klmnopqrs");
  REQUIRE(q.text().size() == 20);
  constexpr std::size_t kSamples = 100000;
  const auto probs = prefix_length_distribution(20, 0.2);
  std::vector<double> counts(20, 0.0);
  for (std::size_t i = 0; i < kSamples; ++i) counts[sample_prefix(q, derive_seed(99, i), 0.2).size() - 1] += 1.0;

  double stat = 0.0;
  for (std::size_t l = 0; l < 20; ++l) {
    const double expected = probs[l] * kSamples;
    stat += (counts[l] - expected) * (counts[l] - expected) / expected;
  }
  const boost::math::chi_squared dist(19.0);
  const double critical = boost::math::quantile(boost::math::complement(dist, 0.01));
  INFO("chi-square statistic " << stat << " critical " << critical);
  CHECK(stat < critical);
}

TEST_CASE("buckets by character length") {
  CHECK(bucket_of("go") == Bucket::B1_5);
  CHECK(bucket_of("abcde") == Bucket::B1_5);
  CHECK(bucket_of("abcdef") == Bucket::B6_10);
  CHECK(bucket_of("abcdefghij") == Bucket::B6_10);
  CHECK(bucket_of("kindle e-reader") == Bucket::B10PLUS);
  // Code points, not bytes.
  CHECK(bucket_of("\xc3\xa9\xc3\xa9\xc3\xa9") == Bucket::B1_5);
  CHECK_THROWS_AS(bucket_of(""), PreconditionError);
  for (auto b : kAllBuckets) CHECK(bucket_from_string(to_string(b)) == b);
}

TEST_CASE("build_examples turns each session into one example") {
  std::vector<Session> sessions = {make_session("u", {"aa bb", "cc dd"}, 100),
                                   make_session("u", {"q1", "q2", "q3", "q4", "q5"}, 500)};
  const auto ex = build_examples(sessions, 0.2, 11);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].session_queries == std::vector<std::string>{"aa bb"});
  CHECK(ex[0].target.text() == "cc dd");
  CHECK(ex[1].session_queries.size() == 4);
  CHECK(ex[1].target.text() == "q5");
  CHECK(ex[1].timestamp == sessions[1].end_ts());
  for (const auto& e : ex) CHECK(e.bucket == bucket_of(e.prefix));
}

TEST_CASE("a thousand sessions give a thousand valid examples") {
  std::vector<Session> sessions;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> texts;
    const auto n = 2 + uniform_index(rng, 4);
    for (std::uint64_t k = 0; k < n; ++k) texts.push_back("query number " + std::to_string(uniform_index(rng, 5000)));
    sessions.push_back(make_session("u" + std::to_string(i), texts, i * 10000));
  }
  const auto ex = build_examples(sessions, 0.2, 1);
  REQUIRE(ex.size() == 1000);
  std::size_t per_bucket[3] = {0, 0, 0};
  for (const auto& e : ex) {
    CHECK(!e.session_queries.empty());
    CHECK(e.target.text().compare(0, e.prefix.size(), e.prefix) == 0);
    ++per_bucket[static_cast<int>(e.bucket)];
  }
  CHECK(per_bucket[0] + per_bucket[1] + per_bucket[2] == 1000);
}

TEST_CASE("temporal split sizes and ordering") {
  std::vector<QacExample> ex(10);
  for (int i = 0; i < 10; ++i) {
    ex[i].timestamp = (i * 7) % 10;  // shuffled
    ex[i].prefix = std::to_string(i);
  }
  const auto s = temporal_split(ex, {0.8, 0.1, 0.1});
  CHECK(s.train.examples.size() == 8);
  CHECK(s.validation.examples.size() == 1);
  CHECK(s.test.examples.size() == 1);
  std::int64_t last = -1;
  for (const auto* split : {&s.train, &s.validation, &s.test})
    for (const auto& e : split->examples) {
      CHECK(e.timestamp >= last);
      last = e.timestamp;
    }

  std::vector<QacExample> same(5);
  for (int i = 0; i < 5; ++i) same[i].prefix = std::to_string(i);
  const auto t = temporal_split(same, {0.6, 0.2, 0.2});
  REQUIRE(t.train.examples.size() == 3);
  CHECK(t.train.examples[2].prefix == "2");
  CHECK(t.test.examples.front().prefix == "4");

  const auto empty = temporal_split({}, {});
  CHECK(empty.train.examples.empty());
  CHECK(empty.test.examples.empty());
  CHECK_THROWS_AS(temporal_split(ex, {0.5, 0.1, 0.1}), ConfigError);
}

TEST_CASE("log reader reports the offending line") {
  std::istringstream good("u1\tGoogle Maps\t100\nu2\tweather\t200\n");
  const auto records = read_log_tsv(good);
  REQUIRE(records.size() == 2);
  CHECK(records[0].query_text == "Google Maps");
  CHECK(records[1].timestamp == 200);

  std::istringstream bad("u1\tok\t1\nu2\tbroken line\n");
  CHECK_THROWS_WITH_AS(read_log_tsv(bad), doctest::Contains("line 2"), FormatError);
  std::istringstream negative("u1\tok\t-5\n");
  CHECK_THROWS_WITH_AS(read_log_tsv(negative), doctest::Contains("line 1"), FormatError);
}

TEST_CASE("frequency tables round-trip and report bad lines") {
  FrequencyTable table = {{"good", 5}, {"google", 10}};
  std::stringstream buf;
  write_frequency_tsv(buf, table);
  CHECK(read_frequency_tsv(buf) == table);

  std::istringstream empty("");
  CHECK(read_frequency_tsv(empty).empty());
  std::istringstream bad("google\t10\ngood\tmany\n");
  CHECK_THROWS_WITH_AS(read_frequency_tsv(bad), doctest::Contains("line 2"), FormatError);
}

TEST_CASE("examples round-trip through JSON lines") {
  std::vector<QacExample> ex(2);
  ex[0].session_queries = {"flights to goa", "goa beaches"};
  ex[0].prefix = "go";
  ex[0].target = Query::from_normalized("goa hotels");
  ex[0].bucket = Bucket::B1_5;
  ex[0].timestamp = 42;
  ex[0].seen = true;
  ex[1].session_queries = {"x y"};
  ex[1].prefix = "kindle e-reader";
  ex[1].target = Query::from_normalized("kindle e-reader price");
  ex[1].bucket = Bucket::B10PLUS;
  ex[1].timestamp = 43;

  std::stringstream buf;
  write_examples_jsonl(buf, ex);
  const auto text = buf.str();
  const auto back = read_examples_jsonl(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[0].session_queries == ex[0].session_queries);
  CHECK(back[0].target.text() == "goa hotels");
  CHECK(back[0].seen == std::optional<bool>(true));
  CHECK_FALSE(back[1].seen.has_value());
  CHECK(back[1].bucket == Bucket::B10PLUS);

  std::stringstream again;
  write_examples_jsonl(again, back);
  CHECK(again.str() == text);
}

TEST_CASE("count_queries respects the cutoff") {
  std::vector<LogEntry> e = {entry("u", "aa", 1), entry("u", "bb", 2), entry("v", "aa", 3), entry("v", "cc", 9)};
  CHECK(count_queries(e) == FrequencyTable{{"aa", 2}, {"bb", 1}, {"cc", 1}});
  CHECK(count_queries(e, 3) == FrequencyTable{{"aa", 2}, {"bb", 1}});
}

TEST_CASE("split statistics list every bucket") {
  std::vector<QacExample> ex(3);
  ex[0].prefix = "go";
  ex[0].bucket = Bucket::B1_5;
  ex[0].seen = true;
  ex[1].prefix = "kindle e-reader";
  ex[1].bucket = Bucket::B10PLUS;
  ex[1].seen = false;
  ex[2].prefix = "abcdefg";
  ex[2].bucket = Bucket::B6_10;
  Splits s;
  s.test.examples = ex;
  const auto text = format_split_statistics(s);
  for (const char* label : {"1-5", "6-10", "10+", "train", "test"}) CHECK(text.find(label) != std::string::npos);
}

}  // TEST_SUITE
