#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qac {

struct RawLogRecord {
  std::string user_id;
  std::string query_text;
  std::int64_t timestamp = 0;
};

/// A normalized query: lowercase, trimmed, single internal spaces.
class Query {
 public:
  Query() = default;

  /// Wraps text that is already normalized. Does not re-validate.
  static Query from_normalized(std::string text);

  const std::string& text() const { return text_; }
  const std::vector<std::string>& words() const { return words_; }

  bool operator==(const Query& other) const { return text_ == other.text_; }

 private:
  std::string text_;
  std::vector<std::string> words_;
};

enum class Rejection { empty, too_short, non_alnum_dominant };

const char* to_string(Rejection reason);

struct NormalizeResult {
  std::optional<Query> query;
  Rejection reason = Rejection::empty;  // meaningful only when !query

  explicit operator bool() const { return query.has_value(); }
};

NormalizeResult normalize_query(std::string_view raw);

struct TimedQuery {
  Query query;
  std::int64_t timestamp = 0;
};

/// One log line after normalization.
struct LogEntry {
  std::string user_id;
  TimedQuery item;
};

struct Session {
  std::string user_id;
  std::vector<TimedQuery> queries;

  std::int64_t start_ts() const { return queries.front().timestamp; }
  std::int64_t end_ts() const { return queries.back().timestamp; }
};

inline constexpr std::int64_t kDefaultIdleGapSeconds = 30 * 60;

/// Normalizes every record, drops rejects, groups by user (first-appearance
/// order), sorts each user stream by timestamp (stable) and removes
/// consecutive duplicate queries within a user stream.
std::vector<LogEntry> prepare_log(std::span<const RawLogRecord> records);

/// Splits user streams at gaps >= idle_gap_seconds and keeps sessions with
/// at least two queries. Throws PreconditionError unless entries are grouped
/// by user and ascending in time within each group.
std::vector<Session> segment_sessions(std::span<const LogEntry> entries,
                                      std::int64_t idle_gap_seconds = kDefaultIdleGapSeconds);

/// Prefix of `query` whose length L in [1, |query|] is drawn with
/// P(L = l) proportional to exp(-lambda * l). Deterministic in `seed`.
std::string sample_prefix(const Query& query, std::uint64_t seed, double lambda);

/// Closed-form P(L = l) for l = 1..length (index 0 holds l = 1).
std::vector<double> prefix_length_distribution(std::size_t length, double lambda);

enum class Bucket { B1_5, B6_10, B10PLUS };

inline constexpr std::array<Bucket, 3> kAllBuckets{Bucket::B1_5, Bucket::B6_10, Bucket::B10PLUS};

const char* to_string(Bucket bucket);
Bucket bucket_from_string(std::string_view name);
Bucket bucket_of(std::string_view prefix);

struct QacExample {
  std::vector<std::string> session_queries;  // earliest to latest
  std::string prefix;
  Query target;
  Bucket bucket = Bucket::B1_5;
  std::optional<bool> seen;
  std::int64_t timestamp = 0;
};

inline constexpr double kDefaultPrefixLambda = 0.2;

/// One example per session: all but the last query form the context, the
/// last query is the target, and the prefix is sampled from the target.
std::vector<QacExample> build_examples(std::span<const Session> sessions, double lambda,
                                       std::uint64_t seed);

struct DatasetSplit {
  std::string name;
  std::vector<QacExample> examples;
};

struct SplitFractions {
  double train = 0.98;
  double validation = 0.01;
  double test = 0.01;
};

struct Splits {
  DatasetSplit train{"train", {}};
  DatasetSplit validation{"validation", {}};
  DatasetSplit test{"test", {}};
};

/// Stable sort by timestamp, then cut at the cumulative fraction boundaries.
Splits temporal_split(std::vector<QacExample> examples, SplitFractions fractions = {});

using FrequencyTable = std::vector<std::pair<std::string, std::uint64_t>>;

/// Query frequencies over entries with timestamp <= `until` (all when empty),
/// sorted by query text.
FrequencyTable count_queries(std::span<const LogEntry> entries,
                             std::optional<std::int64_t> until = std::nullopt);

// Tab-separated `user_id \t query_text \t unix_timestamp`. Errors name the line.
std::vector<RawLogRecord> read_log_tsv(std::istream& in);
std::vector<RawLogRecord> read_log_tsv(const std::string& path);

// Tab-separated `query \t frequency`.
FrequencyTable read_frequency_tsv(std::istream& in);
FrequencyTable read_frequency_tsv(const std::string& path);
void write_frequency_tsv(std::ostream& out, const FrequencyTable& table);

void write_examples_jsonl(std::ostream& out, std::span<const QacExample> examples);
std::vector<QacExample> read_examples_jsonl(std::istream& in);
std::vector<QacExample> read_examples_jsonl(const std::string& path);

/// Total / seen / unseen counts per bucket for each split, laid out like a
/// prefix distribution table. Unlabelled examples count as seen.
std::string format_split_statistics(const Splits& splits);

}  // namespace qac
