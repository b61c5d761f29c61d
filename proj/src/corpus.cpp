#include "qac/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "qac/errors.hpp"
#include "qac/random.hpp"
#include "qac/utf8.hpp"

namespace qac {

namespace {

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v';
}

// Code points outside ASCII count as alphanumeric: the dominance filter
// targets punctuation noise, not non-Latin scripts.
bool is_alnum(char32_t c) {
  if (c >= 0x80) return true;
  return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9');
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find(' ', start);
    if (end == std::string_view::npos) {
      words.emplace_back(text.substr(start));
      break;
    }
    if (end > start) words.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto end = line.find('\t', start);
    fields.push_back(line.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return fields;
}

template <class T>
bool parse_integer(std::string_view text, T& out) {
  while (!text.empty() && (text.back() == '\r' || text.back() == ' ')) text.remove_suffix(1);
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return in;
}

}  // namespace

Query Query::from_normalized(std::string text) {
  Query q;
  q.words_ = split_words(text);
  q.text_ = std::move(text);
  return q;
}

const char* to_string(Rejection reason) {
  switch (reason) {
    case Rejection::empty: return "empty";
    case Rejection::too_short: return "too_short";
    case Rejection::non_alnum_dominant: return "non_alnum_dominant";
  }
  return "unknown";
}

NormalizeResult normalize_query(std::string_view raw) {
  const auto cps = utf8::decode(raw);
  std::u32string cleaned;
  cleaned.reserve(cps.size());
  bool pending_space = false;
  for (char32_t c : cps) {
    if (is_space(c)) {
      pending_space = !cleaned.empty();
      continue;
    }
    if (pending_space) cleaned.push_back(U' ');
    pending_space = false;
    if (c >= U'A' && c <= U'Z') c = c - U'A' + U'a';
    cleaned.push_back(c);
  }

  NormalizeResult result;
  if (cleaned.empty()) {
    result.reason = Rejection::empty;
    return result;
  }
  if (cleaned.size() < 2) {
    result.reason = Rejection::too_short;
    return result;
  }
  std::size_t non_space = 0;
  std::size_t alnum = 0;
  for (char32_t c : cleaned) {
    if (c == U' ') continue;
    ++non_space;
    if (is_alnum(c)) ++alnum;
  }
  if (2 * alnum <= non_space) {
    result.reason = Rejection::non_alnum_dominant;
    return result;
  }
  result.query = Query::from_normalized(utf8::encode(cleaned));
  return result;
}

std::vector<LogEntry> prepare_log(std::span<const RawLogRecord> records) {
  std::unordered_map<std::string, std::size_t> user_index;
  std::vector<std::vector<LogEntry>> streams;
  for (const auto& record : records) {
    auto normalized = normalize_query(record.query_text);
    if (!normalized) continue;
    auto [it, inserted] = user_index.try_emplace(record.user_id, streams.size());
    if (inserted) streams.emplace_back();
    streams[it->second].push_back(
        LogEntry{record.user_id, TimedQuery{std::move(*normalized.query), record.timestamp}});
  }

  std::vector<LogEntry> out;
  out.reserve(records.size());
  for (auto& stream : streams) {
    std::stable_sort(stream.begin(), stream.end(), [](const LogEntry& a, const LogEntry& b) {
      return a.item.timestamp < b.item.timestamp;
    });
    const std::string* previous = nullptr;
    for (auto& entry : stream) {
      if (previous != nullptr && *previous == entry.item.query.text()) continue;
      out.push_back(std::move(entry));
      previous = &out.back().item.query.text();
    }
  }
  return out;
}

std::vector<Session> segment_sessions(std::span<const LogEntry> entries,
                                      std::int64_t idle_gap_seconds) {
  if (idle_gap_seconds <= 0) throw ConfigError("idle gap must be positive");

  std::vector<Session> sessions;
  std::unordered_map<std::string, bool> finished_users;
  Session current;

  auto flush = [&] {
    if (current.queries.size() >= 2) sessions.push_back(std::move(current));
    current = Session{};
  };

  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& entry = entries[i];
    if (entry.user_id.empty()) throw PreconditionError("empty user id at record " + std::to_string(i));
    if (entry.item.timestamp < 0)
      throw PreconditionError("negative timestamp at record " + std::to_string(i));

    const bool same_user = !current.queries.empty() && current.user_id == entry.user_id;
    if (!same_user && !current.queries.empty()) {
      finished_users[current.user_id] = true;
      flush();
    }
    if (!same_user && finished_users.count(entry.user_id) != 0)
      throw PreconditionError("records for user '" + entry.user_id + "' are not contiguous");

    if (same_user) {
      const auto gap = entry.item.timestamp - current.queries.back().timestamp;
      if (gap < 0)
        throw PreconditionError("records for user '" + entry.user_id +
                                "' are not sorted by timestamp at record " + std::to_string(i));
      if (gap >= idle_gap_seconds) {
        flush();
      }
    }
    current.user_id = entry.user_id;
    current.queries.push_back(entry.item);
  }
  flush();
  return sessions;
}

std::vector<double> prefix_length_distribution(std::size_t length, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
  std::vector<double> weights(length);
  double total = 0.0;
  for (std::size_t l = 1; l <= length; ++l) {
    // Shifted by one so that the l = 1 weight is exactly 1 for any lambda.
    weights[l - 1] = std::exp(-lambda * static_cast<double>(l - 1));
    total += weights[l - 1];
  }
  for (auto& w : weights) w /= total;
  return weights;
}

std::string sample_prefix(const Query& query, std::uint64_t seed, double lambda) {
  const auto cps = utf8::decode(query.text());
  if (cps.size() < 2) throw PreconditionError("query shorter than two characters");
  const auto probabilities = prefix_length_distribution(cps.size(), lambda);

  std::mt19937_64 rng(seed);
  const double u = uniform01(rng);
  std::size_t length = cps.size();
  double cumulative = 0.0;
  for (std::size_t l = 1; l <= cps.size(); ++l) {
    cumulative += probabilities[l - 1];
    if (u < cumulative) {
      length = l;
      break;
    }
  }
  return utf8::encode(std::u32string_view(cps).substr(0, length));
}

const char* to_string(Bucket bucket) {
  switch (bucket) {
    case Bucket::B1_5: return "1-5";
    case Bucket::B6_10: return "6-10";
    case Bucket::B10PLUS: return "10+";
  }
  return "?";
}

Bucket bucket_from_string(std::string_view name) {
  for (auto b : kAllBuckets)
    if (name == to_string(b)) return b;
  throw FormatError("unknown bucket '" + std::string(name) + "'");
}

Bucket bucket_of(std::string_view prefix) {
  const auto length = utf8::length(prefix);
  if (length == 0) throw PreconditionError("empty prefix has no bucket");
  if (length <= 5) return Bucket::B1_5;
  if (length <= 10) return Bucket::B6_10;
  return Bucket::B10PLUS;
}

std::vector<QacExample> build_examples(std::span<const Session> sessions, double lambda,
                                       std::uint64_t seed) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  std::vector<QacExample> examples;
  examples.reserve(sessions.size());
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& session = sessions[i];
    if (session.queries.size() < 2) throw PreconditionError("session with fewer than two queries");
    QacExample ex;
    for (std::size_t k = 0; k + 1 < session.queries.size(); ++k)
      ex.session_queries.push_back(session.queries[k].query.text());
    const auto& last = session.queries.back();
    ex.target = last.query;
    ex.prefix = sample_prefix(last.query, derive_seed(seed, i), lambda);
    ex.bucket = bucket_of(ex.prefix);
    ex.timestamp = last.timestamp;
    examples.push_back(std::move(ex));
  }
  return examples;
}

Splits temporal_split(std::vector<QacExample> examples, SplitFractions fractions) {
  const double sum = fractions.train + fractions.validation + fractions.test;
  if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");

  std::stable_sort(examples.begin(), examples.end(),
                   [](const QacExample& a, const QacExample& b) { return a.timestamp < b.timestamp; });
  const auto n = static_cast<double>(examples.size());
  const auto train_end = static_cast<std::size_t>(std::llround(n * fractions.train));
  const auto val_end = std::min(
      examples.size(),
      static_cast<std::size_t>(std::llround(n * (fractions.train + fractions.validation))));

  Splits splits;
  auto move_range = [&](std::size_t from, std::size_t to, DatasetSplit& split) {
    split.examples.assign(std::make_move_iterator(examples.begin() + static_cast<long>(from)),
                          std::make_move_iterator(examples.begin() + static_cast<long>(to)));
  };
  move_range(0, std::min(train_end, examples.size()), splits.train);
  move_range(std::min(train_end, examples.size()), val_end, splits.validation);
  move_range(val_end, examples.size(), splits.test);
  return splits;
}

FrequencyTable count_queries(std::span<const LogEntry> entries, std::optional<std::int64_t> until) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& entry : entries) {
    if (until && entry.item.timestamp > *until) continue;
    ++counts[entry.item.query.text()];
  }
  return FrequencyTable(counts.begin(), counts.end());
}

std::vector<RawLogRecord> read_log_tsv(std::istream& in) {
  std::vector<RawLogRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw FormatError("line " + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                        std::to_string(fields.size()));
    RawLogRecord record;
    record.user_id = std::move(fields[0]);
    record.query_text = std::move(fields[1]);
    if (record.user_id.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty user id");
    if (!parse_integer(fields[2], record.timestamp) || record.timestamp < 0)
      throw FormatError("line " + std::to_string(line_no) + ": invalid timestamp '" + fields[2] + "'");
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<RawLogRecord> read_log_tsv(const std::string& path) {
  auto in = open_input(path);
  try {
    return read_log_tsv(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

FrequencyTable read_frequency_tsv(std::istream& in) {
  std::map<std::string, std::uint64_t> counts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos)
      throw FormatError("line " + std::to_string(line_no) + ": expected 'query<TAB>frequency'");
    std::uint64_t freq = 0;
    if (!parse_integer(std::string_view(line).substr(tab + 1), freq) || freq == 0)
      throw FormatError("line " + std::to_string(line_no) + ": invalid frequency '" +
                        line.substr(tab + 1) + "'");
    auto query = line.substr(0, tab);
    if (query.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty query");
    counts[std::move(query)] += freq;
  }
  return FrequencyTable(counts.begin(), counts.end());
}

FrequencyTable read_frequency_tsv(const std::string& path) {
  auto in = open_input(path);
  try {
    return read_frequency_tsv(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_frequency_tsv(std::ostream& out, const FrequencyTable& table) {
  for (const auto& [query, freq] : table) out << query << '\t' << freq << '\n';
}

void write_examples_jsonl(std::ostream& out, std::span<const QacExample> examples) {
  for (const auto& ex : examples) {
    nlohmann::ordered_json j;
    j["session_queries"] = ex.session_queries;
    j["prefix"] = ex.prefix;
    j["target"] = ex.target.text();
    j["timestamp"] = ex.timestamp;
    j["bucket"] = to_string(ex.bucket);
    if (ex.seen) j["seen"] = *ex.seen;
    out << j.dump() << '\n';
  }
}

std::vector<QacExample> read_examples_jsonl(std::istream& in) {
  std::vector<QacExample> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      QacExample ex;
      ex.session_queries = j.at("session_queries").get<std::vector<std::string>>();
      ex.prefix = j.at("prefix").get<std::string>();
      ex.target = Query::from_normalized(j.at("target").get<std::string>());
      ex.timestamp = j.at("timestamp").get<std::int64_t>();
      ex.bucket = j.contains("bucket") ? bucket_from_string(j["bucket"].get<std::string>())
                                       : bucket_of(ex.prefix);
      if (j.contains("seen")) ex.seen = j["seen"].get<bool>();
      if (ex.prefix.empty() || ex.target.text().compare(0, ex.prefix.size(), ex.prefix) != 0)
        throw FormatError("prefix is not a prefix of target");
      examples.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return examples;
}

std::vector<QacExample> read_examples_jsonl(const std::string& path) {
  auto in = open_input(path);
  try {
    return read_examples_jsonl(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::string format_split_statistics(const Splits& splits) {
  struct Counts {
    std::size_t total = 0, seen = 0, unseen = 0;
  };
  auto tally = [](const DatasetSplit& split) {
    std::array<Counts, 4> rows{};  // total row, then one per bucket
    for (const auto& ex : split.examples) {
      const bool seen = ex.seen.value_or(true);
      for (auto* row : {&rows[0], &rows[1 + static_cast<int>(ex.bucket)]}) {
        ++row->total;
        ++(seen ? row->seen : row->unseen);
      }
    }
    return rows;
  };
  const std::array<std::array<Counts, 4>, 3> table{tally(splits.train), tally(splits.validation),
                                                   tally(splits.test)};
  std::ostringstream out;
  out << std::left << std::setw(8) << "length";
  for (const char* name : {"train", "validation", "test"})
    out << " | " << std::setw(14) << (std::string(name) + ".T") << std::setw(8) << "seen" << std::setw(8)
        << "unseen";
  out << '\n';
  const std::array<const char*, 4> labels{"total", "1-5", "6-10", "10+"};
  for (std::size_t r = 0; r < 4; ++r) {
    out << std::setw(8) << labels[r];
    for (const auto& split : table)
      out << " | " << std::setw(14) << split[r].total << std::setw(8) << split[r].seen << std::setw(8)
          << split[r].unseen;
    out << '\n';
  }
  return out.str();
}

}  // namespace qac
