#include "qac/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "qac/errors.hpp"
#include "qac/random.hpp"

namespace qac {

namespace {

const std::vector<std::string> kTopics = {"music", "news", "games", "recipes", "weather", "movies", "sports", "tickets"};

std::vector<std::string> make_entities(std::size_t count, std::mt19937_64& rng) {
  static constexpr std::string_view kConsonants = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  std::set<std::string> taken(kTopics.begin(), kTopics.end());
  std::vector<std::string> out;
  out.reserve(count);
  while (out.size() < count) {
    const auto syllables = 2 + uniform_index(rng, 2);
    std::string name;
    for (std::size_t s = 0; s < syllables; ++s) {
      name.push_back(kConsonants[uniform_index(rng, kConsonants.size())]);
      name.push_back(kVowels[uniform_index(rng, kVowels.size())]);
    }
    if (taken.insert(name).second) out.push_back(std::move(name));
  }
  return out;
}

class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double exponent) : cdf_(n) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += 1.0 / std::pow(static_cast<double>(i + 1), exponent);
      cdf_[i] = total;
    }
    for (auto& c : cdf_) c /= total;
  }

  double weight(std::size_t i) const { return i == 0 ? cdf_[0] : cdf_[i] - cdf_[i - 1]; }

  std::size_t sample(std::mt19937_64& rng) const {
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace

void SyntheticCorpusConfig::validate() const {
  if (sessions == 0 || users == 0 || entities == 0) throw ConfigError("synthetic corpus sizes must be positive");
  if (topics_per_entity == 0 || topics_per_entity > kTopics.size())
    throw ConfigError("topics_per_entity must be in 1.." + std::to_string(kTopics.size()));
  if (min_context == 0 || min_context > max_context) throw ConfigError("need 1 <= min_context <= max_context");
  if (zipf_exponent <= 0.0) throw ConfigError("zipf exponent must be positive");
  if (novel_rate < 0.0 || novel_rate > 1.0) throw ConfigError("novel_rate must be in [0, 1]");
  if (background_scale == 0) throw ConfigError("background scale must be positive");
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusConfig& config) {
  config.validate();
  std::mt19937_64 rng(derive_seed(config.seed, 0));

  SyntheticCorpus corpus;
  corpus.topics = kTopics;
  corpus.entities = make_entities(config.entities, rng);
  const ZipfSampler popularity(config.entities, config.zipf_exponent);

  std::map<std::string, std::uint64_t> background;
  std::vector<std::vector<std::pair<std::size_t, std::uint64_t>>> by_topic(kTopics.size());
  std::vector<std::size_t> topic_order(kTopics.size());
  for (std::size_t e = 0; e < config.entities; ++e) {
    for (std::size_t t = 0; t < topic_order.size(); ++t) topic_order[t] = t;
    deterministic_shuffle(topic_order.begin(), topic_order.end(), rng);
    for (std::size_t k = 0; k < config.topics_per_entity; ++k) {
      const double jitter = 0.5 + uniform01(rng);
      const auto count = static_cast<std::uint64_t>(
          std::llround(popularity.weight(e) * jitter * static_cast<double>(config.background_scale) *
                       static_cast<double>(config.entities)));
      const auto clamped = std::max<std::uint64_t>(count, 1);
      background[corpus.entities[e] + " " + kTopics[topic_order[k]]] += clamped;
      by_topic[topic_order[k]].emplace_back(e, clamped);
    }
  }
  corpus.background.assign(background.begin(), background.end());

  std::vector<std::vector<double>> topic_cdf(kTopics.size());
  for (std::size_t t = 0; t < kTopics.size(); ++t) {
    double total = 0.0;
    for (const auto& [e, count] : by_topic[t]) topic_cdf[t].push_back(total += static_cast<double>(count));
    for (auto& c : topic_cdf[t]) c /= total;
  }
  auto known_entity = [&](std::size_t t, std::mt19937_64& r) {
    const auto& cdf = topic_cdf[t];
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), uniform01(r));
    return by_topic[t][std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1)].first;
  };

  // Sessions are spread over time round-robin across users; consecutive
  // sessions of one user sit far beyond the idle gap.
  constexpr std::int64_t kSessionSpacing = 4000;
  constexpr std::int64_t kQuerySpacing = 45;
  std::mt19937_64 session_rng(derive_seed(config.seed, 1));
  for (std::size_t s = 0; s < config.sessions; ++s) {
    const auto user = "u" + std::to_string(s % config.users);
    const auto topic_id = uniform_index(session_rng, kTopics.size());
    const auto& topic = kTopics[topic_id];
    const auto context = config.min_context + uniform_index(session_rng, config.max_context - config.min_context + 1);
    std::int64_t ts = config.start_timestamp + static_cast<std::int64_t>(s) * kSessionSpacing;
    for (std::size_t q = 0; q <= context; ++q) {
      const bool novel = uniform01(session_rng) < config.novel_rate || by_topic[topic_id].empty();
      const auto& entity = corpus.entities[novel ? popularity.sample(session_rng) : known_entity(topic_id, session_rng)];
      corpus.log.push_back({user, entity + " " + topic, ts});
      ts += kQuerySpacing;
    }
  }
  return corpus;
}

}  // namespace qac
