#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "sarcnet/errors.hpp"
#include "sarcnet/layers.hpp"
#include "sarcnet/random.hpp"
#include "sarcnet/stopwords.hpp"

namespace sarcnet {

struct HeadlineRecord {
  std::string headline;
  bool is_sarcastic = false;
  std::string article_link;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace detail

/// Reads the headline corpus: one JSON object per line with keys
/// is_sarcastic (0/1), headline and article_link. Blank lines are skipped.
inline std::vector<HeadlineRecord> parse_dataset(std::istream& in) {
  std::vector<HeadlineRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!obj.is_object() || !obj.contains("is_sarcastic") || !obj.contains("headline") ||
        !obj.contains("article_link"))
      throw ParseError("expected an object with is_sarcastic, headline and article_link", lineno);
    const auto& label = obj["is_sarcastic"];
    if (!label.is_number_integer() || (label.get<std::int64_t>() != 0 && label.get<std::int64_t>() != 1))
      throw ValidationError("unknown label value " + label.dump() + " on line " + std::to_string(lineno));
    if (!obj["headline"].is_string() || !obj["article_link"].is_string())
      throw ParseError("headline and article_link must be strings", lineno);
    HeadlineRecord rec{obj["headline"].get<std::string>(), label.get<std::int64_t>() == 1,
                       obj["article_link"].get<std::string>()};
    if (detail::trim(rec.headline).empty())
      throw ValidationError("empty headline on line " + std::to_string(lineno));
    records.push_back(std::move(rec));
  }
  return records;
}

inline std::vector<HeadlineRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return parse_dataset(in);
}

/// Lowercases, splits on whitespace and strips leading/trailing ASCII
/// punctuation from each token. Inner characters (apostrophes, hyphens,
/// asterisks) survive, so "k-pop" and "sh*t" stay whole.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (in >> raw) {
    std::size_t b = 0, e = raw.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(raw[e - 1]))) --e;
    if (b == e) continue;
    std::string tok = raw.substr(b, e - b);
    for (auto& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnknown = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary() : tokens_{std::string(kPadToken), std::string(kUnknownToken)} {}

  /// Rebuilds from an id-ordered token list whose first two entries are the
  /// reserved tokens.
  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnknownToken)
      throw FormatError("vocabulary must start with the reserved <pad> and <unk> entries");
    Vocabulary v;
    v.tokens_.clear();
    for (auto& t : tokens) v.add(std::move(t));
    return v;
  }

  std::size_t size() const noexcept { return tokens_.size(); }

  TokenId id(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? kUnknown : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<TokenId> encode(const std::vector<std::string>& toks) const {
    std::vector<TokenId> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(id(t));
    return ids;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  friend Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>&, std::size_t);

  void add(std::string token) {
    if (index_.count(token)) throw FormatError("duplicate vocabulary token '" + token + "'");
    index_.emplace(token, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(token));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Tokens seen at least min_count times, ordered by descending frequency and
/// then lexicographically. Ids 0 and 1 are reserved.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be at least 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus)
    for (const auto& tok : sentence) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count && tok != Vocabulary::kPadToken && tok != Vocabulary::kUnknownToken) kept.emplace_back(tok, n);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  v.index_.emplace(std::string(Vocabulary::kPadToken), Vocabulary::kPad);
  v.index_.emplace(std::string(Vocabulary::kUnknownToken), Vocabulary::kUnknown);
  for (auto& [tok, n] : kept) v.add(std::move(tok));
  return v;
}

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
  std::uint64_t seed = 0;
};

/// Seeded shuffle of 0..n-1 cut into contiguous train/val/test blocks. The
/// val and test blocks each hold round(n/10) records; train gets the rest.
inline SplitIndices split_dataset(std::size_t n, std::uint64_t seed) {
  if (n < 10) throw DomainError("split_dataset needs at least 10 records, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const std::size_t tenth = (n + 5) / 10;
  const std::size_t n_train = n - 2 * tenth;
  SplitIndices s;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + tenth));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + tenth), order.end());
  return s;
}

/// Split manifest: "seed <n>", "digest <sha256>", then one line per
/// partition: "<name> <count> <idx> <idx> ...".
inline void write_split_manifest(std::ostream& out, const SplitIndices& s, const std::string& dataset_digest) {
  out << "seed " << s.seed << '\n' << "digest " << dataset_digest << '\n';
  const auto emit = [&](const char* name, const std::vector<std::size_t>& idx) {
    out << name << ' ' << idx.size();
    for (auto i : idx) out << ' ' << i;
    out << '\n';
  };
  emit("train", s.train);
  emit("val", s.val);
  emit("test", s.test);
}

struct SplitManifest {
  SplitIndices split;
  std::string dataset_digest;
};

inline SplitManifest read_split_manifest(std::istream& in) {
  SplitManifest m;
  std::string line;
  std::size_t lineno = 0;
  bool seen[3] = {false, false, false};
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "seed") {
      if (!(ls >> m.split.seed)) throw ParseError("bad seed", lineno);
    } else if (key == "digest") {
      if (!(ls >> m.dataset_digest)) throw ParseError("bad digest", lineno);
    } else if (key == "train" || key == "val" || key == "test") {
      auto& dst = key == "train" ? m.split.train : key == "val" ? m.split.val : m.split.test;
      seen[key == "train" ? 0 : key == "val" ? 1 : 2] = true;
      std::size_t count = 0;
      if (!(ls >> count)) throw ParseError("missing partition count", lineno);
      dst.resize(count);
      for (auto& v : dst)
        if (!(ls >> v)) throw ParseError("partition shorter than its count", lineno);
    } else {
      throw ParseError("unknown manifest key '" + key + "'", lineno);
    }
  }
  if (!seen[0] || !seen[1] || !seen[2]) throw FormatError("split manifest lacks a partition");
  return m;
}

struct DatasetStats {
  std::size_t records = 0;
  std::size_t sarcastic = 0;
  std::size_t non_sarcastic = 0;
  std::size_t vocabulary_size = 0;  // excluding reserved ids
  std::optional<double> missing_embedding_pct;
};

/// Percentage of non-reserved vocabulary tokens absent from embedding_vocab.
template <class Lookup>
double missing_percentage(const Vocabulary& vocab, const Lookup& has_vector) {
  const std::size_t real = vocab.size() - 2;
  if (real == 0) throw DomainError("coverage of an empty vocabulary");
  std::size_t missing = 0;
  for (std::size_t id = 2; id < vocab.size(); ++id)
    if (!has_vector(vocab.tokens()[id])) ++missing;
  return 100.0 * static_cast<double>(missing) / static_cast<double>(real);
}

inline DatasetStats dataset_stats(const std::vector<HeadlineRecord>& records, const Vocabulary& vocab,
                                  const std::unordered_set<std::string>* embedding_vocab = nullptr) {
  DatasetStats s;
  s.records = records.size();
  for (const auto& r : records) (r.is_sarcastic ? s.sarcastic : s.non_sarcastic)++;
  s.vocabulary_size = vocab.size() - 2;
  if (embedding_vocab)
    s.missing_embedding_pct =
        missing_percentage(vocab, [&](const std::string& t) { return embedding_vocab->count(t) != 0; });
  return s;
}

using RankedCounts = std::vector<std::pair<std::string, std::size_t>>;

struct ClassFrequencies {
  RankedCounts sarcastic;
  RankedCounts non_sarcastic;
};

/// Top-k tokens per class with stop-words removed; ties break alphabetically.
inline ClassFrequencies class_word_frequencies(const std::vector<HeadlineRecord>& records, std::size_t top_k,
                                               const std::unordered_set<std::string>& stopwords = default_stopwords()) {
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  std::map<std::string, std::size_t> counts[2];
  for (const auto& r : records)
    for (auto& tok : tokenize(r.headline))
      if (!stopwords.count(tok)) ++counts[r.is_sarcastic ? 1 : 0][tok];
  const auto rank = [top_k](const std::map<std::string, std::size_t>& c) {
    RankedCounts v(c.begin(), c.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (v.size() > top_k) v.resize(top_k);
    return v;
  };
  return {rank(counts[1]), rank(counts[0])};
}

struct PaddedIds {
  std::vector<TokenId> ids;
  std::size_t length = 0;
};

/// Right-pads with pad_id or keeps the first max_len ids; length records how
/// many entries are real tokens.
inline PaddedIds pad_or_truncate(const std::vector<TokenId>& ids, std::size_t max_len,
                                 TokenId pad_id = Vocabulary::kPad) {
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  PaddedIds out;
  out.length = std::min(ids.size(), max_len);
  out.ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(out.length));
  out.ids.resize(max_len, pad_id);
  return out;
}

}  // namespace sarcnet
