#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "sarcnet/data.hpp"

using namespace sarcnet;

namespace {

const std::string kFixtures = SARCNET_FIXTURES;

std::vector<HeadlineRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_dataset(in);
}

}  // namespace

TEST(LoadDataset, ThreeRecordFixture) {
  const auto recs = load_dataset(kFixtures + "/three_records.jsonl");
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_TRUE(recs[0].is_sarcastic);
  EXPECT_FALSE(recs[1].is_sarcastic);
  EXPECT_TRUE(recs[2].is_sarcastic);
  EXPECT_EQ(recs[1].headline, "dem rep. totally nails why congress is falling short on gender, racial equality");
}

TEST(LoadDataset, EmptyInputGivesNoRecords) { EXPECT_TRUE(parse("").empty()); }

TEST(LoadDataset, BlankLinesAreSkipped) {
  const auto recs = parse("\n{\"is_sarcastic\": 0, \"headline\": \"a b\", \"article_link\": \"x\"}\n\n");
  EXPECT_EQ(recs.size(), 1u);
}

TEST(LoadDataset, MalformedLineReportsLineNumber) {
  const std::string good = "{\"is_sarcastic\": 0, \"headline\": \"a b\", \"article_link\": \"x\"}\n";
  try {
    parse(good + good + "{\"is_sarcastic\": 1, \"headline\": \n" + good);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadDataset, MissingKeyIsParseError) {
  EXPECT_THROW(parse("{\"is_sarcastic\": 0, \"headline\": \"a\"}\n"), ParseError);
}

TEST(LoadDataset, UnknownLabelIsValidationError) {
  EXPECT_THROW(parse("{\"is_sarcastic\": 2, \"headline\": \"a b\", \"article_link\": \"x\"}\n"), ValidationError);
  EXPECT_THROW(parse("{\"is_sarcastic\": \"1\", \"headline\": \"a b\", \"article_link\": \"x\"}\n"), ValidationError);
}

TEST(LoadDataset, EmptyHeadlineIsValidationError) {
  EXPECT_THROW(parse("{\"is_sarcastic\": 0, \"headline\": \"  \", \"article_link\": \"x\"}\n"), ValidationError);
}

TEST(LoadDataset, MissingFileIsIoError) { EXPECT_THROW(load_dataset(kFixtures + "/nope.jsonl"), IoError); }

TEST(Tokenize, LowercasesAndStripsEdgePunctuation) {
  EXPECT_EQ(tokenize("Boehner Just Wants Wife To Listen,"),
            (std::vector<std::string>{"boehner", "just", "wants", "wife", "to", "listen"}));
}

TEST(Tokenize, TrailingPunctuationStripped) {
  EXPECT_EQ(tokenize("mother comes pretty close!"), (std::vector<std::string>{"mother", "comes", "pretty", "close"}));
}

TEST(Tokenize, InnerPunctuationSurvives) {
  EXPECT_EQ(tokenize("k-pop sh*t"), (std::vector<std::string>{"k-pop", "sh*t"}));
  EXPECT_EQ(tokenize("'streaming' correctly"), (std::vector<std::string>{"streaming", "correctly"}));
}

TEST(Tokenize, PunctuationOnlyTokensVanish) {
  EXPECT_TRUE(tokenize("  ... !! -- ").empty());
  EXPECT_TRUE(tokenize("").empty());
}

TEST(Tokenize, Idempotent) {
  for (const auto& r : load_dataset(kFixtures + "/toy_headlines.jsonl")) {
    const auto once = tokenize(r.headline);
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    EXPECT_EQ(tokenize(joined), once);
  }
}

TEST(Vocabulary, SmallExample) {
  const auto v = build_vocabulary({{"a", "b", "a"}}, 1);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "a", "b"}));
  const auto w = build_vocabulary({{"a", "b", "a"}}, 2);
  EXPECT_EQ(w.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "a"}));
}

TEST(Vocabulary, ReservedIdsAndFrequencyOrder) {
  const auto v = build_vocabulary({{"b", "a", "b"}, {"c", "b", "a"}}, 1);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "b", "a", "c"}));
  EXPECT_EQ(v.id("b"), 2);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnknown);
  EXPECT_EQ(v.encode({"c", "q"}), (std::vector<TokenId>{4, 1}));
}

TEST(Vocabulary, MinCountDropsRareTokens) {
  const auto v = build_vocabulary({{"b", "a", "b"}, {"c", "b", "a"}}, 2);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_FALSE(v.contains("c"));
  EXPECT_THROW(build_vocabulary({}, 0), ConfigError);
}

TEST(Vocabulary, IndependentOfCorpusOrder) {
  std::vector<std::vector<std::string>> corpus{{"x", "y"}, {"z", "y"}, {"w"}};
  const auto a = build_vocabulary(corpus, 1);
  std::reverse(corpus.begin(), corpus.end());
  EXPECT_EQ(a, build_vocabulary(corpus, 1));
}

TEST(Vocabulary, FromTokensRoundTrip) {
  const auto v = build_vocabulary({{"p", "q"}}, 1);
  EXPECT_EQ(Vocabulary::from_tokens(v.tokens()), v);
  EXPECT_THROW(Vocabulary::from_tokens({"p", "q"}), FormatError);
}

TEST(Split, CorpusSizedPartition) {
  const auto s = split_dataset(26709, 42);
  EXPECT_EQ(s.train.size(), 21367u);
  EXPECT_EQ(s.val.size(), 2671u);
  EXPECT_EQ(s.test.size(), 2671u);
}

TEST(Split, SmallestAllowed) {
  const auto s = split_dataset(10, 1);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
  EXPECT_THROW(split_dataset(9, 1), DomainError);
}

TEST(Split, DeterministicAndSeedSensitive) {
  const auto a = split_dataset(500, 7), b = split_dataset(500, 7), c = split_dataset(500, 8);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
}

TEST(Split, PartitionsAreDisjointAndCover) {
  for (std::size_t n : {10u, 11u, 37u, 1000u}) {
    const auto s = split_dataset(n, n);
    std::set<std::size_t> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
    EXPECT_EQ(all.size(), n);
    EXPECT_EQ(*all.rbegin(), n - 1);
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), n);
  }
}

TEST(Split, ManifestRoundTrip) {
  const auto s = split_dataset(40, 3);
  std::stringstream buf;
  write_split_manifest(buf, s, "abc123");
  const auto m = read_split_manifest(buf);
  EXPECT_EQ(m.dataset_digest, "abc123");
  EXPECT_EQ(m.split.seed, 3u);
  EXPECT_EQ(m.split.train, s.train);
  EXPECT_EQ(m.split.val, s.val);
  EXPECT_EQ(m.split.test, s.test);
}

TEST(Split, ManifestWithoutPartitionIsRejected) {
  std::istringstream in("seed 1\ndigest x\ntrain 1 0\n");
  EXPECT_THROW(read_split_manifest(in), FormatError);
  std::istringstream bad("seed 1\ntrain 3 0 1\n");
  EXPECT_THROW(read_split_manifest(bad), ParseError);
}

TEST(Stats, ThreeRecordCounts) {
  const auto recs = load_dataset(kFixtures + "/three_records.jsonl");
  std::vector<std::vector<std::string>> corpus;
  for (const auto& r : recs) corpus.push_back(tokenize(r.headline));
  const auto vocab = build_vocabulary(corpus, 1);
  const auto s = dataset_stats(recs, vocab);
  EXPECT_EQ(s.records, 3u);
  EXPECT_EQ(s.sarcastic, 2u);
  EXPECT_EQ(s.non_sarcastic, 1u);
  EXPECT_EQ(s.vocabulary_size, vocab.size() - 2);
  EXPECT_FALSE(s.missing_embedding_pct.has_value());
}

TEST(Stats, MissingPercentage) {
  const auto vocab = build_vocabulary({{"a", "b", "c", "d"}}, 1);
  const std::unordered_set<std::string> all{"a", "b", "c", "d"}, half{"a", "c"}, none;
  EXPECT_EQ(*dataset_stats({}, vocab, &all).missing_embedding_pct, 0.0);
  EXPECT_EQ(*dataset_stats({}, vocab, &half).missing_embedding_pct, 50.0);
  EXPECT_EQ(*dataset_stats({}, vocab, &none).missing_embedding_pct, 100.0);
  EXPECT_THROW(dataset_stats({}, Vocabulary{}, &all), DomainError);
}

TEST(ClassFrequencies, RankedAndStopwordFree) {
  const auto recs = load_dataset(kFixtures + "/toy_headlines.jsonl");
  const auto f = class_word_frequencies(recs, 10);
  const auto& stop = default_stopwords();
  for (const auto* list : {&f.sarcastic, &f.non_sarcastic}) {
    EXPECT_LE(list->size(), 10u);
    for (std::size_t i = 0; i < list->size(); ++i) {
      EXPECT_EQ(stop.count((*list)[i].first), 0u) << (*list)[i].first;
      if (i > 0) {
        EXPECT_GE((*list)[i - 1].second, (*list)[i].second);
        if ((*list)[i - 1].second == (*list)[i].second) EXPECT_LT((*list)[i - 1].first, (*list)[i].first);
      }
    }
  }
}

TEST(ClassFrequencies, OneHeadlinePerClass) {
  const auto f = class_word_frequencies(
      parse("{\"is_sarcastic\": 1, \"headline\": \"area man wins\", \"article_link\": \"x\"}\n"
            "{\"is_sarcastic\": 0, \"headline\": \"senate passes bill\", \"article_link\": \"y\"}\n"),
      10);
  EXPECT_EQ(f.sarcastic, (RankedCounts{{"area", 1}, {"man", 1}, {"wins", 1}}));
  EXPECT_EQ(f.non_sarcastic, (RankedCounts{{"bill", 1}, {"passes", 1}, {"senate", 1}}));
}

TEST(ClassFrequencies, NonIncreasingOnRandomCorpora) {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<HeadlineRecord> recs;
    for (int r = 0; r < 20; ++r) {
      std::string h;
      for (int t = 0; t < 6; ++t) h += "t" + std::to_string(rng.below(15)) + " ";
      recs.push_back({h, rng.below(2) == 1, ""});
    }
    const auto f = class_word_frequencies(recs, 1 + rng.below(20));
    for (const auto* list : {&f.sarcastic, &f.non_sarcastic})
      for (std::size_t i = 1; i < list->size(); ++i) EXPECT_GE((*list)[i - 1].second, (*list)[i].second);
  }
}

TEST(ClassFrequencies, TopKLargerThanVocabulary) {
  const auto f = class_word_frequencies(parse("{\"is_sarcastic\": 1, \"headline\": \"cat cat dog\", \"article_link\": \"x\"}\n"), 50);
  EXPECT_EQ(f.sarcastic, (RankedCounts{{"cat", 2}, {"dog", 1}}));
  EXPECT_TRUE(f.non_sarcastic.empty());
}

TEST(PadOrTruncate, ShortSequenceIsPadded) {
  const auto p = pad_or_truncate({5, 6}, 4);
  EXPECT_EQ(p.ids, (std::vector<TokenId>{5, 6, 0, 0}));
  EXPECT_EQ(p.length, 2u);
}

TEST(PadOrTruncate, ExactLengthUnchanged) {
  const auto p = pad_or_truncate({7, 8, 9}, 3);
  EXPECT_EQ(p.ids, (std::vector<TokenId>{7, 8, 9}));
  EXPECT_EQ(p.length, 3u);
}

TEST(PadOrTruncate, LongSequenceKeepsPrefix) {
  const auto p = pad_or_truncate({1, 2, 3, 4, 5}, 3);
  EXPECT_EQ(p.ids, (std::vector<TokenId>{1, 2, 3}));
  EXPECT_EQ(p.length, 3u);
  EXPECT_THROW(pad_or_truncate({1}, 0), ConfigError);
}
