#pragma once

#include <string>
#include <string_view>
#include <unordered_set>

namespace sarcnet {

// Bump the version whenever the list changes; frequency tables record it.
inline constexpr std::string_view kStopwordsVersion = "en-v1";

inline const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",       "about",   "above",  "after",   "again",   "against", "all",     "am",     "an",      "and",
      "any",     "are",     "as",     "at",      "be",      "because", "been",    "before", "being",   "below",
      "between", "both",    "but",    "by",      "can",     "could",   "did",     "do",     "does",    "doing",
      "down",    "during",  "each",   "few",     "for",     "from",    "further", "had",    "has",     "have",
      "having",  "he",      "her",    "here",    "hers",    "herself", "him",     "himself", "his",    "how",
      "i",       "if",      "in",     "into",    "is",      "it",      "it's",    "its",    "itself",  "just",
      "me",      "more",    "most",   "my",      "myself",  "no",      "nor",     "not",    "now",     "of",
      "off",     "on",      "once",   "only",    "or",      "other",   "our",     "ours",   "ourselves", "out",
      "over",    "own",     "same",   "she",     "should",  "so",      "some",    "such",   "than",    "that",
      "the",     "their",   "theirs", "them",    "themselves", "then", "there",   "these",  "they",    "this",
      "those",   "through", "to",     "too",     "under",   "until",   "up",      "very",   "was",     "we",
      "were",    "what",    "when",   "where",   "which",   "while",   "who",     "whom",   "why",     "will",
      "with",    "would",   "you",    "your",    "yours",   "yourself", "yourselves", "'s",  "s",       "t",
      "don't",   "can't",   "won't",  "isn't",   "aren't",  "doesn't", "didn't",  "new",    "says",    "via",
  };
  return words;
}

}  // namespace sarcnet
