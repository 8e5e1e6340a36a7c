#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mdr/corpus.hpp"
#include "mdr/encoder.hpp"

namespace mdr {

// Identifies one passage: a group rendered in one language. Ordering is
// (language, group_id), both lexicographic; ranking ties break on it.
struct DocId {
  std::string group_id;
  LanguageTag language;

  friend bool operator==(const DocId&, const DocId&) = default;
};

inline bool operator<(const DocId& a, const DocId& b) {
  if (a.language != b.language) return a.language < b.language;
  return a.group_id < b.group_id;
}

// Passage embeddings for a document collection, one unit-length row per
// (group, language) passage, rows sorted by DocId.
struct EmbeddingIndex {
  std::vector<DocId> doc_ids;
  std::size_t dim = 0;
  std::vector<double> vectors;  // row-major, doc_ids.size() x dim

  std::size_t size() const { return doc_ids.size(); }
  std::span<const double> row(std::size_t i) const { return {vectors.data() + i * dim, dim}; }
};

struct RankedEntry {
  DocId doc;
  double score;
};

// Full ranking of an index for one query: scores descending, ties by
// ascending DocId.
struct RankedList {
  std::vector<RankedEntry> entries;
};

enum class SettingKind { Monolingual, CrossLingual, Multilingual };

// One retrieval configuration: queries in query_lang against either the
// passages of corpus_lang (mono/cross) or of every language (multilingual).
struct Setting {
  SettingKind kind = SettingKind::Monolingual;
  LanguageTag query_lang;
  LanguageTag corpus_lang;  // empty for Multilingual

  static Setting monolingual(const LanguageTag& lang);
  static Setting cross_lingual(const LanguageTag& query_lang, const LanguageTag& corpus_lang);
  static Setting multilingual(const LanguageTag& query_lang);
};

// Encodes one row per (group, language) passage for the given languages.
EmbeddingIndex build_index(const EncoderParams& params, const ParallelDataset& ds,
                           const std::vector<LanguageTag>& languages);

// Exact brute-force ranking of the whole index by dot product against the
// unit query vector.
RankedList rank(const EmbeddingIndex& index, std::span<const double> query_vec);

// Rank-based metrics over a full ranking. `relevant` must be non-empty and
// contained in the ranking; gains are binary.
double average_precision(const RankedList& ranking, const std::set<DocId>& relevant);
double recall_at_k(const RankedList& ranking, const std::set<DocId>& relevant, std::size_t k);
double ndcg_at_k(const RankedList& ranking, const std::set<DocId>& relevant, std::size_t k);

// All settings for a language list: |L| monolingual, |L|*(|L|-1) ordered
// cross-lingual, |L| multilingual, in that order.
std::vector<Setting> enumerate_settings(const std::vector<LanguageTag>& languages);

struct MetricValues {
  double map = 0.0;
  double r_at_1 = 0.0;
  double r_at_10 = 0.0;
  double ndcg_at_10 = 0.0;
  double recall_at_100 = 0.0;
};

struct SettingResult {
  Setting setting;
  std::size_t n_queries = 0;
  MetricValues mean;                      // averaged over queries
  std::vector<MetricValues> per_query;    // in group order
};

// Runs one setting over every group of ds. Mono/cross settings take the
// group's corpus-language passage as the single relevant document; the
// multilingual setting takes the group's passage in every language.
SettingResult evaluate_setting(const EncoderParams& params, const ParallelDataset& ds,
                               const Setting& setting);

struct BiasReport {
  std::map<LanguageTag, double> per_language;  // keyed by query language
  double macro = 0.0;
};

// Parallel-retrieval consistency: for each query, the spread (max - min) of
// the ranks its relevant passages occupy across languages in the full
// multilingual ranking; averaged per query language, then macro-averaged.
BiasReport language_bias(const EncoderParams& params, const ParallelDataset& ds);

// Unweighted mean over the map's values; empty input is an error.
double macro_average(const std::map<LanguageTag, double>& per_language);

struct SettingSummary {
  std::map<LanguageTag, MetricValues> per_language;  // keyed by query language
  MetricValues macro;
  std::size_t n_settings = 0;
};

struct EvalReport {
  std::vector<LanguageTag> languages;
  SettingSummary monolingual;
  SettingSummary cross_lingual;
  SettingSummary multilingual;
  BiasReport bias;
};

// Evaluates every setting plus the bias probe. Cross-lingual per-language
// rows average over corpus languages; the macro averages over all
// |L|*(|L|-1) settings.
EvalReport evaluate_all(const EncoderParams& params, const ParallelDataset& ds);

}  // namespace mdr
