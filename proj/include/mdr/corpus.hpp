#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mdr {

using LanguageTag = std::string;

// One query/passage pair, i.e. a group rendered in one language.
struct Rendering {
  std::string query;
  std::string passage;
};

// A retrieval unit rendered in parallel across languages. All renderings of
// a group are mutual translations; the passage of language L is the relevant
// document for the group's query in any language.
struct ParallelGroup {
  std::string group_id;
  std::map<LanguageTag, Rendering> renderings;
};

struct ParallelDataset {
  std::vector<ParallelGroup> groups;
  std::vector<LanguageTag> languages;  // sorted lexicographically
  // When false every group covers every language in `languages`; loaders
  // enforce this. Partial datasets may leave holes.
  bool partial = false;
};

// Training example: a query, its relevant passage, and one sampled
// non-relevant passage in the same language as the positive.
struct Triplet {
  std::string query_text;
  LanguageTag query_lang;
  std::string pos_text;
  LanguageTag pos_lang;
  std::string neg_text;
  LanguageTag neg_lang;
  std::string group_id;
};

// Triplets keyed by the ordered (query language, document language) pair.
// Keys with equal components hold monolingual triplets.
using LangPair = std::pair<LanguageTag, LanguageTag>;
using TripletPool = std::map<LangPair, std::vector<Triplet>>;

// Knobs for the synthetic parallel corpus generator. Each group gets its own
// set of concept tokens; a concept surfaces identically in every language
// with probability shared_token_ratio and with a language suffix otherwise.
struct SynthConfig {
  int n_languages = 3;
  int n_groups = 300;
  int concepts_per_text = 5;
  double shared_token_ratio = 0.1;
  int distractor_vocab = 120;  // per-language filler token types
  std::uint64_t seed = 7;
};

struct SplitFractions {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct SplitResult {
  ParallelDataset train;
  ParallelDataset valid;
  ParallelDataset test;
};

// Reads a JSONL file with one group per line:
//   {"group_id": "...", "renderings": {"en": {"query": "...", "passage": "..."}, ...}}
// Throws std::invalid_argument naming the line on malformed input, duplicate
// group ids, empty texts, or (unless allow_partial) missing renderings.
ParallelDataset load_parallel_jsonl(const std::string& path, bool allow_partial = false);

void save_parallel_jsonl(const ParallelDataset& ds, const std::string& path);

// Pure function of cfg: equal configs produce byte-identical datasets.
ParallelDataset generate_synthetic(const SynthConfig& cfg);

// Builds one triplet per (language pair, group); the negative is the
// document-language passage of a uniformly drawn different group.
// Deterministic given (ds, seed). Requires at least two groups.
TripletPool derive_triplets(const ParallelDataset& ds, std::uint64_t seed);

// Group-level partition; fractions must be non-negative and sum to 1 within
// 1e-9. Deterministic given (ds, fractions, seed).
SplitResult split(const ParallelDataset& ds, SplitFractions fractions, std::uint64_t seed);

}  // namespace mdr
