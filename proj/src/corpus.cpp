#include "mdr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mdr/io.hpp"
#include "mdr/rng.hpp"

namespace mdr {

namespace {

using json = nlohmann::json;

[[noreturn]] void line_error(const std::string& path, std::size_t line_no,
                             const std::string& what) {
  throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " + what);
}

std::string require_string(const json& j, const char* key, const std::string& path,
                           std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    line_error(path, line_no, std::string("missing or non-string \"") + key + "\"");
  }
  return it->get<std::string>();
}

}  // namespace

ParallelDataset load_parallel_jsonl(const std::string& path, bool allow_partial) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open dataset file: " + path);

  ParallelDataset ds;
  ds.partial = allow_partial;
  std::set<std::string> seen_ids;
  std::set<LanguageTag> langs;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      line_error(path, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) line_error(path, line_no, "line is not a JSON object");

    ParallelGroup group;
    group.group_id = require_string(j, "group_id", path, line_no);
    if (!seen_ids.insert(group.group_id).second) {
      line_error(path, line_no, "duplicate group_id \"" + group.group_id + "\"");
    }

    auto rit = j.find("renderings");
    if (rit == j.end() || !rit->is_object() || rit->empty()) {
      line_error(path, line_no, "missing or empty \"renderings\" object");
    }
    for (auto it = rit->begin(); it != rit->end(); ++it) {
      const LanguageTag lang = it.key();
      if (!it.value().is_object()) {
        line_error(path, line_no, "rendering for \"" + lang + "\" is not an object");
      }
      Rendering r;
      r.query = require_string(it.value(), "query", path, line_no);
      r.passage = require_string(it.value(), "passage", path, line_no);
      if (r.query.empty() || r.passage.empty()) {
        line_error(path, line_no, "empty query or passage text in group \"" +
                                      group.group_id + "\", language \"" + lang + "\"");
      }
      langs.insert(lang);
      group.renderings.emplace(lang, std::move(r));
    }
    ds.groups.push_back(std::move(group));
  }

  ds.languages.assign(langs.begin(), langs.end());  // std::set iterates sorted

  if (!allow_partial) {
    for (const auto& group : ds.groups) {
      for (const auto& lang : ds.languages) {
        if (!group.renderings.count(lang)) {
          throw std::invalid_argument("group \"" + group.group_id +
                                      "\" has no rendering for language \"" + lang +
                                      "\" (load with allow_partial to accept holes)");
        }
      }
    }
  }
  return ds;
}

void save_parallel_jsonl(const ParallelDataset& ds, const std::string& path) {
  std::ostringstream out;
  for (const auto& group : ds.groups) {
    json renderings = json::object();
    for (const auto& [lang, r] : group.renderings) {
      renderings[lang] = {{"query", r.query}, {"passage", r.passage}};
    }
    json j = {{"group_id", group.group_id}, {"renderings", renderings}};
    out << j.dump() << '\n';
  }
  write_file_atomic(path, out.str());
}

ParallelDataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.n_languages < 2) throw std::invalid_argument("generate_synthetic: need at least 2 languages");
  if (cfg.n_groups < 10) throw std::invalid_argument("generate_synthetic: need at least 10 groups");
  if (cfg.concepts_per_text < 1) throw std::invalid_argument("generate_synthetic: concepts_per_text must be positive");
  if (cfg.distractor_vocab < 0) throw std::invalid_argument("generate_synthetic: distractor_vocab must be non-negative");
  if (!(cfg.shared_token_ratio >= 0.0 && cfg.shared_token_ratio <= 1.0)) {
    throw std::invalid_argument("generate_synthetic: shared_token_ratio must lie in [0, 1]");
  }

  std::vector<LanguageTag> langs;
  for (int i = 0; i < cfg.n_languages; ++i) langs.push_back("L" + std::to_string(i));

  Rng rng(cfg.seed);
  const int n_query_distractors = (cfg.concepts_per_text + 1) / 2;
  const int n_passage_distractors = cfg.concepts_per_text;

  auto draw_distractors = [&](const LanguageTag& lang, int count, std::string& text) {
    for (int i = 0; i < count && cfg.distractor_vocab > 0; ++i) {
      const auto id = rng.next_below(static_cast<std::uint64_t>(cfg.distractor_vocab));
      text += " w" + std::to_string(id) + "_" + lang;
    }
  };

  ParallelDataset ds;
  for (int g = 0; g < cfg.n_groups; ++g) {
    ParallelGroup group;
    {
      std::string id = std::to_string(g);
      group.group_id = "g" + std::string(6 - std::min<std::size_t>(6, id.size()), '0') + id;
    }

    // Concepts are disjoint across groups; the shared-vs-suffixed choice is
    // made once per concept and reused in every rendering.
    std::vector<int> concept_ids(cfg.concepts_per_text);
    std::vector<bool> shared(cfg.concepts_per_text);
    for (int c = 0; c < cfg.concepts_per_text; ++c) {
      concept_ids[c] = g * cfg.concepts_per_text + c;
      shared[c] = rng.next_double() < cfg.shared_token_ratio;
    }

    for (const auto& lang : langs) {
      std::string concepts;
      for (int c = 0; c < cfg.concepts_per_text; ++c) {
        if (c > 0) concepts += ' ';
        concepts += "c" + std::to_string(concept_ids[c]);
        if (!shared[c]) concepts += "_" + lang;
      }
      Rendering r;
      r.query = concepts;
      draw_distractors(lang, n_query_distractors, r.query);
      r.passage = concepts;
      draw_distractors(lang, n_passage_distractors, r.passage);
      group.renderings.emplace(lang, std::move(r));
    }
    ds.groups.push_back(std::move(group));
  }

  std::sort(langs.begin(), langs.end());
  ds.languages = std::move(langs);
  return ds;
}

TripletPool derive_triplets(const ParallelDataset& ds, std::uint64_t seed) {
  if (ds.groups.size() < 2) {
    throw std::invalid_argument("derive_triplets: need at least 2 groups for negatives");
  }

  // Groups that can serve passages per language, precomputed once.
  std::map<LanguageTag, std::vector<std::size_t>> having;
  for (std::size_t i = 0; i < ds.groups.size(); ++i) {
    for (const auto& [lang, r] : ds.groups[i].renderings) having[lang].push_back(i);
  }

  Rng rng(seed);
  TripletPool pool;
  for (const auto& query_lang : ds.languages) {
    for (const auto& doc_lang : ds.languages) {
      const auto& candidates = having[doc_lang];
      if (candidates.size() < 2) continue;  // no negative available in this language

      std::vector<Triplet> triplets;
      for (std::size_t i = 0; i < ds.groups.size(); ++i) {
        const auto& group = ds.groups[i];
        auto q = group.renderings.find(query_lang);
        auto p = group.renderings.find(doc_lang);
        if (q == group.renderings.end() || p == group.renderings.end()) continue;

        // Uniform over the other groups that have a doc_lang passage.
        auto self = std::find(candidates.begin(), candidates.end(), i);
        const std::size_t others = candidates.size() - (self != candidates.end() ? 1 : 0);
        std::size_t pick = rng.next_below(others);
        if (self != candidates.end() &&
            pick >= static_cast<std::size_t>(self - candidates.begin())) {
          ++pick;
        }
        const auto& neg_group = ds.groups[candidates[pick]];

        triplets.push_back({q->second.query, query_lang, p->second.passage, doc_lang,
                            neg_group.renderings.at(doc_lang).passage, doc_lang,
                            group.group_id});
      }
      if (!triplets.empty()) pool.emplace(LangPair{query_lang, doc_lang}, std::move(triplets));
    }
  }
  return pool;
}

SplitResult split(const ParallelDataset& ds, SplitFractions fractions, std::uint64_t seed) {
  const double f[3] = {fractions.train, fractions.valid, fractions.test};
  for (double x : f) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("split: fractions must lie in [0, 1]");
  }
  if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must sum to 1");
  }

  const std::size_t n = ds.groups.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.next_below(i)]);
  }

  const auto c1 = static_cast<std::size_t>(std::llround(f[0] * static_cast<double>(n)));
  const auto c12 = static_cast<std::size_t>(std::llround((f[0] + f[1]) * static_cast<double>(n)));

  auto take = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> idx(order.begin() + lo, order.begin() + hi);
    std::sort(idx.begin(), idx.end());  // keep the parent's group order
    ParallelDataset part;
    part.languages = ds.languages;
    part.partial = ds.partial;
    for (auto i : idx) part.groups.push_back(ds.groups[i]);
    return part;
  };

  return {take(0, c1), take(c1, c12), take(c12, n)};
}

}  // namespace mdr
