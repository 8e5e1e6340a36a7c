#include "mdr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mdr {

Setting Setting::monolingual(const LanguageTag& lang) {
  return {SettingKind::Monolingual, lang, lang};
}

Setting Setting::cross_lingual(const LanguageTag& query_lang, const LanguageTag& corpus_lang) {
  if (query_lang == corpus_lang) {
    throw std::invalid_argument("cross-lingual setting needs two distinct languages");
  }
  return {SettingKind::CrossLingual, query_lang, corpus_lang};
}

Setting Setting::multilingual(const LanguageTag& query_lang) {
  return {SettingKind::Multilingual, query_lang, ""};
}

EmbeddingIndex build_index(const EncoderParams& params, const ParallelDataset& ds,
                           const std::vector<LanguageTag>& languages) {
  if (languages.empty()) throw std::invalid_argument("build_index: no languages given");
  for (const auto& lang : languages) {
    if (std::find(ds.languages.begin(), ds.languages.end(), lang) == ds.languages.end()) {
      throw std::invalid_argument("build_index: dataset has no language \"" + lang + "\"");
    }
  }

  std::vector<LanguageTag> sorted = languages;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  EmbeddingIndex index;
  index.dim = params.config.out_dim;
  for (const auto& lang : sorted) {
    // Row order within a language follows group_id so that doc ids come out
    // sorted; group ids are unique, making the order total.
    std::vector<const ParallelGroup*> groups;
    for (const auto& group : ds.groups) {
      if (group.renderings.count(lang)) groups.push_back(&group);
    }
    std::sort(groups.begin(), groups.end(),
              [](const ParallelGroup* a, const ParallelGroup* b) { return a->group_id < b->group_id; });
    for (const auto* group : groups) {
      const auto vec = encode(params, group->renderings.at(lang).passage, Role::Passage);
      index.doc_ids.push_back({group->group_id, lang});
      index.vectors.insert(index.vectors.end(), vec.begin(), vec.end());
    }
  }
  return index;
}

RankedList rank(const EmbeddingIndex& index, std::span<const double> query_vec) {
  if (query_vec.size() != index.dim) throw std::invalid_argument("rank: dimension mismatch");

  RankedList list;
  list.entries.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto row = index.row(i);
    double score = 0.0;
    for (std::size_t k = 0; k < index.dim; ++k) score += row[k] * query_vec[k];
    list.entries.push_back({index.doc_ids[i], score});
  }
  std::sort(list.entries.begin(), list.entries.end(),
            [](const RankedEntry& a, const RankedEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.doc < b.doc;
            });
  return list;
}

namespace {

void check_relevant(const RankedList& ranking, const std::set<DocId>& relevant) {
  if (relevant.empty()) throw std::invalid_argument("metrics: empty relevance set");
  std::size_t found = 0;
  for (const auto& entry : ranking.entries) found += relevant.count(entry.doc);
  if (found != relevant.size()) {
    throw std::invalid_argument("metrics: relevance set contains documents absent from the ranking");
  }
}

}  // namespace

double average_precision(const RankedList& ranking, const std::set<DocId>& relevant) {
  check_relevant(ranking, relevant);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    if (relevant.count(ranking.entries[i].doc)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double recall_at_k(const RankedList& ranking, const std::set<DocId>& relevant, std::size_t k) {
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be positive");
  check_relevant(ranking, relevant);
  std::size_t hits = 0;
  const std::size_t upto = std::min(k, ranking.entries.size());
  for (std::size_t i = 0; i < upto; ++i) hits += relevant.count(ranking.entries[i].doc);
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(const RankedList& ranking, const std::set<DocId>& relevant, std::size_t k) {
  if (k == 0) throw std::invalid_argument("ndcg_at_k: k must be positive");
  check_relevant(ranking, relevant);

  double dcg = 0.0;
  const std::size_t upto = std::min(k, ranking.entries.size());
  for (std::size_t i = 0; i < upto; ++i) {
    if (relevant.count(ranking.entries[i].doc)) {
      dcg += 1.0 / std::log2(static_cast<double>(i + 2));
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, relevant.size());
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i + 2));
  return dcg / idcg;
}

std::vector<Setting> enumerate_settings(const std::vector<LanguageTag>& languages) {
  if (languages.empty()) throw std::invalid_argument("enumerate_settings: no languages");
  std::vector<Setting> settings;
  for (const auto& lang : languages) settings.push_back(Setting::monolingual(lang));
  for (const auto& ql : languages) {
    for (const auto& cl : languages) {
      if (ql != cl) settings.push_back(Setting::cross_lingual(ql, cl));
    }
  }
  for (const auto& lang : languages) settings.push_back(Setting::multilingual(lang));
  return settings;
}

namespace {

void require_rendering(const ParallelGroup& group, const LanguageTag& lang) {
  if (!group.renderings.count(lang)) {
    throw std::invalid_argument("evaluation needs group \"" + group.group_id +
                                "\" rendered in language \"" + lang + "\"");
  }
}

SettingResult evaluate_with_index(const EncoderParams& params, const ParallelDataset& ds,
                                  const Setting& setting, const EmbeddingIndex& index) {
  SettingResult result;
  result.setting = setting;

  for (const auto& group : ds.groups) {
    require_rendering(group, setting.query_lang);

    std::set<DocId> relevant;
    if (setting.kind == SettingKind::Multilingual) {
      for (const auto& lang : ds.languages) {
        require_rendering(group, lang);
        relevant.insert({group.group_id, lang});
      }
    } else {
      require_rendering(group, setting.corpus_lang);
      relevant.insert({group.group_id, setting.corpus_lang});
    }

    const auto qvec = encode(params, group.renderings.at(setting.query_lang).query, Role::Query);
    const auto ranking = rank(index, qvec);

    MetricValues m;
    m.map = average_precision(ranking, relevant);
    m.r_at_1 = recall_at_k(ranking, relevant, 1);
    m.r_at_10 = recall_at_k(ranking, relevant, 10);
    m.ndcg_at_10 = ndcg_at_k(ranking, relevant, 10);
    m.recall_at_100 = recall_at_k(ranking, relevant, 100);
    result.per_query.push_back(m);
  }

  result.n_queries = result.per_query.size();
  if (result.n_queries == 0) throw std::invalid_argument("evaluate_setting: dataset has no groups");
  for (const auto& m : result.per_query) {
    result.mean.map += m.map;
    result.mean.r_at_1 += m.r_at_1;
    result.mean.r_at_10 += m.r_at_10;
    result.mean.ndcg_at_10 += m.ndcg_at_10;
    result.mean.recall_at_100 += m.recall_at_100;
  }
  const double inv = 1.0 / static_cast<double>(result.n_queries);
  result.mean.map *= inv;
  result.mean.r_at_1 *= inv;
  result.mean.r_at_10 *= inv;
  result.mean.ndcg_at_10 *= inv;
  result.mean.recall_at_100 *= inv;
  return result;
}

MetricValues mean_metrics(const std::vector<MetricValues>& values) {
  MetricValues out;
  for (const auto& m : values) {
    out.map += m.map;
    out.r_at_1 += m.r_at_1;
    out.r_at_10 += m.r_at_10;
    out.ndcg_at_10 += m.ndcg_at_10;
    out.recall_at_100 += m.recall_at_100;
  }
  const double inv = 1.0 / static_cast<double>(values.size());
  out.map *= inv;
  out.r_at_1 *= inv;
  out.r_at_10 *= inv;
  out.ndcg_at_10 *= inv;
  out.recall_at_100 *= inv;
  return out;
}

}  // namespace

SettingResult evaluate_setting(const EncoderParams& params, const ParallelDataset& ds,
                               const Setting& setting) {
  const auto corpus_langs = setting.kind == SettingKind::Multilingual
                                ? ds.languages
                                : std::vector<LanguageTag>{setting.corpus_lang};
  const auto index = build_index(params, ds, corpus_langs);
  return evaluate_with_index(params, ds, setting, index);
}

BiasReport language_bias(const EncoderParams& params, const ParallelDataset& ds) {
  if (ds.groups.empty()) throw std::invalid_argument("language_bias: dataset has no groups");
  if (ds.languages.size() < 2) throw std::invalid_argument("language_bias: need at least 2 languages");

  const auto index = build_index(params, ds, ds.languages);

  BiasReport report;
  for (const auto& query_lang : ds.languages) {
    double sum = 0.0;
    for (const auto& group : ds.groups) {
      require_rendering(group, query_lang);
      const auto qvec = encode(params, group.renderings.at(query_lang).query, Role::Query);
      const auto ranking = rank(index, qvec);

      std::size_t min_rank = index.size() + 1, max_rank = 0, found = 0;
      for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
        const auto& doc = ranking.entries[i].doc;
        if (doc.group_id == group.group_id) {
          min_rank = std::min(min_rank, i + 1);
          max_rank = std::max(max_rank, i + 1);
          ++found;
        }
      }
      if (found != ds.languages.size()) {
        throw std::invalid_argument("language_bias: group \"" + group.group_id +
                                    "\" is not rendered in every language");
      }
      sum += static_cast<double>(max_rank - min_rank);
    }
    report.per_language[query_lang] = sum / static_cast<double>(ds.groups.size());
  }
  report.macro = macro_average(report.per_language);
  return report;
}

double macro_average(const std::map<LanguageTag, double>& per_language) {
  if (per_language.empty()) throw std::invalid_argument("macro_average: empty input");
  double sum = 0.0;
  for (const auto& [lang, value] : per_language) sum += value;
  return sum / static_cast<double>(per_language.size());
}

EvalReport evaluate_all(const EncoderParams& params, const ParallelDataset& ds) {
  if (ds.languages.empty()) throw std::invalid_argument("evaluate_all: dataset has no languages");

  EvalReport report;
  report.languages = ds.languages;

  // Per-language corpora are shared across the settings that use them.
  std::map<LanguageTag, EmbeddingIndex> mono_indexes;
  for (const auto& lang : ds.languages) {
    mono_indexes.emplace(lang, build_index(params, ds, {lang}));
  }
  const auto multi_index = build_index(params, ds, ds.languages);

  for (const auto& lang : ds.languages) {
    report.monolingual.per_language[lang] =
        evaluate_with_index(params, ds, Setting::monolingual(lang), mono_indexes.at(lang)).mean;
    report.multilingual.per_language[lang] =
        evaluate_with_index(params, ds, Setting::multilingual(lang), multi_index).mean;
  }

  std::vector<MetricValues> cross_settings;
  for (const auto& ql : ds.languages) {
    std::vector<MetricValues> row;
    for (const auto& cl : ds.languages) {
      if (ql == cl) continue;
      row.push_back(
          evaluate_with_index(params, ds, Setting::cross_lingual(ql, cl), mono_indexes.at(cl)).mean);
    }
    if (!row.empty()) {
      report.cross_lingual.per_language[ql] = mean_metrics(row);
      cross_settings.insert(cross_settings.end(), row.begin(), row.end());
    }
  }

  auto summarize = [](SettingSummary& summary) {
    std::vector<MetricValues> rows;
    for (const auto& [lang, m] : summary.per_language) rows.push_back(m);
    summary.macro = mean_metrics(rows);
    summary.n_settings = rows.size();
  };
  summarize(report.monolingual);
  summarize(report.multilingual);

  // The cross macro averages every ordered language pair, not the per-source
  // rows (they agree mathematically; the pair count is the contract).
  if (!cross_settings.empty()) {
    report.cross_lingual.macro = mean_metrics(cross_settings);
    report.cross_lingual.n_settings = cross_settings.size();
  }

  report.bias = ds.languages.size() >= 2 ? language_bias(params, ds) : BiasReport{};
  return report;
}

}  // namespace mdr
