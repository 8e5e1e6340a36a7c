#include "mdr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mdr/io.hpp"
#include "mdr/rng.hpp"

namespace mdr {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(known.begin(), known.end(),
                     [&](const char* k) { return it.key() == k; }) == known.end()) {
      throw std::invalid_argument("config: unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config: bad value for \"" + std::string(key) + "\" in " + where);
  }
}

std::string format_fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

json metrics_to_json(const MetricValues& m) {
  return {{"map", m.map},
          {"r_at_1", m.r_at_1},
          {"r_at_10", m.r_at_10},
          {"ndcg_at_10", m.ndcg_at_10},
          {"recall_at_100", m.recall_at_100}};
}

json summary_to_json(const SettingSummary& s) {
  json per_language = json::object();
  for (const auto& [lang, m] : s.per_language) per_language[lang] = metrics_to_json(m);
  return {{"per_language", per_language},
          {"macro", metrics_to_json(s.macro)},
          {"n_settings", s.n_settings}};
}

json bias_to_json(const BiasReport& b) {
  json per_language = json::object();
  for (const auto& [lang, value] : b.per_language) per_language[lang] = value;
  return {{"per_language", per_language}, {"macro", b.macro}};
}

json config_to_json(const PipelineConfig& cfg) {
  return {
      {"synth",
       {{"n_languages", cfg.synth.n_languages},
        {"n_groups", cfg.synth.n_groups},
        {"concepts_per_text", cfg.synth.concepts_per_text},
        {"shared_token_ratio", cfg.synth.shared_token_ratio},
        {"distractor_vocab", cfg.synth.distractor_vocab},
        {"seed", cfg.synth.seed}}},
      {"encoder",
       {{"vocab_buckets", cfg.encoder.vocab_buckets},
        {"embed_dim", cfg.encoder.embed_dim},
        {"out_dim", cfg.encoder.out_dim},
        {"seed", cfg.encoder.seed}}},
      {"train",
       {{"batch_size", cfg.train.batch_size},
        {"alpha", cfg.train.alpha},
        {"max_steps", cfg.train.max_steps},
        {"eval_every", cfg.train.eval_every},
        {"patience", cfg.train.patience},
        {"seed", cfg.train.seed},
        {"validation_language", cfg.train.validation_language},
        {"lr", cfg.train.lr},
        {"weight_decay", cfg.train.weight_decay},
        {"score_scale", cfg.train.score_scale}}},
      {"split",
       {{"fractions",
         {cfg.split_fractions.train, cfg.split_fractions.valid, cfg.split_fractions.test}},
        {"seed", cfg.split_seed}}},
      {"strategies", cfg.strategies},
      {"seeds", cfg.seeds},
      {"output_dir", cfg.output_dir}};
}

void validate_strategies(const std::vector<std::string>& strategies) {
  if (strategies.empty()) throw std::invalid_argument("config: strategies must not be empty");
  std::set<std::string> seen;
  for (const auto& s : strategies) {
    if (s != "xx" && s != "xy" && s != "hybrid") {
      throw std::invalid_argument("config: unknown strategy \"" + s +
                                  "\" (expected xx, xy, or hybrid)");
    }
    if (!seen.insert(s).second) throw std::invalid_argument("config: duplicate strategy \"" + s + "\"");
  }
}

}  // namespace

PipelineConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
  reject_unknown_keys(
      j, {"synth", "encoder", "train", "split", "strategies", "seeds", "output_dir"}, "config");

  PipelineConfig cfg;
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    reject_unknown_keys(s,
                        {"n_languages", "n_groups", "concepts_per_text", "shared_token_ratio",
                         "distractor_vocab", "seed"},
                        "synth");
    read_field(s, "n_languages", cfg.synth.n_languages, "synth");
    read_field(s, "n_groups", cfg.synth.n_groups, "synth");
    read_field(s, "concepts_per_text", cfg.synth.concepts_per_text, "synth");
    read_field(s, "shared_token_ratio", cfg.synth.shared_token_ratio, "synth");
    read_field(s, "distractor_vocab", cfg.synth.distractor_vocab, "synth");
    read_field(s, "seed", cfg.synth.seed, "synth");
  }
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    reject_unknown_keys(e, {"vocab_buckets", "embed_dim", "out_dim", "seed"}, "encoder");
    read_field(e, "vocab_buckets", cfg.encoder.vocab_buckets, "encoder");
    read_field(e, "embed_dim", cfg.encoder.embed_dim, "encoder");
    read_field(e, "out_dim", cfg.encoder.out_dim, "encoder");
    read_field(e, "seed", cfg.encoder.seed, "encoder");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown_keys(t,
                        {"batch_size", "alpha", "max_steps", "eval_every", "patience", "seed",
                         "validation_language", "lr", "weight_decay", "score_scale"},
                        "train");
    read_field(t, "batch_size", cfg.train.batch_size, "train");
    read_field(t, "alpha", cfg.train.alpha, "train");
    read_field(t, "max_steps", cfg.train.max_steps, "train");
    read_field(t, "eval_every", cfg.train.eval_every, "train");
    read_field(t, "patience", cfg.train.patience, "train");
    read_field(t, "seed", cfg.train.seed, "train");
    read_field(t, "validation_language", cfg.train.validation_language, "train");
    read_field(t, "lr", cfg.train.lr, "train");
    read_field(t, "weight_decay", cfg.train.weight_decay, "train");
    read_field(t, "score_scale", cfg.train.score_scale, "train");
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    reject_unknown_keys(s, {"fractions", "seed"}, "split");
    if (s.contains("fractions")) {
      std::vector<double> f;
      read_field(s, "fractions", f, "split");
      if (f.size() != 3) throw std::invalid_argument("config: split.fractions must have 3 entries");
      cfg.split_fractions = {f[0], f[1], f[2]};
    }
    read_field(s, "seed", cfg.split_seed, "split");
  }
  read_field(j, "strategies", cfg.strategies, "config");
  read_field(j, "seeds", cfg.seeds, "config");
  read_field(j, "output_dir", cfg.output_dir, "config");

  validate_strategies(cfg.strategies);
  if (cfg.seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
  return cfg;
}

PipelineConfig load_config_file(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

double strategy_alpha(const std::string& strategy, double hybrid_alpha) {
  if (strategy == "xx") return 1.0;
  if (strategy == "xy") return 0.0;
  if (strategy == "hybrid") return hybrid_alpha;
  throw std::invalid_argument("unknown strategy \"" + strategy + "\" (expected xx, xy, or hybrid)");
}

RunSeeds derive_run_seeds(const PipelineConfig& cfg, std::uint64_t run_seed) {
  RunSeeds seeds;
  seeds.train_pool = mix_seed(run_seed, 0x706f6f6cULL);   // "pool"
  seeds.valid_pool = mix_seed(run_seed, 0x76706f6f6cULL); // "vpool"
  // Salt by purpose before mixing in the run seed; the encoder and train
  // seeds both default to 1, and init must not reuse the sampler stream.
  seeds.init = mix_seed(mix_seed(cfg.encoder.seed, 0x696e6974ULL), run_seed);    // "init"
  seeds.sampler = mix_seed(mix_seed(cfg.train.seed, 0x73616d70ULL), run_seed);   // "samp"
  return seeds;
}

TrainResult train_strategy(const PipelineConfig& cfg, const ParallelDataset& ds,
                           const std::string& strategy, std::uint64_t run_seed,
                           std::optional<double> alpha_override) {
  const RunSeeds seeds = derive_run_seeds(cfg, run_seed);
  const SplitResult parts = split(ds, cfg.split_fractions, cfg.split_seed);
  const TripletPool train_pool = derive_triplets(parts.train, seeds.train_pool);
  // With no held-out groups, validation still sees unseen triplets: the
  // separate pool seed pairs queries with different negatives.
  const ParallelDataset& valid_src = parts.valid.groups.empty() ? parts.train : parts.valid;
  const TripletPool valid_pool = derive_triplets(valid_src, seeds.valid_pool);

  EncoderConfig enc_cfg = cfg.encoder;
  enc_cfg.seed = seeds.init;

  TrainConfig tc = cfg.train;
  tc.alpha = alpha_override.value_or(strategy_alpha(strategy, cfg.train.alpha));
  tc.seed = seeds.sampler;
  return train(tc, train_pool, valid_pool, enc_cfg);
}

void run_gen(const PipelineConfig& cfg, const std::string& out_path) {
  save_parallel_jsonl(generate_synthetic(cfg.synth), out_path);
}

TrainResult run_train(const PipelineConfig& cfg, const std::string& data_path,
                      const std::string& strategy, std::optional<std::uint64_t> seed_override,
                      std::optional<double> alpha_override, const std::string& out_dir,
                      bool allow_partial) {
  strategy_alpha(strategy, cfg.train.alpha);  // validate the name up front
  const auto ds = load_parallel_jsonl(data_path, allow_partial);
  const auto run_seed = seed_override.value_or(cfg.train.seed);
  auto result = train_strategy(cfg, ds, strategy, run_seed, alpha_override);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  save_checkpoint(result.params, (dir / "checkpoint.json").string());
  write_file_atomic(dir / "history.jsonl", history_to_jsonl(result.history));
  return result;
}

std::string history_to_jsonl(const TrainingHistory& history) {
  std::ostringstream out;
  for (const auto& rec : history.records) {
    json j;
    j["step"] = rec.step;
    j["mode"] = rec.kind == BatchKind::Mono ? "mono" : "cross";
    if (rec.kind == BatchKind::Mono) j["lang"] = rec.mono_lang;
    j["train_loss"] = rec.train_loss;
    if (rec.valid_loss) j["valid_loss"] = *rec.valid_loss;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::string eval_report_to_json_text(const EvalReport& report) {
  json j;
  j["format"] = "mdr.eval_report";
  j["version"] = 1;
  j["languages"] = report.languages;
  j["monolingual"] = summary_to_json(report.monolingual);
  j["cross_lingual"] = summary_to_json(report.cross_lingual);
  j["multilingual"] = summary_to_json(report.multilingual);
  j["bias"] = bias_to_json(report.bias);
  return j.dump(2) + "\n";
}

namespace {

std::string summary_tsv(const EvalReport& report) {
  std::ostringstream out;
  out << "metric\tmonolingual\tcross_lingual\tmultilingual\n";
  auto row = [&](const char* name, auto pick) {
    out << name << '\t' << format_fixed(pick(report.monolingual.macro), 4) << '\t'
        << format_fixed(pick(report.cross_lingual.macro), 4) << '\t'
        << format_fixed(pick(report.multilingual.macro), 4) << '\n';
  };
  row("map", [](const MetricValues& m) { return m.map; });
  row("r_at_1", [](const MetricValues& m) { return m.r_at_1; });
  row("r_at_10", [](const MetricValues& m) { return m.r_at_10; });
  row("ndcg_at_10", [](const MetricValues& m) { return m.ndcg_at_10; });
  row("recall_at_100", [](const MetricValues& m) { return m.recall_at_100; });
  return out.str();
}

void append_metric_cells(std::ostringstream& out, const MetricValues& m) {
  out << format_fixed(m.map, 4) << '\t' << format_fixed(m.r_at_1, 4) << '\t'
      << format_fixed(m.r_at_10, 4) << '\t' << format_fixed(m.ndcg_at_10, 4) << '\t'
      << format_fixed(m.recall_at_100, 4) << '\n';
}

std::string per_language_tsv(const EvalReport& report) {
  std::ostringstream out;
  out << "language\tsetting\tmap\tr_at_1\tr_at_10\tndcg_at_10\trecall_at_100\n";
  auto block = [&](const char* name, const SettingSummary& s) {
    for (const auto& [lang, m] : s.per_language) {
      out << lang << '\t' << name << '\t';
      append_metric_cells(out, m);
    }
    out << "macro\t" << name << '\t';
    append_metric_cells(out, s.macro);
  };
  block("monolingual", report.monolingual);
  block("cross_lingual", report.cross_lingual);
  block("multilingual", report.multilingual);
  return out.str();
}

std::string bias_tsv(const BiasReport& bias) {
  std::ostringstream out;
  out << "language\tmean_rank_distance\n";
  for (const auto& [lang, value] : bias.per_language) {
    out << lang << '\t' << format_fixed(value, 2) << '\n';
  }
  out << "macro\t" << format_fixed(bias.macro, 2) << '\n';
  return out.str();
}

}  // namespace

EvalReport run_eval(const EncoderParams& params, const ParallelDataset& ds,
                    const std::string& out_dir, const std::optional<std::string>& trec_dir) {
  const auto report = evaluate_all(params, ds);
  const fs::path dir(out_dir);
  write_file_atomic(dir / "report.json", eval_report_to_json_text(report));
  write_file_atomic(dir / "summary.tsv", summary_tsv(report));
  write_file_atomic(dir / "per_language.tsv", per_language_tsv(report));
  write_file_atomic(dir / "bias.tsv", bias_tsv(report.bias));
  if (trec_dir) write_trec_runs(params, ds, *trec_dir);
  return report;
}

BiasReport run_bias(const EncoderParams& params, const ParallelDataset& ds,
                    const std::string& out_dir) {
  const auto bias = language_bias(params, ds);
  json j;
  j["format"] = "mdr.bias_report";
  j["version"] = 1;
  j["bias"] = bias_to_json(bias);
  const fs::path dir(out_dir);
  write_file_atomic(dir / "bias.json", j.dump(2) + "\n");
  write_file_atomic(dir / "bias.tsv", bias_tsv(bias));
  return bias;
}

void write_trec_runs(const EncoderParams& params, const ParallelDataset& ds,
                     const std::string& dir) {
  std::map<LanguageTag, EmbeddingIndex> mono_indexes;
  for (const auto& lang : ds.languages) {
    mono_indexes.emplace(lang, build_index(params, ds, {lang}));
  }
  const auto multi_index = build_index(params, ds, ds.languages);

  for (const auto& setting : enumerate_settings(ds.languages)) {
    const EmbeddingIndex& index = setting.kind == SettingKind::Multilingual
                                      ? multi_index
                                      : mono_indexes.at(setting.corpus_lang);
    std::string name;
    switch (setting.kind) {
      case SettingKind::Monolingual: name = "run_monolingual_" + setting.query_lang; break;
      case SettingKind::CrossLingual:
        name = "run_cross_" + setting.query_lang + "_" + setting.corpus_lang;
        break;
      case SettingKind::Multilingual: name = "run_multilingual_" + setting.query_lang; break;
    }

    std::ostringstream out;
    for (const auto& group : ds.groups) {
      const auto qvec = encode(params, group.renderings.at(setting.query_lang).query, Role::Query);
      const auto ranking = rank(index, qvec);
      const std::string qid = group.group_id + "." + setting.query_lang;
      for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
        const auto& e = ranking.entries[i];
        out << qid << "\tQ0\t" << e.doc.group_id << "." << e.doc.language << '\t' << i + 1
            << '\t' << format_fixed(e.score, 6) << "\tmdr\n";
      }
    }
    write_file_atomic(fs::path(dir) / (name + ".trec"), out.str());
  }
}

ExperimentSummary run_experiment(const PipelineConfig& cfg) {
  validate_strategies(cfg.strategies);
  if (cfg.seeds.empty()) throw std::invalid_argument("experiment: seeds must not be empty");
  {
    std::set<std::uint64_t> unique(cfg.seeds.begin(), cfg.seeds.end());
    if (unique.size() != cfg.seeds.size()) {
      throw std::invalid_argument("experiment: duplicate run seeds");
    }
  }

  const fs::path out(cfg.output_dir);
  const auto ds = generate_synthetic(cfg.synth);
  save_parallel_jsonl(ds, (out / "dataset.jsonl").string());

  ExperimentSummary summary;
  for (const auto& strategy : cfg.strategies) {
    for (const auto seed : cfg.seeds) {
      auto result = train_strategy(cfg, ds, strategy, seed);
      const fs::path run_dir = out / "runs" / (strategy + "-seed" + std::to_string(seed));
      fs::create_directories(run_dir);
      save_checkpoint(result.params, (run_dir / "checkpoint.json").string());
      write_file_atomic(run_dir / "history.jsonl", history_to_jsonl(result.history));

      // Strategies are compared on the full corpus; every group's concept
      // vocabulary is its own, so training quality shows up here while the
      // split only serves early stopping.
      auto report = evaluate_all(result.params, ds);
      write_file_atomic(run_dir / "report.json", eval_report_to_json_text(report));
      summary.runs.push_back({strategy, seed, std::move(report)});
    }
  }

  for (const auto& strategy : cfg.strategies) {
    std::vector<const EvalReport*> reports;
    for (const auto& run : summary.runs) {
      if (run.strategy == strategy) reports.push_back(&run.report);
    }
    auto median_of = [&](auto pick) {
      std::vector<double> values;
      for (const auto* r : reports) values.push_back(pick(*r));
      return median(std::move(values));
    };
    auto median_metrics = [&](auto pick_summary) {
      MetricValues m;
      m.map = median_of([&](const EvalReport& r) { return pick_summary(r).macro.map; });
      m.r_at_1 = median_of([&](const EvalReport& r) { return pick_summary(r).macro.r_at_1; });
      m.r_at_10 = median_of([&](const EvalReport& r) { return pick_summary(r).macro.r_at_10; });
      m.ndcg_at_10 =
          median_of([&](const EvalReport& r) { return pick_summary(r).macro.ndcg_at_10; });
      m.recall_at_100 =
          median_of([&](const EvalReport& r) { return pick_summary(r).macro.recall_at_100; });
      return m;
    };

    StrategyMedians medians;
    medians.monolingual = median_metrics([](const EvalReport& r) -> const SettingSummary& {
      return r.monolingual;
    });
    medians.cross_lingual = median_metrics([](const EvalReport& r) -> const SettingSummary& {
      return r.cross_lingual;
    });
    medians.multilingual = median_metrics([](const EvalReport& r) -> const SettingSummary& {
      return r.multilingual;
    });
    medians.bias = median_of([](const EvalReport& r) { return r.bias.macro; });
    summary.medians.emplace(strategy, medians);
  }

  json j;
  j["format"] = "mdr.experiment";
  j["version"] = 1;
  j["config"] = config_to_json(cfg);
  j["runs"] = json::array();
  for (const auto& run : summary.runs) {
    j["runs"].push_back({{"strategy", run.strategy},
                         {"seed", run.seed},
                         {"monolingual", metrics_to_json(run.report.monolingual.macro)},
                         {"cross_lingual", metrics_to_json(run.report.cross_lingual.macro)},
                         {"multilingual", metrics_to_json(run.report.multilingual.macro)},
                         {"bias", run.report.bias.macro}});
  }
  j["medians"] = json::object();
  for (const auto& [strategy, m] : summary.medians) {
    j["medians"][strategy] = {{"monolingual", metrics_to_json(m.monolingual)},
                              {"cross_lingual", metrics_to_json(m.cross_lingual)},
                              {"multilingual", metrics_to_json(m.multilingual)},
                              {"bias", m.bias}};
  }
  write_file_atomic(out / "experiment.json", j.dump(2) + "\n");

  std::ostringstream map_tsv;
  map_tsv << "strategy\tmonolingual\tcross_lingual\tmultilingual\n";
  for (const auto& strategy : cfg.strategies) {
    const auto& m = summary.medians.at(strategy);
    map_tsv << strategy << '\t' << format_fixed(m.monolingual.map, 3) << '\t'
            << format_fixed(m.cross_lingual.map, 3) << '\t'
            << format_fixed(m.multilingual.map, 3) << '\n';
  }
  write_file_atomic(out / "table_map.tsv", map_tsv.str());

  std::ostringstream bias_table;
  bias_table << "strategy\tmean_rank_distance\n";
  for (const auto& strategy : cfg.strategies) {
    bias_table << strategy << '\t' << format_fixed(summary.medians.at(strategy).bias, 1) << '\n';
  }
  write_file_atomic(out / "table_bias.tsv", bias_table.str());

  return summary;
}

}  // namespace mdr
