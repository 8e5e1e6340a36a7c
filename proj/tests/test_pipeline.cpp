#include <algorithm>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "mdr/pipeline.hpp"
#include "test_util.hpp"

using namespace mdr;

namespace {

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// Small, fast experiment: full strategy grid on a 20-group corpus.
PipelineConfig small_experiment_config(const std::string& out_dir) {
  PipelineConfig cfg;
  cfg.synth.n_languages = 2;
  cfg.synth.n_groups = 20;
  cfg.synth.concepts_per_text = 2;
  cfg.synth.distractor_vocab = 16;
  cfg.synth.seed = 5;
  cfg.encoder.vocab_buckets = 2048;
  cfg.encoder.embed_dim = 8;
  cfg.encoder.out_dim = 4;
  cfg.train.batch_size = 4;
  cfg.train.max_steps = 40;
  cfg.train.eval_every = 20;
  cfg.train.patience = 3;
  cfg.train.lr = 1e-2;
  cfg.seeds = {1};
  cfg.output_dir = out_dir;
  return cfg;
}

std::vector<nlohmann::json> parse_jsonl(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("an empty config file yields the documented defaults") {
  const auto cfg = parse_config_text("{}");
  CHECK(cfg.synth.n_languages == 3);
  CHECK(cfg.synth.n_groups == 300);
  CHECK(cfg.synth.shared_token_ratio == 0.1);
  CHECK(cfg.encoder.vocab_buckets == 16384);
  CHECK(cfg.encoder.embed_dim == 32);
  CHECK(cfg.encoder.out_dim == 16);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.alpha == 0.5);
  CHECK(cfg.train.validation_language == "L0");
  CHECK(cfg.train.lr == 1e-2);
  CHECK(cfg.train.max_steps == 400);
  CHECK(cfg.train.score_scale == 20.0);
  CHECK(cfg.split_fractions.train == 1.0);
  CHECK(cfg.split_fractions.valid == 0.0);
  CHECK(cfg.split_seed == 13);
  CHECK(cfg.strategies == std::vector<std::string>{"xx", "xy", "hybrid"});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(cfg.output_dir == "out");
}

TEST_CASE("config fields override defaults") {
  const auto cfg = parse_config_text(R"({
    "synth": {"n_languages": 4, "n_groups": 50, "seed": 99},
    "encoder": {"embed_dim": 16},
    "train": {"alpha": 0.25, "validation_language": "L2", "lr": 0.5},
    "split": {"fractions": [0.6, 0.2, 0.2], "seed": 21},
    "strategies": ["hybrid"],
    "seeds": [7, 8],
    "output_dir": "elsewhere"
  })");
  CHECK(cfg.synth.n_languages == 4);
  CHECK(cfg.synth.n_groups == 50);
  CHECK(cfg.synth.seed == 99);
  CHECK(cfg.encoder.embed_dim == 16);
  CHECK(cfg.encoder.out_dim == 16);  // untouched default
  CHECK(cfg.train.alpha == 0.25);
  CHECK(cfg.train.validation_language == "L2");
  CHECK(cfg.train.lr == 0.5);
  CHECK(cfg.split_fractions.valid == 0.2);
  CHECK(cfg.split_seed == 21);
  CHECK(cfg.strategies == std::vector<std::string>{"hybrid"});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{7, 8});
  CHECK(cfg.output_dir == "elsewhere");
}

TEST_CASE("config errors are caught early") {
  CHECK_THROWS_AS(parse_config_text("not json"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("[1, 2]"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(R"({"trian": {}})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(R"({"train": {"batchsize": 4}})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(R"({"train": {"batch_size": "many"}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(R"({"strategies": ["xx", "yy"]})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(R"({"strategies": ["xx", "xx"]})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(R"({"strategies": []})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(R"({"seeds": []})"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text(R"({"split": {"fractions": [0.5, 0.5]}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(load_config_file("no_such_dir/config.json"), std::invalid_argument);
}

TEST_CASE("strategy names map to batch-mix probabilities") {
  CHECK(strategy_alpha("xx", 0.5) == 1.0);
  CHECK(strategy_alpha("xy", 0.5) == 0.0);
  CHECK(strategy_alpha("hybrid", 0.5) == 0.5);
  CHECK(strategy_alpha("hybrid", 0.3) == 0.3);
  CHECK_THROWS_AS(strategy_alpha("monolingual", 0.5), std::invalid_argument);
}

TEST_CASE("run seeds separate streams but share data across strategies") {
  PipelineConfig cfg;
  const auto a = derive_run_seeds(cfg, 1);
  const auto b = derive_run_seeds(cfg, 1);
  CHECK(a.train_pool == b.train_pool);
  CHECK(a.valid_pool == b.valid_pool);
  CHECK(a.init == b.init);
  CHECK(a.sampler == b.sampler);

  const auto c = derive_run_seeds(cfg, 2);
  CHECK(a.train_pool != c.train_pool);
  CHECK(a.init != c.init);

  const std::set<std::uint64_t> streams{a.train_pool, a.valid_pool, a.init, a.sampler};
  CHECK(streams.size() == 4);
}

TEST_CASE("generated dataset files are reproducible") {
  const auto dir = testutil::temp_dir("pipeline_gen");
  PipelineConfig cfg;
  cfg.synth.n_languages = 2;
  cfg.synth.n_groups = 12;
  run_gen(cfg, (dir / "a.jsonl").string());
  run_gen(cfg, (dir / "b.jsonl").string());
  CHECK(testutil::slurp(dir / "a.jsonl") == testutil::slurp(dir / "b.jsonl"));

  const auto ds = load_parallel_jsonl((dir / "a.jsonl").string());
  CHECK(ds.groups.size() == 12);
  CHECK(ds.languages == std::vector<LanguageTag>{"L0", "L1"});
}

TEST_CASE("training runs write a loadable checkpoint and a mode-faithful history") {
  const auto dir = testutil::temp_dir("pipeline_train");
  auto cfg = small_experiment_config((dir / "out").string());
  run_gen(cfg, (dir / "data.jsonl").string());

  SUBCASE("xx trains on mono batches only") {
    const auto result = run_train(cfg, (dir / "data.jsonl").string(), "xx", std::nullopt,
                                  std::nullopt, (dir / "xx").string());
    const auto ckpt = load_checkpoint((dir / "xx" / "checkpoint.json").string());
    CHECK(ckpt.embedding.data == result.params.embedding.data);

    const auto records = parse_jsonl(testutil::slurp(dir / "xx" / "history.jsonl"));
    REQUIRE(!records.empty());
    CHECK(records.size() == result.history.records.size());
    for (const auto& r : records) {
      CHECK(r.at("mode") == "mono");
      CHECK(r.contains("lang"));
      CHECK(r.at("step").get<std::uint64_t>() >= 1);
      CHECK(r.at("train_loss").is_number());
    }
    // Evaluations appear exactly on schedule.
    std::size_t with_valid = 0;
    for (const auto& r : records) with_valid += r.contains("valid_loss") ? 1 : 0;
    CHECK(with_valid == records.size() / cfg.train.eval_every +
                            (records.size() % cfg.train.eval_every != 0 ? 1 : 0));
  }

  SUBCASE("xy trains on cross batches only") {
    run_train(cfg, (dir / "data.jsonl").string(), "xy", std::nullopt, std::nullopt,
              (dir / "xy").string());
    for (const auto& r : parse_jsonl(testutil::slurp(dir / "xy" / "history.jsonl"))) {
      CHECK(r.at("mode") == "cross");
      CHECK_FALSE(r.contains("lang"));
    }
  }

  SUBCASE("an alpha override beats the strategy mapping") {
    run_train(cfg, (dir / "data.jsonl").string(), "hybrid", std::nullopt, 1.0,
              (dir / "forced").string());
    for (const auto& r : parse_jsonl(testutil::slurp(dir / "forced" / "history.jsonl"))) {
      CHECK(r.at("mode") == "mono");
    }
  }

  SUBCASE("unknown strategies fail before any work") {
    CHECK_THROWS_AS(run_train(cfg, (dir / "data.jsonl").string(), "zz", std::nullopt,
                              std::nullopt, (dir / "zz").string()),
                    std::invalid_argument);
    CHECK_FALSE(std::filesystem::exists(dir / "zz"));
  }
}

TEST_CASE("history serialization is line-oriented JSON") {
  TrainingHistory history;
  HistoryRecord a;
  a.step = 1;
  a.train_loss = 1.5;
  a.kind = BatchKind::Mono;
  a.mono_lang = "L0";
  HistoryRecord b;
  b.step = 2;
  b.train_loss = 1.25;
  b.kind = BatchKind::Cross;
  b.valid_loss = 0.75;
  history.records = {a, b};

  const auto text = history_to_jsonl(history);
  CHECK(text ==
        "{\"lang\":\"L0\",\"mode\":\"mono\",\"step\":1,\"train_loss\":1.5}\n"
        "{\"mode\":\"cross\",\"step\":2,\"train_loss\":1.25,\"valid_loss\":0.75}\n");
}

TEST_CASE("evaluation artifacts are internally consistent") {
  const auto dir = testutil::temp_dir("pipeline_eval");
  PipelineConfig cfg;
  cfg.synth.n_languages = 3;
  cfg.synth.n_groups = 10;
  cfg.synth.seed = 9;
  cfg.encoder.vocab_buckets = 1024;
  cfg.encoder.embed_dim = 8;
  cfg.encoder.out_dim = 4;
  const auto ds = generate_synthetic(cfg.synth);
  const auto params = init_params(cfg.encoder);

  const auto report =
      run_eval(params, ds, (dir / "eval").string(), (dir / "trec").string());

  const auto j = nlohmann::json::parse(testutil::slurp(dir / "eval" / "report.json"));
  CHECK(j.at("format") == "mdr.eval_report");
  CHECK(j.at("version") == 1);
  CHECK(j.at("languages").size() == 3);

  // The macro cell really is the mean of the per-language rows in the file.
  for (const char* block : {"monolingual", "cross_lingual", "multilingual"}) {
    const auto& summary = j.at(block);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [lang, row] : summary.at("per_language").items()) {
      sum += row.at("map").get<double>();
      ++n;
    }
    REQUIRE(n == 3);
    CHECK(summary.at("macro").at("map").get<double>() ==
          doctest::Approx(sum / 3.0).epsilon(1e-9));
  }
  CHECK(j.at("monolingual").at("n_settings") == 3);
  CHECK(j.at("cross_lingual").at("n_settings") == 6);
  CHECK(j.at("bias").at("per_language").size() == 3);
  CHECK(j.at("monolingual").at("macro").at("map").get<double>() ==
        doctest::Approx(report.monolingual.macro.map));

  // TSV shapes: header + 5 metric rows; header + (3 langs + macro) x 3
  // blocks; header + 3 langs + macro.
  CHECK(count_lines(testutil::slurp(dir / "eval" / "summary.tsv")) == 6);
  CHECK(count_lines(testutil::slurp(dir / "eval" / "per_language.tsv")) == 13);
  CHECK(count_lines(testutil::slurp(dir / "eval" / "bias.tsv")) == 5);

  // TREC runs: one file per setting, six columns, ranks ascending from 1.
  const auto trec = testutil::slurp(dir / "trec" / "run_monolingual_L0.trec");
  const auto lines = count_lines(trec);
  CHECK(lines == 10 * 10);  // 10 queries x 10 docs
  std::istringstream in(trec);
  std::string qid, q0, docid, rank_s, score_s, tag;
  REQUIRE((in >> qid >> q0 >> docid >> rank_s >> score_s >> tag));
  CHECK(qid == "g000000.L0");
  CHECK(q0 == "Q0");
  CHECK(rank_s == "1");
  CHECK(tag == "mdr");
  CHECK(std::filesystem::exists(dir / "trec" / "run_cross_L0_L1.trec"));
  CHECK(std::filesystem::exists(dir / "trec" / "run_multilingual_L2.trec"));

  // Bias-only output agrees with the full report.
  const auto bias = run_bias(params, ds, (dir / "bias").string());
  CHECK(bias.macro == report.bias.macro);
  const auto bj = nlohmann::json::parse(testutil::slurp(dir / "bias" / "bias.json"));
  CHECK(bj.at("bias").at("macro").get<double>() == doctest::Approx(bias.macro));
}

TEST_CASE("experiments produce the full artifact tree and reproduce byte-for-byte") {
  const auto dir = testutil::temp_dir("pipeline_experiment");
  const auto cfg = small_experiment_config((dir / "out").string());

  const auto summary = run_experiment(cfg);
  REQUIRE(summary.runs.size() == 3);  // 3 strategies x 1 seed
  CHECK(summary.medians.size() == 3);
  // With one seed the median is that run's value.
  for (const auto& run : summary.runs) {
    CHECK(summary.medians.at(run.strategy).monolingual.map ==
          run.report.monolingual.macro.map);
  }

  for (const char* name : {"dataset.jsonl", "experiment.json", "table_map.tsv",
                           "table_bias.tsv"}) {
    CHECK(std::filesystem::exists(dir / "out" / name));
  }
  for (const char* strategy : {"xx", "xy", "hybrid"}) {
    const auto run_dir = dir / "out" / "runs" / (std::string(strategy) + "-seed1");
    CHECK(std::filesystem::exists(run_dir / "checkpoint.json"));
    CHECK(std::filesystem::exists(run_dir / "history.jsonl"));
    CHECK(std::filesystem::exists(run_dir / "report.json"));
  }

  const auto ej = nlohmann::json::parse(testutil::slurp(dir / "out" / "experiment.json"));
  CHECK(ej.at("format") == "mdr.experiment");
  CHECK(ej.at("runs").size() == 3);
  CHECK(ej.at("medians").size() == 3);
  CHECK(ej.at("config").at("synth").at("n_groups") == 20);

  const auto table = testutil::slurp(dir / "out" / "table_map.tsv");
  CHECK(count_lines(table) == 4);
  CHECK(table.rfind("strategy\tmonolingual\tcross_lingual\tmultilingual\n", 0) == 0);

  // Re-running the identical config rewrites identical bytes.
  const auto experiment_before = testutil::slurp(dir / "out" / "experiment.json");
  const auto report_before =
      testutil::slurp(dir / "out" / "runs" / "hybrid-seed1" / "report.json");
  const auto table_before = testutil::slurp(dir / "out" / "table_bias.tsv");
  run_experiment(cfg);
  CHECK(testutil::slurp(dir / "out" / "experiment.json") == experiment_before);
  CHECK(testutil::slurp(dir / "out" / "runs" / "hybrid-seed1" / "report.json") ==
        report_before);
  CHECK(testutil::slurp(dir / "out" / "table_bias.tsv") == table_before);
}

TEST_CASE("experiment seed cells share data and initialization") {
  const auto dir = testutil::temp_dir("pipeline_cells");
  auto cfg = small_experiment_config((dir / "out").string());
  cfg.train.max_steps = 10;
  cfg.train.eval_every = 5;

  const auto ds = generate_synthetic(cfg.synth);
  // Two strategies, same run seed: same split, same pools, same init, so
  // with lr = 0 they end on identical parameters.
  auto frozen = cfg;
  frozen.train.lr = 0.0;
  const auto xx = train_strategy(frozen, ds, "xx", 1);
  const auto xy = train_strategy(frozen, ds, "xy", 1);
  CHECK(xx.params.embedding.data == xy.params.embedding.data);

  // With a different run seed the initialization moves.
  const auto other = train_strategy(frozen, ds, "xx", 2);
  CHECK(other.params.embedding.data != xx.params.embedding.data);
}

}  // TEST_SUITE
