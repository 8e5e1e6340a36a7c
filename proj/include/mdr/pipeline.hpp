#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mdr/contrastive.hpp"
#include "mdr/corpus.hpp"
#include "mdr/encoder.hpp"
#include "mdr/evalkit.hpp"

namespace mdr {

// The TrainConfig type defaults suit a warm-started encoder; an experiment
// here trains the hashed encoder from scratch on a small synthetic corpus,
// which wants a larger step size, smaller batches, and validation on a
// language the generator actually emits. The score scale matters most:
// cosine scores saturate the softmax so slowly at scale 1 that validation
// loss keeps moving long after rankings stop improving, which misleads
// checkpoint selection; at scale 20 a won margin zeroes the per-query loss
// and validation tracks retrieval quality.
inline TrainConfig experiment_train_defaults() {
  TrainConfig t;
  t.batch_size = 32;
  t.max_steps = 400;
  t.eval_every = 50;
  t.lr = 1e-2;
  t.score_scale = 20.0;
  t.validation_language = "L0";
  return t;
}

// Everything one experiment needs, read from a single JSON config file.
// Any field may be omitted; defaults below apply.
//
// Groups share no concept vocabulary, so holding groups out of training
// starves their token rows of gradient and an early-stopping loss measured
// on them rewards nothing but noise. The default therefore trains on every
// group and validates on freshly paired triplets (a separate seed picks
// different negatives than training sees). Setting a nonzero valid fraction
// switches validation to held-out groups for callers that want it.
struct PipelineConfig {
  SynthConfig synth;
  EncoderConfig encoder;
  TrainConfig train = experiment_train_defaults();
  SplitFractions split_fractions{1.0, 0.0, 0.0};
  std::uint64_t split_seed = 13;
  std::vector<std::string> strategies = {"xx", "xy", "hybrid"};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string output_dir = "out";
};

PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config_file(const std::string& path);

// Batch-mix probability for a named strategy: "xx" trains on monolingual
// batches only, "xy" on cross-language batches only, "hybrid" uses
// hybrid_alpha.
double strategy_alpha(const std::string& strategy, double hybrid_alpha);

// Per-run seed derivation. A run is identified by one run_seed; the triplet
// pools, the parameter init, and the batch sampler get independent streams
// mixed from it, so runs that share a run_seed share data and init across
// strategies.
struct RunSeeds {
  std::uint64_t train_pool = 0;
  std::uint64_t valid_pool = 0;
  std::uint64_t init = 0;
  std::uint64_t sampler = 0;
};
RunSeeds derive_run_seeds(const PipelineConfig& cfg, std::uint64_t run_seed);

// Splits ds, derives pools, and trains one strategy. Pure function of
// (cfg, ds, strategy, run_seed).
TrainResult train_strategy(const PipelineConfig& cfg, const ParallelDataset& ds,
                           const std::string& strategy, std::uint64_t run_seed,
                           std::optional<double> alpha_override = std::nullopt);

// Subcommand bodies. Each validates inputs before writing and writes every
// artifact atomically (temp file + rename).
void run_gen(const PipelineConfig& cfg, const std::string& out_path);

TrainResult run_train(const PipelineConfig& cfg, const std::string& data_path,
                      const std::string& strategy, std::optional<std::uint64_t> seed_override,
                      std::optional<double> alpha_override, const std::string& out_dir,
                      bool allow_partial = false);

EvalReport run_eval(const EncoderParams& params, const ParallelDataset& ds,
                    const std::string& out_dir,
                    const std::optional<std::string>& trec_dir = std::nullopt);

BiasReport run_bias(const EncoderParams& params, const ParallelDataset& ds,
                    const std::string& out_dir);

struct StrategyOutcome {
  std::string strategy;
  std::uint64_t seed = 0;
  EvalReport report;
};

struct StrategyMedians {
  MetricValues monolingual;
  MetricValues cross_lingual;
  MetricValues multilingual;
  double bias = 0.0;
};

struct ExperimentSummary {
  std::vector<StrategyOutcome> runs;
  std::map<std::string, StrategyMedians> medians;
};

// Generates the corpus, trains every strategy on every seed (identical data
// and init within a seed), evaluates each run on the full corpus, and writes
// per-run artifacts plus experiment.json, table_map.tsv, and table_bias.tsv
// under cfg.output_dir. Outputs depend only on cfg.
ExperimentSummary run_experiment(const PipelineConfig& cfg);

// Serialization helpers shared by the subcommands and tests.
std::string history_to_jsonl(const TrainingHistory& history);
std::string eval_report_to_json_text(const EvalReport& report);

// One TREC-style run file per setting (query id, Q0, doc id, rank, score,
// tag) for scoring with external tools.
void write_trec_runs(const EncoderParams& params, const ParallelDataset& ds,
                     const std::string& dir);

}  // namespace mdr
