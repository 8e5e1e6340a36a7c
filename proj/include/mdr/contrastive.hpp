#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mdr/corpus.hpp"
#include "mdr/encoder.hpp"
#include "mdr/matrix.hpp"

namespace mdr {

enum class BatchKind { Mono, Cross };

// A training batch. Mono batches hold triplets of a single language
// (mono_lang); cross batches hold triplets whose query language differs from
// the passage language in every slot.
struct Batch {
  std::vector<Triplet> triplets;
  BatchKind kind = BatchKind::Mono;
  LanguageTag mono_lang;  // set iff kind == Mono
};

bool batch_mode_consistent(const Batch& batch);

struct EncoderGrad {
  Matrix embedding;
  Matrix projection;
};

// Decoupled-weight-decay Adam. The moment tensors mirror the parameter
// shapes; step counts from zero.
struct AdamWState {
  std::uint64_t step = 0;
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  Matrix m_embedding, v_embedding;
  Matrix m_projection, v_projection;

  static AdamWState make(const EncoderParams& params, double lr = 3e-5,
                         double weight_decay = 1e-2);
};

struct TrainConfig {
  std::size_t batch_size = 100;
  double alpha = 0.5;  // probability that a batch is monolingual
  std::size_t max_steps = 1000;
  std::size_t eval_every = 100;
  std::size_t patience = 5;  // non-improving evaluations before stopping
  std::uint64_t seed = 1;
  LanguageTag validation_language = "en";
  double lr = 3e-5;
  double weight_decay = 1e-2;
  // Multiplies scores before exponentiation; 1.0 leaves the objective in its
  // plain cosine form.
  double score_scale = 1.0;
};

void validate_config(const TrainConfig& cfg);

// Softmax contrastive loss over the batch. For each query the positive
// competes against every slot's negative (its own included); other queries'
// positives are not counted as negatives:
//
//   loss = sum_i -log( e^{s(q_i, p_i)} / (e^{s(q_i, p_i)} + sum_j e^{s(q_i, n_j)}) )
//
// with s(a, b) = cosine of the encodings, optionally scaled.
double infonce_loss(const EncoderParams& params, const Batch& batch,
                    double score_scale = 1.0);

// Analytic gradient of infonce_loss with respect to both parameter tensors.
// Rows of buckets that appear in no batch text are exactly zero.
EncoderGrad infonce_grad(const EncoderParams& params, const Batch& batch,
                         double score_scale = 1.0);

struct LossGrad {
  double loss = 0.0;
  EncoderGrad grad;
};

LossGrad infonce_loss_grad(const EncoderParams& params, const Batch& batch,
                           double score_scale = 1.0);

// In-place update:
//   t += 1
//   m = b1*m + (1-b1)*g          v = b2*v + (1-b2)*g^2
//   mhat = m/(1-b1^t)            vhat = v/(1-b2^t)
//   theta -= lr * (mhat / (sqrt(vhat) + eps) + wd * theta)
void adamw_step(AdamWState& state, EncoderParams& params, const EncoderGrad& grad);

struct HistoryRecord {
  std::uint64_t step = 0;
  double train_loss = 0.0;  // per query
  BatchKind kind = BatchKind::Mono;
  LanguageTag mono_lang;
  std::optional<double> valid_loss;
};

struct TrainingHistory {
  std::vector<HistoryRecord> records;
  std::uint64_t best_step = 0;
  double best_valid_loss = 0.0;
};

struct TrainResult {
  EncoderParams params;  // checkpoint with the lowest validation loss
  TrainingHistory history;
};

// Runs hybrid-batch training: initializes from enc_cfg, samples batches from
// train_pool (mono with probability cfg.alpha), evaluates on valid_pool every
// eval_every steps, and early-stops after cfg.patience non-improving
// evaluations. Deterministic given the config seeds. Throws
// std::runtime_error if the loss turns non-finite.
TrainResult train(const TrainConfig& cfg, const TripletPool& train_pool,
                  const TripletPool& valid_pool, const EncoderConfig& enc_cfg);

// Mean per-query loss over the (lang, lang) triplets of the pool, taken in
// pool order in fixed batches of batch_size (last one possibly short).
double validation_loss(const EncoderParams& params, const TripletPool& valid_pool,
                       const LanguageTag& lang, std::size_t batch_size,
                       double score_scale = 1.0);

}  // namespace mdr
