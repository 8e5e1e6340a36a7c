#include "mdr/contrastive.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mdr/sampler.hpp"

namespace mdr {

namespace {

// Forward pass of one text with the intermediates the backward pass needs.
struct TextActivation {
  std::vector<std::uint64_t> ids;
  std::vector<double> mean;  // embed_dim
  double norm = 0.0;         // length of the projected vector
  std::vector<double> unit;  // out_dim, final embedding
};

TextActivation forward_text(const EncoderParams& params, const std::string& text, Role role) {
  const auto& cfg = params.config;
  TextActivation act;
  act.ids = tokenize(text, role, cfg.vocab_buckets);

  act.mean.assign(cfg.embed_dim, 0.0);
  for (auto id : act.ids) {
    const auto row = params.embedding.row(id);
    for (std::size_t d = 0; d < cfg.embed_dim; ++d) act.mean[d] += row[d];
  }
  const double inv = 1.0 / static_cast<double>(act.ids.size());
  for (auto& x : act.mean) x *= inv;

  std::vector<double> z(cfg.out_dim, 0.0);
  for (std::size_t d = 0; d < cfg.embed_dim; ++d) {
    const double m = act.mean[d];
    const auto prow = params.projection.row(d);
    for (std::size_t k = 0; k < cfg.out_dim; ++k) z[k] += m * prow[k];
  }

  double norm_sq = 0.0;
  for (double x : z) norm_sq += x * x;
  act.norm = std::sqrt(norm_sq);
  if (act.norm == 0.0) throw std::runtime_error("degenerate embedding: zero vector before normalization");
  if (!std::isfinite(act.norm)) throw std::runtime_error("non-finite embedding");
  for (auto& x : z) x /= act.norm;
  act.unit = std::move(z);
  return act;
}

// Accumulates d(loss)/d(unit) back onto the parameter gradients.
void backward_text(const EncoderParams& params, const TextActivation& act,
                   const std::vector<double>& g_unit, EncoderGrad& grad) {
  const auto& cfg = params.config;

  // Through the normalization: g_z = (g_u - (g_u . u) u) / |z|.
  double g_dot_u = 0.0;
  for (std::size_t k = 0; k < cfg.out_dim; ++k) g_dot_u += g_unit[k] * act.unit[k];
  std::vector<double> g_z(cfg.out_dim);
  for (std::size_t k = 0; k < cfg.out_dim; ++k) {
    g_z[k] = (g_unit[k] - g_dot_u * act.unit[k]) / act.norm;
  }

  // Through the projection and the mean pool.
  std::vector<double> g_mean(cfg.embed_dim, 0.0);
  for (std::size_t d = 0; d < cfg.embed_dim; ++d) {
    const auto prow = params.projection.row(d);
    auto grow = grad.projection.row(d);
    const double m = act.mean[d];
    double acc = 0.0;
    for (std::size_t k = 0; k < cfg.out_dim; ++k) {
      acc += prow[k] * g_z[k];
      grow[k] += m * g_z[k];
    }
    g_mean[d] = acc;
  }

  const double inv = 1.0 / static_cast<double>(act.ids.size());
  for (auto id : act.ids) {
    auto erow = grad.embedding.row(id);
    for (std::size_t d = 0; d < cfg.embed_dim; ++d) erow[d] += g_mean[d] * inv;
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_batch(const Batch& batch) {
  if (batch.triplets.empty()) throw std::invalid_argument("empty batch");
  assert(batch_mode_consistent(batch));
}

// Shared forward/backward. `grad` may be null for loss-only evaluation.
double loss_impl(const EncoderParams& params, const Batch& batch, double score_scale,
                 EncoderGrad* grad) {
  check_batch(batch);
  const std::size_t n = batch.triplets.size();

  std::vector<TextActivation> queries, positives, negatives;
  queries.reserve(n);
  positives.reserve(n);
  negatives.reserve(n);
  for (const auto& t : batch.triplets) {
    queries.push_back(forward_text(params, t.query_text, Role::Query));
    positives.push_back(forward_text(params, t.pos_text, Role::Passage));
    negatives.push_back(forward_text(params, t.neg_text, Role::Passage));
  }

  std::vector<std::vector<double>> g_q, g_p, g_n;
  if (grad) {
    const auto zero = std::vector<double>(params.config.out_dim, 0.0);
    g_q.assign(n, zero);
    g_p.assign(n, zero);
    g_n.assign(n, zero);
  }

  double loss = 0.0;
  std::vector<double> e_neg(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s_pos = dot(queries[i].unit, positives[i].unit);
    const double e_pos = std::exp(score_scale * s_pos);
    double denom = e_pos;
    for (std::size_t j = 0; j < n; ++j) {
      e_neg[j] = std::exp(score_scale * dot(queries[i].unit, negatives[j].unit));
      denom += e_neg[j];
    }
    loss += std::log(denom) - score_scale * s_pos;

    if (grad) {
      const double c_pos = score_scale * (e_pos / denom - 1.0);
      for (std::size_t k = 0; k < queries[i].unit.size(); ++k) {
        g_q[i][k] += c_pos * positives[i].unit[k];
        g_p[i][k] += c_pos * queries[i].unit[k];
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double c_neg = score_scale * e_neg[j] / denom;
        for (std::size_t k = 0; k < queries[i].unit.size(); ++k) {
          g_q[i][k] += c_neg * negatives[j].unit[k];
          g_n[j][k] += c_neg * queries[i].unit[k];
        }
      }
    }
  }

  if (grad) {
    for (std::size_t i = 0; i < n; ++i) backward_text(params, queries[i], g_q[i], *grad);
    for (std::size_t i = 0; i < n; ++i) backward_text(params, positives[i], g_p[i], *grad);
    for (std::size_t i = 0; i < n; ++i) backward_text(params, negatives[i], g_n[i], *grad);
  }
  return loss;
}

}  // namespace

double infonce_loss(const EncoderParams& params, const Batch& batch, double score_scale) {
  return loss_impl(params, batch, score_scale, nullptr);
}

EncoderGrad infonce_grad(const EncoderParams& params, const Batch& batch, double score_scale) {
  return infonce_loss_grad(params, batch, score_scale).grad;
}

LossGrad infonce_loss_grad(const EncoderParams& params, const Batch& batch, double score_scale) {
  LossGrad out;
  out.grad.embedding = Matrix(params.embedding.rows, params.embedding.cols);
  out.grad.projection = Matrix(params.projection.rows, params.projection.cols);
  out.loss = loss_impl(params, batch, score_scale, &out.grad);
  return out;
}

AdamWState AdamWState::make(const EncoderParams& params, double lr, double weight_decay) {
  AdamWState state;
  state.lr = lr;
  state.weight_decay = weight_decay;
  state.m_embedding = Matrix(params.embedding.rows, params.embedding.cols);
  state.v_embedding = Matrix(params.embedding.rows, params.embedding.cols);
  state.m_projection = Matrix(params.projection.rows, params.projection.cols);
  state.v_projection = Matrix(params.projection.rows, params.projection.cols);
  return state;
}

namespace {

void adamw_tensor(Matrix& theta, Matrix& m, Matrix& v, const Matrix& g,
                  const AdamWState& s, double bias1, double bias2) {
  for (std::size_t i = 0; i < theta.data.size(); ++i) {
    const double gi = g.data[i];
    m.data[i] = s.beta1 * m.data[i] + (1.0 - s.beta1) * gi;
    v.data[i] = s.beta2 * v.data[i] + (1.0 - s.beta2) * gi * gi;
    const double mhat = m.data[i] / bias1;
    const double vhat = v.data[i] / bias2;
    theta.data[i] -= s.lr * (mhat / (std::sqrt(vhat) + s.eps) + s.weight_decay * theta.data[i]);
  }
}

}  // namespace

void adamw_step(AdamWState& state, EncoderParams& params, const EncoderGrad& grad) {
  if (!same_shape(params.embedding, grad.embedding) ||
      !same_shape(params.projection, grad.projection) ||
      !same_shape(params.embedding, state.m_embedding) ||
      !same_shape(params.projection, state.m_projection)) {
    throw std::invalid_argument("adamw_step: tensor shapes disagree");
  }

  state.step += 1;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  adamw_tensor(params.embedding, state.m_embedding, state.v_embedding, grad.embedding,
               state, bias1, bias2);
  adamw_tensor(params.projection, state.m_projection, state.v_projection, grad.projection,
               state, bias1, bias2);
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.batch_size < 2) throw std::invalid_argument("train config: batch_size must be at least 2");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw std::invalid_argument("train config: alpha must lie in [0, 1]");
  if (cfg.patience < 1) throw std::invalid_argument("train config: patience must be at least 1");
  if (cfg.max_steps < 1) throw std::invalid_argument("train config: max_steps must be at least 1");
  if (cfg.eval_every < 1) throw std::invalid_argument("train config: eval_every must be at least 1");
  if (!(cfg.lr >= 0.0)) throw std::invalid_argument("train config: lr must be non-negative");
  if (!(cfg.weight_decay >= 0.0)) throw std::invalid_argument("train config: weight_decay must be non-negative");
  if (!(cfg.score_scale > 0.0)) throw std::invalid_argument("train config: score_scale must be positive");
}

double validation_loss(const EncoderParams& params, const TripletPool& valid_pool,
                       const LanguageTag& lang, std::size_t batch_size, double score_scale) {
  if (batch_size == 0) throw std::invalid_argument("validation_loss: batch_size must be positive");
  auto it = valid_pool.find({lang, lang});
  if (it == valid_pool.end() || it->second.empty()) {
    throw std::invalid_argument("validation_loss: pool has no (" + lang + ", " + lang + ") triplets");
  }

  const auto& triplets = it->second;
  double sum = 0.0;
  std::size_t n_batches = 0;
  for (std::size_t off = 0; off < triplets.size(); off += batch_size) {
    const auto end = std::min(off + batch_size, triplets.size());
    Batch batch;
    batch.kind = BatchKind::Mono;
    batch.mono_lang = lang;
    batch.triplets.assign(triplets.begin() + off, triplets.begin() + end);
    sum += infonce_loss(params, batch, score_scale) / static_cast<double>(batch.triplets.size());
    ++n_batches;
  }
  return sum / static_cast<double>(n_batches);
}

TrainResult train(const TrainConfig& cfg, const TripletPool& train_pool,
                  const TripletPool& valid_pool, const EncoderConfig& enc_cfg) {
  validate_config(cfg);
  validate_config(enc_cfg);

  // Fail before any work if the pools cannot support the configuration.
  {
    bool has_mono = false, has_cross = false;
    for (const auto& [key, triplets] : train_pool) {
      if (triplets.empty()) continue;
      (key.first == key.second ? has_mono : has_cross) = true;
    }
    if (cfg.alpha > 0.0 && !has_mono) {
      throw std::invalid_argument("train: alpha > 0 but the pool has no same-language triplets");
    }
    if (cfg.alpha < 1.0 && !has_cross) {
      throw std::invalid_argument("train: alpha < 1 but the pool has no cross-language triplets");
    }
    auto v = valid_pool.find({cfg.validation_language, cfg.validation_language});
    if (v == valid_pool.end() || v->second.empty()) {
      throw std::invalid_argument("train: validation pool has no (" + cfg.validation_language +
                                  ", " + cfg.validation_language + ") triplets");
    }
  }

  EncoderParams params = init_params(enc_cfg);
  AdamWState opt = AdamWState::make(params, cfg.lr, cfg.weight_decay);
  Rng rng(cfg.seed);

  TrainResult result;
  result.params = params;
  result.history.best_valid_loss = std::numeric_limits<double>::infinity();
  std::size_t evals_since_improvement = 0;

  EncoderGrad grad;
  grad.embedding = Matrix(params.embedding.rows, params.embedding.cols);
  grad.projection = Matrix(params.projection.rows, params.projection.cols);

  for (std::uint64_t step = 1; step <= cfg.max_steps; ++step) {
    const Batch batch = sample_hybrid(train_pool, cfg.batch_size, cfg.alpha, rng);

    grad.embedding.fill(0.0);
    grad.projection.fill(0.0);
    const double loss = loss_impl(params, batch, cfg.score_scale, &grad);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                               " (" + (batch.kind == BatchKind::Mono ? "mono" : "cross") +
                               " batch); try a smaller lr or score_scale");
    }
    adamw_step(opt, params, grad);

    HistoryRecord rec;
    rec.step = step;
    rec.train_loss = loss / static_cast<double>(batch.triplets.size());
    rec.kind = batch.kind;
    rec.mono_lang = batch.mono_lang;

    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      const double vl = validation_loss(params, valid_pool, cfg.validation_language,
                                        cfg.batch_size, cfg.score_scale);
      rec.valid_loss = vl;
      if (vl < result.history.best_valid_loss) {
        result.history.best_valid_loss = vl;
        result.history.best_step = step;
        result.params = params;
        evals_since_improvement = 0;
      } else {
        ++evals_since_improvement;
      }
      result.history.records.push_back(rec);
      if (evals_since_improvement >= cfg.patience) break;
      continue;
    }
    result.history.records.push_back(rec);
  }
  return result;
}

}  // namespace mdr
