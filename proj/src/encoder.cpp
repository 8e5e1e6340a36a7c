#include "mdr/encoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mdr/io.hpp"
#include "mdr/rng.hpp"

namespace mdr {

namespace {

constexpr std::string_view kQueryPrefix = "query:";
constexpr std::string_view kPassagePrefix = "passage:";

bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_punct(char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + ('a' - 'A')) : c;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> surface_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ascii_space(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_ascii_space(text[i])) ++i;
    if (i == start) break;

    std::size_t lo = start, hi = i;
    while (lo < hi && is_ascii_punct(text[lo])) ++lo;
    while (hi > lo && is_ascii_punct(text[hi - 1])) --hi;
    if (lo == hi) continue;

    std::string token;
    token.reserve(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) token.push_back(ascii_lower(text[k]));
    tokens.push_back(std::move(token));
  }
  return tokens;
}

std::vector<std::uint64_t> tokenize(std::string_view text, Role role,
                                    std::uint64_t vocab_buckets) {
  if (vocab_buckets == 0) throw std::invalid_argument("tokenize: vocab_buckets must be positive");
  std::vector<std::uint64_t> ids;
  const auto prefix = role == Role::Query ? kQueryPrefix : kPassagePrefix;
  ids.push_back(fnv1a64(prefix) % vocab_buckets);
  for (const auto& token : surface_tokens(text)) {
    ids.push_back(fnv1a64(token) % vocab_buckets);
  }
  return ids;
}

std::vector<double> encode_ids(const EncoderParams& params,
                               const std::vector<std::uint64_t>& ids) {
  const auto& cfg = params.config;
  if (ids.empty()) throw std::invalid_argument("encode: no token ids");

  std::vector<double> mean(cfg.embed_dim, 0.0);
  for (auto id : ids) {
    const auto row = params.embedding.row(id);
    for (std::size_t d = 0; d < cfg.embed_dim; ++d) mean[d] += row[d];
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (auto& x : mean) x *= inv;

  std::vector<double> out(cfg.out_dim, 0.0);
  for (std::size_t d = 0; d < cfg.embed_dim; ++d) {
    const double m = mean[d];
    if (m == 0.0) continue;
    const auto prow = params.projection.row(d);
    for (std::size_t k = 0; k < cfg.out_dim; ++k) out[k] += m * prow[k];
  }

  double norm_sq = 0.0;
  for (double x : out) norm_sq += x * x;
  const double norm = std::sqrt(norm_sq);
  if (norm == 0.0) throw std::runtime_error("degenerate embedding: zero vector before normalization");
  if (!std::isfinite(norm)) throw std::runtime_error("non-finite embedding");
  for (auto& x : out) x /= norm;
  return out;
}

std::vector<double> encode(const EncoderParams& params, std::string_view text, Role role) {
  return encode_ids(params, tokenize(text, role, params.config.vocab_buckets));
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine: dimension mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (std::abs(std::sqrt(uu) - 1.0) > 1e-6 || std::abs(std::sqrt(vv) - 1.0) > 1e-6) {
    throw std::invalid_argument("cosine: inputs must be unit length");
  }
  return uv;
}

void validate_config(const EncoderConfig& cfg) {
  if (cfg.vocab_buckets == 0) throw std::invalid_argument("encoder config: vocab_buckets must be positive");
  if (cfg.embed_dim == 0) throw std::invalid_argument("encoder config: embed_dim must be positive");
  if (cfg.out_dim == 0) throw std::invalid_argument("encoder config: out_dim must be positive");
}

EncoderParams init_params(const EncoderConfig& cfg) {
  validate_config(cfg);
  EncoderParams params;
  params.config = cfg;
  params.embedding = Matrix(cfg.vocab_buckets, cfg.embed_dim);
  params.projection = Matrix(cfg.embed_dim, cfg.out_dim);

  Rng rng(cfg.seed);
  auto fill_uniform = [&](Matrix& m) {
    for (auto& x : m.data) x = -0.05 + 0.1 * rng.next_double();
  };
  fill_uniform(params.embedding);
  fill_uniform(params.projection);
  return params;
}

void save_checkpoint(const EncoderParams& params, const std::string& path) {
  nlohmann::json j;
  j["format"] = "mdr.checkpoint";
  j["version"] = 1;
  j["encoder"] = {{"vocab_buckets", params.config.vocab_buckets},
                  {"embed_dim", params.config.embed_dim},
                  {"out_dim", params.config.out_dim},
                  {"seed", params.config.seed}};
  j["embedding"] = params.embedding.data;
  j["projection"] = params.projection.data;
  write_file_atomic(path, j.dump() + "\n");
}

EncoderParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("malformed checkpoint " + path + ": " + e.what());
  }

  if (j.value("format", "") != "mdr.checkpoint") {
    throw std::invalid_argument("not a checkpoint file: " + path);
  }
  if (j.value("version", 0) != 1) {
    throw std::invalid_argument("unsupported checkpoint version in " + path);
  }

  EncoderParams params;
  const auto& e = j.at("encoder");
  params.config.vocab_buckets = e.at("vocab_buckets").get<std::uint64_t>();
  params.config.embed_dim = e.at("embed_dim").get<std::size_t>();
  params.config.out_dim = e.at("out_dim").get<std::size_t>();
  params.config.seed = e.at("seed").get<std::uint64_t>();
  validate_config(params.config);

  params.embedding = Matrix(params.config.vocab_buckets, params.config.embed_dim);
  params.projection = Matrix(params.config.embed_dim, params.config.out_dim);
  const auto emb = j.at("embedding").get<std::vector<double>>();
  const auto proj = j.at("projection").get<std::vector<double>>();
  if (emb.size() != params.embedding.data.size() || proj.size() != params.projection.data.size()) {
    throw std::invalid_argument("checkpoint tensor sizes do not match its config: " + path);
  }
  for (double x : emb) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite embedding entry in " + path);
  }
  for (double x : proj) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite projection entry in " + path);
  }
  params.embedding.data = emb;
  params.projection.data = proj;
  return params;
}

}  // namespace mdr
