#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mdr/matrix.hpp"

namespace mdr {

struct EncoderConfig {
  std::uint64_t vocab_buckets = 16384;
  std::size_t embed_dim = 32;
  std::size_t out_dim = 16;
  std::uint64_t seed = 1;
};

// Hashed bag-of-tokens dual encoder: token embeddings are mean-pooled,
// linearly projected, and L2-normalized. Queries and passages share all
// parameters; the role only switches the prefix token.
struct EncoderParams {
  EncoderConfig config;
  Matrix embedding;   // vocab_buckets x embed_dim
  Matrix projection;  // embed_dim x out_dim
};

enum class Role { Query, Passage };

// 64-bit FNV-1a over the token bytes. Fixed constants keep ids stable
// across platforms.
std::uint64_t fnv1a64(std::string_view bytes);

// Lowercased (ASCII) whitespace-separated tokens with leading/trailing ASCII
// punctuation stripped; tokens that strip to nothing are dropped.
std::vector<std::string> surface_tokens(std::string_view text);

// Bucket ids: the role prefix token ("query:" / "passage:", hashed as-is)
// followed by the hashed surface tokens. Empty text yields the prefix alone.
std::vector<std::uint64_t> tokenize(std::string_view text, Role role,
                                    std::uint64_t vocab_buckets);

// Unit-length embedding of the text under the given role. Throws
// std::runtime_error on a degenerate (zero before normalization) embedding.
std::vector<double> encode(const EncoderParams& params, std::string_view text, Role role);

// encode() after tokenization; exposed for callers that reuse token ids.
std::vector<double> encode_ids(const EncoderParams& params,
                               const std::vector<std::uint64_t>& ids);

// Dot product of two unit vectors. Throws std::invalid_argument if the sizes
// differ or either norm is off unit by more than 1e-6.
double cosine(const std::vector<double>& u, const std::vector<double>& v);

// Entries i.i.d. uniform in [-0.05, 0.05] from an Rng (xoshiro256**, see
// rng.hpp) seeded with cfg.seed; embedding is filled first, then projection,
// each row-major.
EncoderParams init_params(const EncoderConfig& cfg);

void validate_config(const EncoderConfig& cfg);

// JSON checkpoint, format "mdr.checkpoint" version 1: the encoder config
// plus both matrices as flat row-major arrays.
void save_checkpoint(const EncoderParams& params, const std::string& path);
EncoderParams load_checkpoint(const std::string& path);

}  // namespace mdr
