#include "mdr/sampler.hpp"

#include <cassert>
#include <stdexcept>

namespace mdr {

namespace {

std::vector<const TripletPool::value_type*> keys_matching(const TripletPool& pool, bool mono) {
  std::vector<const TripletPool::value_type*> keys;
  for (const auto& entry : pool) {
    if (entry.second.empty()) continue;
    if ((entry.first.first == entry.first.second) == mono) keys.push_back(&entry);
  }
  return keys;
}

void check_size(std::size_t size) {
  if (size == 0) throw std::invalid_argument("batch size must be positive");
}

}  // namespace

bool batch_mode_consistent(const Batch& batch) {
  for (const auto& t : batch.triplets) {
    if (t.pos_lang != t.neg_lang) return false;
    if (batch.kind == BatchKind::Mono) {
      if (t.query_lang != batch.mono_lang || t.pos_lang != batch.mono_lang) return false;
    } else {
      if (t.query_lang == t.pos_lang) return false;
    }
  }
  return true;
}

Batch sample_mono_batch(const TripletPool& pool, std::size_t size, Rng& rng) {
  check_size(size);
  const auto keys = keys_matching(pool, /*mono=*/true);
  if (keys.empty()) throw std::invalid_argument("sample_mono_batch: pool has no same-language triplets");

  const auto& entry = *keys[rng.next_below(keys.size())];
  Batch batch;
  batch.kind = BatchKind::Mono;
  batch.mono_lang = entry.first.first;
  batch.triplets.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    batch.triplets.push_back(entry.second[rng.next_below(entry.second.size())]);
  }
  assert(batch_mode_consistent(batch));
  return batch;
}

Batch sample_cross_batch(const TripletPool& pool, std::size_t size, Rng& rng) {
  check_size(size);
  const auto keys = keys_matching(pool, /*mono=*/false);
  if (keys.empty()) throw std::invalid_argument("sample_cross_batch: pool has no cross-language triplets");

  Batch batch;
  batch.kind = BatchKind::Cross;
  batch.triplets.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const auto& entry = *keys[rng.next_below(keys.size())];
    batch.triplets.push_back(entry.second[rng.next_below(entry.second.size())]);
  }
  assert(batch_mode_consistent(batch));
  return batch;
}

Batch sample_hybrid(const TripletPool& pool, std::size_t size, double alpha, Rng& rng) {
  check_size(size);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("sample_hybrid: alpha must lie in [0, 1]");
  if (alpha > 0.0 && keys_matching(pool, true).empty()) {
    throw std::invalid_argument("sample_hybrid: alpha > 0 but pool has no same-language triplets");
  }
  if (alpha < 1.0 && keys_matching(pool, false).empty()) {
    throw std::invalid_argument("sample_hybrid: alpha < 1 but pool has no cross-language triplets");
  }

  // One coin per batch, drawn unconditionally to keep the stream layout
  // independent of alpha.
  const bool mono = rng.next_double() < alpha;
  return mono ? sample_mono_batch(pool, size, rng) : sample_cross_batch(pool, size, rng);
}

}  // namespace mdr
