#pragma once

#include <cstddef>

#include "mdr/contrastive.hpp"
#include "mdr/corpus.hpp"
#include "mdr/rng.hpp"

namespace mdr {

// Batch samplers draw with replacement from a TripletPool. All draws come
// from the caller's Rng, so a fixed seed fixes the whole batch sequence.

// Picks one language uniformly among the pool's same-language keys, then
// fills the whole batch from that key. Throws std::invalid_argument when the
// pool has no same-language triplets.
Batch sample_mono_batch(const TripletPool& pool, std::size_t size, Rng& rng);

// Each slot independently picks an ordered (query language != passage
// language) key uniformly, then a triplet uniformly within it. Throws
// std::invalid_argument when the pool has no cross-language triplets.
Batch sample_cross_batch(const TripletPool& pool, std::size_t size, Rng& rng);

// Flips one coin per batch: mono with probability alpha, cross otherwise.
// alpha = 1 never needs cross triplets, alpha = 0 never needs mono ones;
// anything the setting could require must be present or this throws.
Batch sample_hybrid(const TripletPool& pool, std::size_t size, double alpha, Rng& rng);

}  // namespace mdr
