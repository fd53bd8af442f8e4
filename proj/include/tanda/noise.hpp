#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tanda/corpus.hpp"

namespace tanda {

// Record of one label-flipping pass, sufficient to undo or replay it.
struct NoiseManifest {
  uint64_t seed = 0;
  double fraction = 0.0;
  std::vector<size_t> flipped_indices;  // sorted, distinct, < n_total
  size_t n_total = 0;

  std::string to_json() const;
  static NoiseManifest from_json(const std::string& text);
};

// k distinct indices from [0, n), sorted ascending. The draw is pinned for
// cross-platform reproducibility: the seed is expanded by splitmix64 into a
// xoshiro256** state, a partial Fisher-Yates pass over [0, n) takes the
// first k entries, and the result is sorted.
std::vector<size_t> sample_indices(size_t n, size_t k, uint64_t seed);

// Flips floor(fraction * N) labels at seeded positions; everything else is
// byte-identical. Returns the noisy pairs plus the manifest.
std::pair<std::vector<QAPair>, NoiseManifest> inject_noise(
    std::vector<QAPair> pairs, double fraction, uint64_t seed);

// Re-applies a manifest (flips the listed indices). Applying the same
// manifest twice restores the original labels.
void apply_manifest(std::vector<QAPair>& pairs, const NoiseManifest& manifest);

}  // namespace tanda
