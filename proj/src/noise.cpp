#include "tanda/noise.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "tanda/errors.hpp"
#include "tanda/rng.hpp"

namespace tanda {

std::string NoiseManifest::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["fraction"] = fraction;
  j["n_total"] = n_total;
  j["flipped_indices"] = flipped_indices;
  return j.dump(2);
}

NoiseManifest NoiseManifest::from_json(const std::string& text) {
  NoiseManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.seed = j.at("seed").get<uint64_t>();
    m.fraction = j.at("fraction").get<double>();
    m.n_total = j.at("n_total").get<size_t>();
    m.flipped_indices = j.at("flipped_indices").get<std::vector<size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad noise manifest: ") + e.what());
  }
  return m;
}

std::vector<size_t> sample_indices(size_t n, size_t k, uint64_t seed) {
  if (k > n) {
    throw ConfigError("cannot sample " + std::to_string(k) + " of " +
                      std::to_string(n) + " indices");
  }
  auto rng = Xoshiro256ss::seeded(seed);
  std::vector<size_t> picked = sample_without_replacement(n, k, rng);
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::pair<std::vector<QAPair>, NoiseManifest> inject_noise(
    std::vector<QAPair> pairs, double fraction, uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) {
    throw ConfigError("noise fraction must lie in [0, 1]");
  }
  NoiseManifest manifest;
  manifest.seed = seed;
  manifest.fraction = fraction;
  manifest.n_total = pairs.size();
  const size_t flips = static_cast<size_t>(
      std::floor(fraction * static_cast<double>(pairs.size())));
  manifest.flipped_indices = sample_indices(pairs.size(), flips, seed);
  apply_manifest(pairs, manifest);
  return {std::move(pairs), std::move(manifest)};
}

void apply_manifest(std::vector<QAPair>& pairs, const NoiseManifest& manifest) {
  if (manifest.n_total != pairs.size()) {
    throw DataError("manifest covers " + std::to_string(manifest.n_total) +
                    " pairs, dataset has " + std::to_string(pairs.size()));
  }
  for (size_t idx : manifest.flipped_indices) {
    if (idx >= pairs.size()) {
      throw DataError("manifest index out of range: " + std::to_string(idx));
    }
    pairs[idx].label = 1 - pairs[idx].label;
  }
}

}  // namespace tanda
