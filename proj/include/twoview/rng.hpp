#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace twoview {

/// splitmix64 step; used to derive independent substream seeds so that
/// parallel trials/hypotheses/starts are reproducible regardless of
/// scheduling (one engine per index, never shared).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for substream `index` of the stream identified by (seed, salt).
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index,
                                    std::uint64_t salt = 0) {
  std::uint64_t s = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
  splitmix64(s);
  s ^= index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
  splitmix64(s);
  return splitmix64(s);
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t index = 0,
                                   std::uint64_t salt = 0) {
  return std::mt19937_64(substream_seed(seed, index, salt));
}

/// First k entries of a partial Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::size_t> sample_distinct(std::mt19937_64& eng,
                                                std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(eng)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace twoview
