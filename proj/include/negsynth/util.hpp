#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

namespace negsynth {

// FNV-1a, 64 bit. Used for seed derivation and content digests; stable
// across platforms, unlike std::hash.
uint64_t fnv1a64(std::string_view data, uint64_t seed = 0xcbf29ce484222325ull);

// Derives the seed of a named random sub-stream from the root seed.
// Enabling one generator must not perturb another generator's stream, so
// every consumer draws from its own (name, index) stream.
uint64_t derive_seed(uint64_t root, std::string_view stream, uint64_t index = 0);

// Uniform integer in [0, n) by rejection sampling. mt19937_64 output is
// fully specified by the standard, so results are portable, which
// std::uniform_int_distribution does not guarantee.
uint64_t bounded_uniform(std::mt19937_64& rng, uint64_t n);

std::string to_lower(std::string_view s);

// Collapses whitespace runs to single spaces and trims the ends.
std::string collapse_whitespace(std::string_view s);

// Lowercase + whitespace collapse; the normalization used by the
// retrieval answer-containment test.
std::string normalize_for_containment(std::string_view s);

bool contains_normalized(std::string_view haystack, std::string_view needle);

// Answer-string normalization shared by scoring and label comparison:
// lowercase, drop punctuation, drop the articles a/an/the as whole
// words, collapse whitespace.
std::string normalize_answer(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

// Shortest round-trip decimal form, for byte-stable file output.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);

// Write via temp file + rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Hex FNV-1a digest of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

}  // namespace negsynth
