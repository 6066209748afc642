#include "negsynth/util.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace negsynth {

uint64_t fnv1a64(std::string_view data, uint64_t seed) {
    uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t derive_seed(uint64_t root, std::string_view stream, uint64_t index) {
    uint64_t h = fnv1a64(stream);
    for (int i = 0; i < 8; ++i) {
        h ^= (root >> (i * 8)) & 0xff;
        h *= 0x100000001b3ull;
    }
    for (int i = 0; i < 8; ++i) {
        h ^= (index >> (i * 8)) & 0xff;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t bounded_uniform(std::mt19937_64& rng, uint64_t n) {
    if (n == 0) throw std::invalid_argument("bounded_uniform: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % n;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;  // also trims leading whitespace
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!in_space) out.push_back(' ');
            in_space = true;
        } else {
            out.push_back(c);
            in_space = false;
        }
    }
    if (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

std::string normalize_for_containment(std::string_view s) {
    return collapse_whitespace(to_lower(s));
}

bool contains_normalized(std::string_view haystack, std::string_view needle) {
    return normalize_for_containment(haystack).find(normalize_for_containment(needle)) !=
           std::string::npos;
}

std::string normalize_answer(std::string_view s) {
    std::string depunct;
    depunct.reserve(s.size());
    for (char c : s) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc)) continue;
        depunct.push_back(static_cast<char>(std::tolower(uc)));
    }
    // Articles are whole whitespace-delimited words once punctuation is
    // gone, so a token filter implements the word-boundary rule.
    std::string out;
    for (const auto& token : split_whitespace(depunct)) {
        if (token == "a" || token == "an" || token == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += token;
    }
    return out;
}

std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("short write: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string file_digest(const std::filesystem::path& path) {
    const uint64_t h = fnv1a64(read_file(path));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace negsynth
