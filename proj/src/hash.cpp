#include "forge/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>

#include "forge/error.hpp"

namespace forge {

namespace {

std::string to_hex(const unsigned char* digest, std::size_t len) {
    static const char* kHex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xf]);
    }
    return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw DataError("sha256 digest failed");
    }
    return to_hex(digest.data(), len);
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open file for hashing: " + path.string());
    }
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw DataError("sha256 init failed");
    }
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        std::streamsize got = in.gcount();
        if (got > 0 && EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(got)) != 1) {
            EVP_MD_CTX_free(ctx);
            throw DataError("sha256 update failed");
        }
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx, digest.data(), &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw DataError("sha256 final failed");
    }
    EVP_MD_CTX_free(ctx);
    return to_hex(digest.data(), len);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::int64_t derive_seed(std::string_view tag, int attempt, std::uint64_t salt) {
    std::uint64_t h = fnv1a64(tag) ^ (salt * 0x9e3779b97f4a7c15ull);
    h ^= static_cast<std::uint64_t>(attempt) + 0x2545f4914f6cdd1dull + (h << 6) + (h >> 2);
    return static_cast<std::int64_t>(h & 0x7fffffffffffffffull);
}

}  // namespace forge
