#include "btclf/hashing.h"

#include <openssl/sha.h>

#include <cctype>

namespace btclf {

std::string Sha256Hex(std::span<const unsigned char> bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(bytes.data(), bytes.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(2 * SHA256_DIGEST_LENGTH, '0');
  for (int i = 0; i < SHA256_DIGEST_LENGTH; ++i) {
    out[2 * i] = kHex[digest[i] >> 4];
    out[2 * i + 1] = kHex[digest[i] & 0xf];
  }
  return out;
}

std::string Sha256Hex(std::string_view bytes) {
  return Sha256Hex(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()));
}

std::string NormalizeWhitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

FieldHasher& FieldHasher::Add(std::string_view field) {
  buffer_ += std::to_string(field.size());
  buffer_.push_back(':');
  buffer_.append(field);
  return *this;
}

FieldHasher& FieldHasher::AddOptional(const std::optional<std::string>& field) {
  if (!field) {
    buffer_ += "-;";
    return *this;
  }
  return Add(std::string_view(*field));
}

uint64_t Fnv1a64(std::string_view bytes) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t DeriveSeed(uint64_t seed, std::string_view tag) {
  // splitmix64 finalizer over the combined value
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (Fnv1a64(tag) | 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace btclf
