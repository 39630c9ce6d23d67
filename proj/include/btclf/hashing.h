#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace btclf {

// Lowercase hex SHA-256 of raw bytes.
std::string Sha256Hex(std::string_view bytes);
std::string Sha256Hex(std::span<const unsigned char> bytes);

// Collapses runs of whitespace to one space and trims both ends.
std::string NormalizeWhitespace(std::string_view text);

// Hash over a sequence of fields, length-prefixed so that field boundaries
// cannot alias ("ab","c" != "a","bc").
class FieldHasher {
 public:
  FieldHasher& Add(std::string_view field);
  FieldHasher& AddOptional(const std::optional<std::string>& field);
  std::string HexDigest() const { return Sha256Hex(buffer_); }

 private:
  std::string buffer_;
};

uint64_t Fnv1a64(std::string_view bytes);

// Mixes a base seed with a string tag into an independent 64-bit seed.
uint64_t DeriveSeed(uint64_t seed, std::string_view tag);

}  // namespace btclf
