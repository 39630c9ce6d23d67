#include "btclf/hashing.h"

#include <gtest/gtest.h>

#include <set>

namespace btclf {
namespace {

TEST(Sha256Test, KnownVectors) {
  EXPECT_EQ(Sha256Hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(Sha256Hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(NormalizeWhitespaceTest, CollapsesAndTrims) {
  EXPECT_EQ(NormalizeWhitespace("  a \t b\n\nc  "), "a b c");
  EXPECT_EQ(NormalizeWhitespace(""), "");
  EXPECT_EQ(NormalizeWhitespace(" \n "), "");
}

TEST(FieldHasherTest, BoundariesDoNotAlias) {
  FieldHasher a, b;
  a.Add("ab").Add("c");
  b.Add("a").Add("bc");
  EXPECT_NE(a.HexDigest(), b.HexDigest());
}

TEST(FieldHasherTest, AbsentDiffersFromEmpty) {
  FieldHasher a, b;
  a.AddOptional(std::nullopt);
  b.AddOptional(std::string());
  EXPECT_NE(a.HexDigest(), b.HexDigest());
}

TEST(DeriveSeedTest, DeterministicAndTagSensitive) {
  EXPECT_EQ(DeriveSeed(42, "x"), DeriveSeed(42, "x"));
  std::set<uint64_t> seen;
  for (uint64_t s = 0; s < 50; ++s) {
    seen.insert(DeriveSeed(s, "a"));
    seen.insert(DeriveSeed(s, "b"));
  }
  EXPECT_EQ(seen.size(), 100u);
}

}  // namespace
}  // namespace btclf
