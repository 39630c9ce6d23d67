#pragma once

#include <optional>
#include <string>

namespace btclf {

// Raw input segments of one example; text_b only for sentence-pair tasks.
struct TextSegments {
  std::string text_a;
  std::optional<std::string> text_b;

  bool operator==(const TextSegments&) const = default;
};

struct LabeledExample {
  std::string text_a;
  std::optional<std::string> text_b;
  std::string label;

  TextSegments segments() const { return {text_a, text_b}; }
  bool operator==(const LabeledExample&) const = default;
};

// Content identity of the text alone, after whitespace normalization.
std::string ContentKey(const TextSegments& segments);
// Identity of a labeled example: content plus label.
std::string IdentityKey(const LabeledExample& example);

}  // namespace btclf
