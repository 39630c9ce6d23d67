#pragma once

#include <span>
#include <vector>

namespace btclf {

// Numerically stable softmax (max-shifted).
std::vector<double> Softmax(std::span<const double> logits);
std::vector<double> LogSoftmax(std::span<const double> logits);

// Index of the largest entry; the lowest index wins ties.
size_t ArgMax(std::span<const double> values);

}  // namespace btclf
