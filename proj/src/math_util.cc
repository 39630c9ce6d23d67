#include "btclf/math_util.h"

#include <algorithm>
#include <cmath>

#include "btclf/errors.h"

namespace btclf {

std::vector<double> LogSoftmax(std::span<const double> logits) {
  if (logits.empty()) throw ContractError("softmax of an empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  const double log_norm = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
  return out;
}

std::vector<double> Softmax(std::span<const double> logits) {
  if (logits.empty()) throw ContractError("softmax of an empty vector");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (auto& p : out) p /= sum;
  return out;
}

size_t ArgMax(std::span<const double> values) {
  if (values.empty()) throw ContractError("argmax of an empty vector");
  size_t best = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace btclf
