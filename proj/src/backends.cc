#include "btclf/backends.h"

#include <algorithm>
#include <sstream>

#include "btclf/errors.h"
#include "btclf/prompt.h"

namespace btclf {

std::string_view ToString(Position p) {
  return p == Position::kMask ? "mask" : "cls";
}

std::string_view ToString(LayerMode m) {
  return m == LayerMode::kLast4 ? "last4" : "last1";
}

Position ParsePosition(std::string_view s) {
  if (s == "mask") return Position::kMask;
  if (s == "cls") return Position::kCls;
  throw RequestError("unknown position '" + std::string(s) + "'");
}

LayerMode ParseLayerMode(std::string_view s) {
  if (s == "last4") return LayerMode::kLast4;
  if (s == "last1") return LayerMode::kLast1;
  throw RequestError("unknown layer_mode '" + std::string(s) + "'");
}

size_t LayerCount(LayerMode m) { return m == LayerMode::kLast4 ? 4 : 1; }

void ValidateRequest(const EncoderRequest& request) {
  if (request.position == Position::kMask &&
      CountOccurrences(request.rendered_text, kMaskToken) != 1) {
    throw RequestError("mask position requested but text has " +
                       std::to_string(CountOccurrences(request.rendered_text,
                                                       kMaskToken)) +
                       " mask slots");
  }
}

void ValidateHiddenStates(const LayerHiddenStates& states,
                          const EncoderRequest& request,
                          const EncoderMeta& meta) {
  const size_t want = LayerCount(request.layer_mode);
  if (states.vectors.size() != want) {
    throw ContractError("expected " + std::to_string(want) +
                        " layer vectors, got " +
                        std::to_string(states.vectors.size()));
  }
  if (states.d != meta.d) {
    throw ContractError("backend reported d=" + std::to_string(states.d) +
                        ", handshake said " + std::to_string(meta.d));
  }
  for (const auto& v : states.vectors) {
    if (v.size() != meta.d) {
      throw ContractError("layer vector of dimension " +
                          std::to_string(v.size()) + ", expected " +
                          std::to_string(meta.d));
    }
  }
}

FeatureVector PoolFeatures(const LayerHiddenStates& states,
                           Provenance provenance) {
  if (states.vectors.empty()) {
    throw ContractError("cannot pool an empty layer list");
  }
  FeatureVector out;
  out.values = states.vectors.front();
  for (size_t l = 1; l < states.vectors.size(); ++l) {
    const auto& v = states.vectors[l];
    if (v.size() != out.values.size()) {
      throw ContractError("ragged layer dimensions");
    }
    for (size_t j = 0; j < v.size(); ++j) {
      out.values[j] = std::max(out.values[j], v[j]);
    }
  }
  if (provenance.model_id.empty()) provenance.model_id = states.model_id;
  out.provenance = std::move(provenance);
  return out;
}

size_t TeacherBackend::CountTokens(std::string_view text) const {
  std::istringstream in{std::string(text)};
  size_t n = 0;
  for (std::string tok; in >> tok;) ++n;
  return n;
}

}  // namespace btclf
