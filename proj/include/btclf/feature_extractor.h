#pragma once

#include <string>
#include <vector>

#include "btclf/backends.h"
#include "btclf/feature_cache.h"

namespace btclf {

struct ExtractionOptions {
  Position position = Position::kMask;
  LayerMode layer_mode = LayerMode::kLast4;
  // Maximum in-flight encoder requests.
  size_t fanout = 4;
};

// Rendered prompts -> pooled features, through an optional cache.
class FeatureExtractor {
 public:
  // Performs the metadata handshake; throws ContractError when the encoder
  // cannot serve the requested layer mode.
  FeatureExtractor(Encoder& encoder, FeatureCache* cache,
                   ExtractionOptions options = {});

  std::vector<FeatureVector> Extract(const std::vector<std::string>& rendered);

  const EncoderMeta& meta() const { return meta_; }
  const ExtractionOptions& options() const { return options_; }
  size_t encoder_calls() const { return encoder_calls_; }

 private:
  FeatureVector EncodeOne(const std::string& text);

  Encoder& encoder_;
  FeatureCache* cache_;
  ExtractionOptions options_;
  EncoderMeta meta_;
  size_t encoder_calls_ = 0;
};

}  // namespace btclf
