#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace btclf {

enum class Position { kMask, kCls };
enum class LayerMode { kLast4, kLast1 };

std::string_view ToString(Position p);
std::string_view ToString(LayerMode m);
Position ParsePosition(std::string_view s);
LayerMode ParseLayerMode(std::string_view s);
size_t LayerCount(LayerMode m);

struct EncoderRequest {
  std::string rendered_text;
  Position position = Position::kMask;
  LayerMode layer_mode = LayerMode::kLast4;
};

// Throws RequestError unless a MASK request carries exactly one mask slot.
void ValidateRequest(const EncoderRequest& request);

// Hidden states at the requested position, one vector per requested layer,
// ordered from the lowest requested layer to the last.
struct LayerHiddenStates {
  std::vector<std::vector<double>> vectors;
  size_t d = 0;
  std::string model_id;
};

struct Provenance {
  Position position = Position::kMask;
  LayerMode layer_mode = LayerMode::kLast4;
  std::string model_id;

  bool operator==(const Provenance&) const = default;
};

struct FeatureVector {
  std::vector<double> values;
  Provenance provenance;
};

struct EncoderMeta {
  size_t d = 0;
  size_t num_layers = 0;
  std::string model_id;
};

// Checks the shape contract of a response against the request and the
// handshake. Throws ContractError.
void ValidateHiddenStates(const LayerHiddenStates& states,
                          const EncoderRequest& request,
                          const EncoderMeta& meta);

// Coordinate-wise max over layers. Throws ContractError on an empty list or
// ragged dimensions.
FeatureVector PoolFeatures(const LayerHiddenStates& states,
                           Provenance provenance = {});

// Black-box encoder: hidden states at one position, no gradients.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual EncoderMeta Meta() = 0;
  virtual LayerHiddenStates Encode(const EncoderRequest& request) = 0;
};

// Trainable masked-LM teacher, driven through label words at the mask.
//
// TrainBatch runs one micro-batch; parameters change only when
// apply_update is set, so gradient accumulation is decided by the caller.
// Predict must be safe to call concurrently when no training is running.
class TeacherBackend {
 public:
  virtual ~TeacherBackend() = default;

  virtual double TrainBatch(const std::vector<std::string>& texts,
                            const std::vector<std::string>& gold_words,
                            double learning_rate, bool apply_update) = 0;
  // Logits of each candidate word at the mask, one row per text.
  virtual std::vector<std::vector<double>> Predict(
      const std::vector<std::string>& texts,
      const std::vector<std::string>& candidate_words) = 0;
  virtual std::string Save() = 0;
  virtual void Load(const std::string& artifact_id) = 0;
  // Whitespace tokens unless the backend knows better.
  virtual size_t CountTokens(std::string_view text) const;
};

}  // namespace btclf
