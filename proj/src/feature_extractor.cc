#include "btclf/feature_extractor.h"

#include <algorithm>
#include <future>

#include "btclf/errors.h"

namespace btclf {

FeatureExtractor::FeatureExtractor(Encoder& encoder, FeatureCache* cache,
                                   ExtractionOptions options)
    : encoder_(encoder), cache_(cache), options_(options), meta_(encoder.Meta()) {
  if (meta_.d == 0) throw ContractError("encoder reported d=0");
  if (meta_.num_layers < LayerCount(options_.layer_mode)) {
    throw ContractError("encoder has " + std::to_string(meta_.num_layers) +
                        " layers, " + std::string(ToString(options_.layer_mode)) +
                        " needs " +
                        std::to_string(LayerCount(options_.layer_mode)));
  }
  options_.fanout = std::max<size_t>(options_.fanout, 1);
}

FeatureVector FeatureExtractor::EncodeOne(const std::string& text) {
  EncoderRequest request{text, options_.position, options_.layer_mode};
  auto states = encoder_.Encode(request);
  ValidateHiddenStates(states, request, meta_);
  return PoolFeatures(states, {options_.position, options_.layer_mode,
                               meta_.model_id});
}

std::vector<FeatureVector> FeatureExtractor::Extract(
    const std::vector<std::string>& rendered) {
  const Provenance provenance{options_.position, options_.layer_mode,
                              meta_.model_id};
  std::vector<FeatureVector> out(rendered.size());
  std::vector<size_t> misses;
  std::vector<std::string> keys(rendered.size());
  for (size_t i = 0; i < rendered.size(); ++i) {
    keys[i] = FeatureCache::Key(rendered[i], options_.position,
                                options_.layer_mode, meta_.model_id);
    std::optional<std::vector<double>> hit;
    if (cache_ != nullptr) hit = cache_->Get(keys[i]);
    if (hit && hit->size() == meta_.d) {
      out[i] = {std::move(*hit), provenance};
    } else {
      misses.push_back(i);
    }
  }

  // Each response lands at its request's index, so completion order does
  // not matter.
  for (size_t start = 0; start < misses.size(); start += options_.fanout) {
    const size_t end = std::min(misses.size(), start + options_.fanout);
    if (end - start == 1 || options_.fanout == 1) {
      for (size_t m = start; m < end; ++m) out[misses[m]] = EncodeOne(rendered[misses[m]]);
    } else {
      std::vector<std::future<FeatureVector>> inflight;
      for (size_t m = start; m < end; ++m) {
        inflight.push_back(std::async(std::launch::async, [this, &rendered,
                                                           i = misses[m]] {
          return EncodeOne(rendered[i]);
        }));
      }
      for (size_t m = start; m < end; ++m) {
        out[misses[m]] = inflight[m - start].get();
      }
    }
    for (size_t m = start; m < end; ++m) {
      if (cache_ != nullptr) cache_->Put(keys[misses[m]], out[misses[m]].values);
    }
  }
  encoder_calls_ += misses.size();
  return out;
}

}  // namespace btclf
