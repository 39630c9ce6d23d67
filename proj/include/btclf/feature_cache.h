#pragma once

#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "btclf/backends.h"

namespace btclf {

// Content-addressed store of pooled features.
//
// Backed by an optional JSONL file of {"key", "d", "values"} records that is
// read on open and appended to on every Put. Corrupt records are skipped
// (and counted) so the affected texts are simply recomputed. Any number of
// concurrent readers, one writer at a time; each record is written with a
// single flushed line.
class FeatureCache {
 public:
  FeatureCache() = default;
  explicit FeatureCache(const std::string& path);

  FeatureCache(const FeatureCache&) = delete;
  FeatureCache& operator=(const FeatureCache&) = delete;

  static std::string Key(std::string_view rendered_text, Position position,
                         LayerMode layer_mode, std::string_view model_id);

  std::optional<std::vector<double>> Get(const std::string& key) const;
  void Put(const std::string& key, const std::vector<double>& values);

  size_t size() const;
  size_t skipped_records() const { return skipped_; }

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::vector<double>> entries_;
  std::ofstream log_;
  size_t skipped_ = 0;
};

}  // namespace btclf
