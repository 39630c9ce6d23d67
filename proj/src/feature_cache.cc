#include "btclf/feature_cache.h"

#include <spdlog/spdlog.h>

#include <cmath>
#include <json.hpp>

#include "btclf/errors.h"
#include "btclf/hashing.h"

namespace btclf {

namespace {

bool IsHexKey(const std::string& s) {
  return s.size() == 64 &&
         s.find_first_not_of("0123456789abcdef") == std::string::npos;
}

}  // namespace

FeatureCache::FeatureCache(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  size_t line_no = 0;
  while (in && std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      auto key = j.at("key").get<std::string>();
      auto d = j.at("d").get<size_t>();
      auto values = j.at("values").get<std::vector<double>>();
      if (!IsHexKey(key) || values.size() != d) {
        throw std::invalid_argument("bad key or dimension");
      }
      entries_[std::move(key)] = std::move(values);
    } catch (const std::exception& e) {
      ++skipped_;
      spdlog::warn("feature cache {}:{}: skipping corrupt record ({})", path,
                   line_no, e.what());
    }
  }
  log_.open(path, std::ios::app);
  if (!log_) throw IoError("cannot open feature cache " + path);
}

std::string FeatureCache::Key(std::string_view rendered_text,
                              Position position, LayerMode layer_mode,
                              std::string_view model_id) {
  FieldHasher h;
  h.Add(rendered_text).Add(ToString(position)).Add(ToString(layer_mode));
  h.Add(model_id);
  return h.HexDigest();
}

std::optional<std::vector<double>> FeatureCache::Get(
    const std::string& key) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void FeatureCache::Put(const std::string& key,
                       const std::vector<double>& values) {
  std::unique_lock lock(mu_);
  entries_[key] = values;
  if (log_.is_open()) {
    nlohmann::json j{{"key", key}, {"d", values.size()}, {"values", values}};
    log_ << j.dump() + "\n" << std::flush;
  }
}

size_t FeatureCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

}  // namespace btclf
