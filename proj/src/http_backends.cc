#include "btclf/http_backends.h"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

namespace btclf {

namespace {

using nlohmann::json;

httplib::Client MakeClient(const std::string& base_url,
                           std::chrono::seconds timeout) {
  httplib::Client cli(base_url);
  cli.set_connection_timeout(std::chrono::seconds(5));
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  return cli;
}

json CheckResponse(const httplib::Result& res, const std::string& what) {
  if (!res) {
    throw BackendError(what + ": transport failure (" +
                           httplib::to_string(res.error()) + ")",
                       true);
  }
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::parse_error&) {
    if (res->status >= 500) {
      throw BackendError(what + ": HTTP " + std::to_string(res->status), true);
    }
    throw ContractError(what + ": response is not JSON");
  }
  if (res->status >= 400 && res->status < 500) {
    throw RequestError(what + ": " + body.value("error", res->body));
  }
  if (res->status >= 500) {
    throw BackendError(what + ": HTTP " + std::to_string(res->status) + " " +
                           body.value("error", std::string()),
                       true);
  }
  return body;
}

json Post(const std::string& base_url, std::chrono::seconds timeout,
          const RetryPolicy& retry, const std::string& path, const json& req) {
  return WithRetry(retry, [&] {
    auto cli = MakeClient(base_url, timeout);
    return CheckResponse(cli.Post(path, req.dump(), "application/json"),
                         "POST " + path);
  });
}

template <typename T>
T Field(const json& j, const char* name) {
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed response field '") + name +
                        "': " + e.what());
  }
}

// Runs `fn` with `mu` held, mapping exceptions onto HTTP statuses.
template <typename Fn>
void Handle(std::mutex& mu, httplib::Response& res, Fn&& fn) {
  try {
    json body;
    {
      std::lock_guard lock(mu);
      body = fn();
    }
    res.set_content(body.dump(), "application/json");
  } catch (const RequestError& e) {
    res.status = 400;
    res.set_content(json{{"error", e.what()}}.dump(), "application/json");
  } catch (const json::exception& e) {
    res.status = 400;
    res.set_content(json{{"error", e.what()}}.dump(), "application/json");
  } catch (const ContractError& e) {
    res.status = 400;
    res.set_content(json{{"error", e.what()}}.dump(), "application/json");
  } catch (const ValidationError& e) {
    res.status = 400;
    res.set_content(json{{"error", e.what()}}.dump(), "application/json");
  } catch (const BackendError& e) {
    res.status = e.retryable() ? 503 : 400;
    res.set_content(json{{"error", e.what()}}.dump(), "application/json");
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(json{{"error", e.what()}}.dump(), "application/json");
  }
}

}  // namespace

HttpEncoder::HttpEncoder(std::string base_url, RetryPolicy retry,
                         std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), retry_(retry), timeout_(timeout) {}

EncoderMeta HttpEncoder::Meta() {
  auto body = WithRetry(retry_, [&] {
    auto cli = MakeClient(base_url_, timeout_);
    return CheckResponse(cli.Get("/meta"), "GET /meta");
  });
  return {Field<size_t>(body, "d"), Field<size_t>(body, "num_layers"),
          Field<std::string>(body, "model_id")};
}

LayerHiddenStates HttpEncoder::Encode(const EncoderRequest& request) {
  ValidateRequest(request);
  json req{{"text", request.rendered_text},
           {"position", ToString(request.position)},
           {"layer_mode", ToString(request.layer_mode)}};
  auto body = Post(base_url_, timeout_, retry_, "/encode", req);
  LayerHiddenStates out;
  out.d = Field<size_t>(body, "d");
  out.vectors = Field<std::vector<std::vector<double>>>(body, "layers");
  out.model_id = Field<std::string>(body, "model_id");
  return out;
}

HttpTeacher::HttpTeacher(std::string base_url, RetryPolicy retry,
                         std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), retry_(retry), timeout_(timeout) {}

double HttpTeacher::TrainBatch(const std::vector<std::string>& texts,
                               const std::vector<std::string>& gold_words,
                               double learning_rate, bool apply_update) {
  json req{{"texts", texts},
           {"gold_words", gold_words},
           {"lr", learning_rate},
           {"apply_update", apply_update}};
  auto body = Post(base_url_, timeout_, retry_, "/train_batch", req);
  return body.value("loss", 0.0);
}

std::vector<std::vector<double>> HttpTeacher::Predict(
    const std::vector<std::string>& texts,
    const std::vector<std::string>& candidate_words) {
  json req{{"texts", texts}, {"candidate_words", candidate_words}};
  auto body = Post(base_url_, timeout_, retry_, "/predict", req);
  auto logits = Field<std::vector<std::vector<double>>>(body, "logits");
  if (logits.size() != texts.size()) {
    throw ContractError("predict returned " + std::to_string(logits.size()) +
                        " rows for " + std::to_string(texts.size()) + " texts");
  }
  for (const auto& row : logits) {
    if (row.size() != candidate_words.size()) {
      throw ContractError("predict row width does not match candidates");
    }
  }
  return logits;
}

std::string HttpTeacher::Save() {
  auto body = Post(base_url_, timeout_, retry_, "/save", json::object());
  return Field<std::string>(body, "artifact_id");
}

void HttpTeacher::Reset() {
  Post(base_url_, timeout_, retry_, "/reset", json::object());
}

void HttpTeacher::Load(const std::string& artifact_id) {
  Post(base_url_, timeout_, retry_, "/load", json{{"artifact_id", artifact_id}});
}

BackendServer::BackendServer() : server_(std::make_unique<httplib::Server>()) {}

BackendServer::~BackendServer() { Stop(); }

void BackendServer::ServeEncoder(std::shared_ptr<Encoder> encoder) {
  server_->Get("/meta", [this, encoder](const httplib::Request&,
                                        httplib::Response& res) {
    Handle(mu_, res, [&] {
      auto meta = encoder->Meta();
      return json{{"d", meta.d},
                  {"num_layers", meta.num_layers},
                  {"model_id", meta.model_id}};
    });
  });
  server_->Post("/encode", [this, encoder](const httplib::Request& req,
                                           httplib::Response& res) {
    Handle(mu_, res, [&] {
      auto j = json::parse(req.body);
      EncoderRequest request{j.at("text").get<std::string>(),
                             ParsePosition(j.at("position").get<std::string>()),
                             ParseLayerMode(j.at("layer_mode").get<std::string>())};
      auto states = encoder->Encode(request);
      return json{{"d", states.d},
                  {"layers", states.vectors},
                  {"model_id", states.model_id}};
    });
  });
}

void BackendServer::ServeTeacher(
    std::function<std::shared_ptr<TeacherBackend>()> factory) {
  teacher_ = factory();
  server_->Post("/reset", [this, factory](const httplib::Request&,
                                          httplib::Response& res) {
    Handle(mu_, res, [&] {
      teacher_ = factory();
      return json{{"ok", true}};
    });
  });
  server_->Post("/train_batch", [this](const httplib::Request& req,
                                       httplib::Response& res) {
    Handle(mu_, res, [&] {
      auto j = json::parse(req.body);
      double loss = teacher_->TrainBatch(
          j.at("texts").get<std::vector<std::string>>(),
          j.at("gold_words").get<std::vector<std::string>>(),
          j.at("lr").get<double>(), j.value("apply_update", true));
      return json{{"loss", loss}};
    });
  });
  server_->Post("/predict", [this](const httplib::Request& req,
                                   httplib::Response& res) {
    Handle(mu_, res, [&] {
      auto j = json::parse(req.body);
      auto logits = teacher_->Predict(
          j.at("texts").get<std::vector<std::string>>(),
          j.at("candidate_words").get<std::vector<std::string>>());
      return json{{"logits", logits}};
    });
  });
  server_->Post("/save", [this](const httplib::Request&,
                                httplib::Response& res) {
    Handle(mu_, res, [&] {
      std::string id = teacher_->Save();
      saved_by_[id] = teacher_;
      return json{{"artifact_id", id}};
    });
  });
  server_->Post("/load", [this](const httplib::Request& req,
                                httplib::Response& res) {
    Handle(mu_, res, [&] {
      auto j = json::parse(req.body);
      const auto id = j.at("artifact_id").get<std::string>();
      auto it = saved_by_.find(id);
      if (it != saved_by_.end()) teacher_ = it->second;
      teacher_->Load(id);
      return json{{"ok", true}};
    });
  });
}

int BackendServer::Start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host)
                    : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void BackendServer::Listen(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  spdlog::info("serving on {}", url());
  if (!server_->listen(host, port)) {
    throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void BackendServer::Stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string BackendServer::url() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

}  // namespace btclf
