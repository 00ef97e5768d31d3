#include "httplib.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <future>
#include <thread>

#include "tabdpo/errors.hpp"
#include "tabdpo/model_client.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo {

namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint.url", "missing scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

}  // namespace

void EndpointConfig::validate() const {
  if (endpoint_url.empty()) throw ConfigError("endpoint.url", "required");
  split_url(endpoint_url);
  if (endpoint_url.rfind("http://", 0) != 0 && endpoint_url.rfind("https://", 0) != 0) {
    throw ConfigError("endpoint.url", "must start with http:// or https://");
  }
  if (parallelism < 1 || parallelism > 1024) {
    throw ConfigError("endpoint.parallelism", "must be in [1, 1024]");
  }
  if (max_attempts < 1) throw ConfigError("endpoint.max_attempts", "must be at least 1");
  if (initial_backoff.count() < 0) throw ConfigError("endpoint.initial_backoff_ms", "negative");
}

RemoteModel::RemoteModel(EndpointConfig config)
    : config_(std::move(config)), in_flight_(std::clamp(config_.parallelism, 1, 1024)) {
  config_.validate();
  auto parts = split_url(config_.endpoint_url);
  scheme_host_port_ = std::move(parts.scheme_host_port);
  path_ = std::move(parts.path);
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
}

RemoteModel::~RemoteModel() = default;

std::string RemoteModel::request_body(const ChatRequest& request, const std::string& model_name) {
  nlohmann::ordered_json user_content = nlohmann::ordered_json::array();
  user_content.push_back({{"type", "text"}, {"text", request.user_text}});
  if (request.image_png) {
    user_content.push_back(
        {{"type", "image_url"},
         {"image_url", {{"url", "data:image/png;base64," + util::base64_encode(*request.image_png)}}}});
  }
  nlohmann::ordered_json messages = nlohmann::ordered_json::array();
  if (!request.system_prompt.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  }
  messages.push_back({{"role", "user"}, {"content", std::move(user_content)}});

  nlohmann::ordered_json body;
  body["model"] = model_name;
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body["n"] = request.n;
  body["max_tokens"] = request.max_tokens;
  return body.dump();
}

std::vector<Completion> RemoteModel::post_with_retries(const ChatRequest& request) {
  const std::string body = request_body(request, config_.model_name);
  const std::string request_id = request.instance_id + "/" +
                                 std::string(to_string(request.modality)) + "/" +
                                 std::to_string(request.first_sample);
  httplib::Headers headers = {{"X-Request-Id", request_id}};
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  int last_status = 0;
  std::string last_body;
  auto backoff = config_.initial_backoff;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    ++attempts_;
    const auto started = std::chrono::steady_clock::now();
    httplib::Result res;
    {
      in_flight_.acquire();
      httplib::Client client(scheme_host_port_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      client.set_write_timeout(config_.timeout);
      res = client.Post(path_, headers, body, "application/json");
      in_flight_.release();
    }
    const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();
    if (res && res->status == 200) {
      nlohmann::json parsed;
      try {
        parsed = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::parse_error&) {
        throw EndpointError(200, "response is not JSON: " + res->body.substr(0, 200));
      }
      if (!parsed.contains("choices") || !parsed["choices"].is_array()) {
        throw EndpointError(200, "response has no choices array");
      }
      std::vector<std::pair<int, Completion>> indexed;
      int position = 0;
      for (const auto& choice : parsed["choices"]) {
        const int index = choice.value("index", position);
        ++position;
        std::string text;
        const auto& content = choice["message"]["content"];
        if (content.is_string()) {
          text = content.get<std::string>();
        } else if (content.is_array()) {
          for (const auto& part : content) {
            if (part.value("type", "") == "text") text += part.value("text", "");
          }
        }
        indexed.push_back({index, Completion{std::move(text), latency}});
      }
      std::stable_sort(indexed.begin(), indexed.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      std::vector<Completion> out;
      for (auto& [i, c] : indexed) out.push_back(std::move(c));
      return out;
    }
    last_status = res ? res->status : 0;
    last_body = res ? res->body : httplib::to_string(res.error());
    if (!retryable(last_status)) break;
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw EndpointError(last_status, last_body);
}

std::vector<Completion> RemoteModel::complete(const ChatRequest& request) {
  if (request.n <= 1 || (config_.batch_samples && !single_sample_mode_.load())) {
    try {
      auto out = post_with_retries(request);
      if (static_cast<int>(out.size()) == request.n) return out;
      if (request.n <= 1) throw EndpointError(200, "expected one completion");
    } catch (const EndpointError& e) {
      if (request.n <= 1 || (e.status() != 400 && e.status() != 422)) throw;
    }
    // The endpoint ignored or rejected n > 1: one request per sample from now on.
    single_sample_mode_ = true;
  }

  std::vector<std::future<std::vector<Completion>>> pending;
  pending.reserve(static_cast<std::size_t>(request.n));
  for (int i = 0; i < request.n; ++i) {
    ChatRequest one = request;
    one.n = 1;
    one.first_sample = request.first_sample + i;
    pending.push_back(std::async(std::launch::async, [this, one = std::move(one)] {
      return post_with_retries(one);
    }));
  }
  std::vector<Completion> out;
  out.reserve(pending.size());
  for (auto& f : pending) {
    auto got = f.get();
    if (got.empty()) throw EndpointError(200, "empty choices array");
    out.push_back(std::move(got.front()));
  }
  return out;
}

std::string RemoteModel::describe() const {
  return "remote(" + config_.model_name + " @ " + config_.endpoint_url + ")";
}

}  // namespace tabdpo
