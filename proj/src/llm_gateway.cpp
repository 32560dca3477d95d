#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "persona_harness/llm_gateway.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "persona_harness/errors.hpp"
#include "persona_harness/json_io.hpp"

namespace ph {

using nlohmann::json;

std::string to_string(DecodingMode m) { return m == DecodingMode::greedy ? "greedy" : "sampling"; }

DecodingMode parse_decoding_mode(const std::string& s) {
  if (s == "greedy") return DecodingMode::greedy;
  if (s == "sampling") return DecodingMode::sampling;
  throw ConfigError("unknown decoding mode '" + s + "' (expected sampling or greedy)");
}

SamplingParams LlmEndpoint::effective_sampling() const {
  SamplingParams s = sampling;
  if (mode == DecodingMode::greedy) {
    s.temperature = 0.0;
    s.top_p = 1.0;
  }
  return s;
}

namespace {

json sampling_json(const SamplingParams& s) {
  json j = {{"temperature", s.temperature},
            {"top_p", s.top_p},
            {"repetition_penalty", s.repetition_penalty},
            {"max_tokens", s.max_tokens}};
  j["seed"] = s.seed ? json(*s.seed) : json(nullptr);
  return j;
}

json messages_json(const std::vector<ChatMessage>& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
  return arr;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// "https://host:8443/v1" -> {"https://host:8443", "/v1"}
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint url without scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string path = url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_start), path};
}

}  // namespace

json to_json(const LlmEndpoint& e) {
  return {{"base_url", e.base_url},
          {"model", e.model},
          {"api_key_env", e.api_key_env},
          {"mode", to_string(e.mode)},
          {"sampling", sampling_json(e.sampling)}};
}

LlmEndpoint endpoint_from_json(const std::string& id, const json& j) {
  if (!j.is_object()) throw ConfigError("endpoint '" + id + "' must be an object");
  LlmEndpoint e;
  e.id = id;
  try {
    e.base_url = j.at("base_url").get<std::string>();
    e.model = j.value("model", std::string());
    e.api_key_env = j.value("api_key_env", std::string());
    e.mode = parse_decoding_mode(j.value("mode", std::string("sampling")));
    if (j.contains("sampling")) {
      const auto& s = j.at("sampling");
      e.sampling.temperature = s.value("temperature", e.sampling.temperature);
      e.sampling.top_p = s.value("top_p", e.sampling.top_p);
      e.sampling.repetition_penalty = s.value("repetition_penalty", e.sampling.repetition_penalty);
      e.sampling.max_tokens = s.value("max_tokens", e.sampling.max_tokens);
      if (s.contains("seed") && !s.at("seed").is_null()) e.sampling.seed = s.at("seed").get<std::uint64_t>();
    }
  } catch (const json::exception& ex) {
    throw ConfigError("endpoint '" + id + "': " + ex.what());
  }
  if (j.contains("api_key")) {
    throw ConfigError("endpoint '" + id + "': put the key in an environment variable and name it in api_key_env");
  }
  return e;
}

// -- transports --------------------------------------------------------------

ChatReply HttpTransport::send(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages) {
  const auto [origin, prefix] = split_url(endpoint.base_url);
  httplib::Client client(origin);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);

  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    if (const char* key = std::getenv(endpoint.api_key_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  const auto s = endpoint.effective_sampling();
  json body = {{"model", endpoint.model},
               {"messages", messages_json(messages)},
               {"temperature", s.temperature},
               {"top_p", s.top_p},
               {"max_tokens", s.max_tokens},
               {"repetition_penalty", s.repetition_penalty}};
  if (s.seed) body["seed"] = *s.seed;

  auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError(endpoint.id + ": " + httplib::to_string(res.error()), 0, "");
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError(endpoint.id + ": HTTP " + std::to_string(res->status), res->status, res->body);
  }
  try {
    const auto j = json::parse(res->body);
    ChatReply reply;
    const auto& content = j.at("choices").at(0).at("message").at("content");
    reply.text = content.is_null() ? "" : content.get<std::string>();
    if (j.contains("usage") && j["usage"].is_object()) {
      const auto& u = j["usage"];
      if (u.contains("prompt_tokens")) reply.prompt_tokens = u["prompt_tokens"].get<int>();
      if (u.contains("completion_tokens")) reply.completion_tokens = u["completion_tokens"].get<int>();
    }
    return reply;
  } catch (const json::exception& ex) {
    throw TransportError(endpoint.id + ": malformed completion: " + ex.what(), res->status, res->body);
  }
}

void RoutingTransport::add_model(const std::string& name, MockModel model) {
  models_[name] = std::move(model);
}

ChatReply RoutingTransport::send(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages) {
  if (endpoint.is_mock()) {
    const auto name = endpoint.base_url.substr(7);
    const auto it = models_.find(name);
    if (it == models_.end()) throw ConfigError("unknown mock model '" + name + "'");
    return ChatReply{it->second(messages, endpoint.effective_sampling()), std::nullopt, std::nullopt};
  }
  if (!fallback_) throw ConfigError("no transport for " + endpoint.base_url);
  return fallback_->send(endpoint, messages);
}

// -- cache -------------------------------------------------------------------

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<CallRecord> ResponseCache::get(const std::string& key) const {
  const auto p = path_for(key);
  std::ifstream in(p);
  if (!in) return std::nullopt;
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    return std::nullopt;  // torn or foreign file; treat as a miss
  }
  CallRecord r;
  r.key = key;
  r.endpoint_id = j.value("endpoint_id", "");
  r.model = j.value("model", "");
  r.request = j.value("request", json());
  r.reply = j.value("reply", "");
  r.timestamp = j.value("timestamp", "");
  if (j.contains("prompt_tokens") && !j["prompt_tokens"].is_null()) r.prompt_tokens = j["prompt_tokens"].get<int>();
  if (j.contains("completion_tokens") && !j["completion_tokens"].is_null())
    r.completion_tokens = j["completion_tokens"].get<int>();
  return r;
}

void ResponseCache::put(const CallRecord& r) {
  json j = {{"key", r.key},
            {"endpoint_id", r.endpoint_id},
            {"model", r.model},
            {"request", r.request},
            {"reply", r.reply},
            {"timestamp", r.timestamp}};
  j["prompt_tokens"] = r.prompt_tokens ? json(*r.prompt_tokens) : json(nullptr);
  j["completion_tokens"] = r.completion_tokens ? json(*r.completion_tokens) : json(nullptr);
  std::lock_guard lock(write_mutex_);
  const auto p = path_for(r.key);
  std::filesystem::create_directories(p.parent_path());
  jsonio::write_json(p, j);
}

// -- gateway -----------------------------------------------------------------

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

bool is_retryable_status(int status) { return status == 0 || status == 429 || status >= 500; }

LlmGateway::LlmGateway(std::shared_ptr<ChatTransport> transport, GatewayOptions options)
    : transport_(std::move(transport)),
      options_(std::move(options)),
      in_flight_(std::max(1, options_.max_in_flight)) {
  if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
  if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

json LlmGateway::key_material(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                              const ChatOptions& options) {
  return {{"endpoint_id", endpoint.id},
          {"model", endpoint.model},
          {"mode", to_string(endpoint.mode)},
          {"sampling", sampling_json(endpoint.effective_sampling())},
          {"messages", messages_json(messages)},
          {"template_version", options.template_version},
          {"salt", options.salt}};
}

std::string LlmGateway::cache_key(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                                  const ChatOptions& options) {
  return sha256_hex(key_material(endpoint, messages, options).dump());
}

std::string LlmGateway::chat(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                             const ChatOptions& options) {
  auto material = key_material(endpoint, messages, options);
  const auto key = sha256_hex(material.dump());
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      ++cache_hits_;
      return hit->reply;
    }
  }
  if (options_.offline) {
    throw TransportError(endpoint.id + ": cache miss in offline mode (key " + key + ")", 0, "");
  }
  const auto reply = send_with_retry(endpoint, messages);
  if (cache_) {
    CallRecord r{key, endpoint.id, endpoint.model, std::move(material), reply.text, utc_now(),
                 reply.prompt_tokens, reply.completion_tokens};
    cache_->put(r);
  }
  return reply.text;
}

ChatReply LlmGateway::send_with_retry(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages) {
  auto delay = options_.retry.initial_delay;
  const int attempts = std::max(1, options_.retry.max_attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      ++network_calls_;
      return transport_->send(endpoint, messages);
    } catch (const TransportError& e) {
      if (!is_retryable_status(e.status()) || attempt >= attempts) {
        throw TransportError(e.what() + std::string(" (after ") + std::to_string(attempt) + " attempt" +
                                 (attempt == 1 ? "" : "s") + ")",
                             e.status(), e.body());
      }
    }
    ++retries_;
    options_.sleep(delay);
    delay = std::min(options_.retry.max_delay,
                     std::chrono::milliseconds(static_cast<long long>(delay.count() * options_.retry.multiplier)));
  }
}

GatewayStats LlmGateway::stats() const {
  return {network_calls_.load(), cache_hits_.load(), retries_.load()};
}

}  // namespace ph
