#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ph {

enum class DecodingMode { sampling, greedy };

std::string to_string(DecodingMode m);
DecodingMode parse_decoding_mode(const std::string& s);  // throws ConfigError

struct SamplingParams {
  double temperature = 0.8;
  double top_p = 0.9;
  double repetition_penalty = 1.2;
  int max_tokens = 256;
  std::optional<std::uint64_t> seed;

  bool operator==(const SamplingParams&) const = default;
};

/// A remote chat-completions endpoint. `base_url` is either an http(s) URL
/// ending before "/chat/completions" (e.g. "https://host/v1") or
/// "mock://<name>" for a built-in offline model. The API key itself is only
/// ever read from the environment variable named by `api_key_env`.
struct LlmEndpoint {
  std::string id;
  std::string base_url;
  std::string model;
  std::string api_key_env;
  SamplingParams sampling;
  DecodingMode mode = DecodingMode::sampling;

  /// Sampling actually sent: greedy pins temperature 0 and top_p 1.
  SamplingParams effective_sampling() const;
  bool is_mock() const { return base_url.rfind("mock://", 0) == 0; }
};

nlohmann::json to_json(const LlmEndpoint& e);
LlmEndpoint endpoint_from_json(const std::string& id, const nlohmann::json& j);

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatReply {
  std::string text;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

/// One network round trip. Implementations throw TransportError; status 0
/// means the connection itself failed.
class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual ChatReply send(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages) = 0;
};

/// OpenAI-style POST {base_url}/chat/completions.
class HttpTransport : public ChatTransport {
 public:
  explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120))
      : timeout_(timeout) {}
  ChatReply send(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages) override;

 private:
  std::chrono::seconds timeout_;
};

using MockModel =
    std::function<std::string(const std::vector<ChatMessage>& messages, const SamplingParams& sampling)>;

/// Sends "mock://name" endpoints to registered in-process models and
/// everything else to `fallback` (if any).
class RoutingTransport : public ChatTransport {
 public:
  explicit RoutingTransport(std::shared_ptr<ChatTransport> fallback = nullptr)
      : fallback_(std::move(fallback)) {}

  void add_model(const std::string& name, MockModel model);
  ChatReply send(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages) override;

 private:
  std::map<std::string, MockModel> models_;
  std::shared_ptr<ChatTransport> fallback_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_delay{500};
  std::chrono::milliseconds max_delay{16000};
  double multiplier = 2.0;
};

/// What is stored per cache entry.
struct CallRecord {
  std::string key;
  std::string endpoint_id;
  std::string model;
  nlohmann::json request;  // the hashed key material
  std::string reply;
  std::string timestamp;   // UTC, ISO 8601
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
};

/// Content-addressed reply store: <dir>/<key[0:2]>/<key>.json.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::optional<CallRecord> get(const std::string& key) const;
  void put(const CallRecord& record);
  const std::filesystem::path& dir() const noexcept { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::filesystem::path dir_;
  std::mutex write_mutex_;
};

struct ChatOptions {
  std::string template_version;
  /// Extra key material. Sampling-mode callers pass e.g. a dialogue id so two
  /// dialogues that happen to share a prompt do not share a cached reply.
  std::string salt;
};

struct GatewayOptions {
  std::optional<std::filesystem::path> cache_dir;
  RetryPolicy retry;
  int max_in_flight = 8;
  bool offline = false;  // cache misses fail instead of calling out
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleep_for
};

struct GatewayStats {
  std::uint64_t network_calls = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t retries = 0;
};

/// Cache-first chat client. Thread-safe; at most `max_in_flight` transport
/// calls run at once.
class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<ChatTransport> transport, GatewayOptions options = {});

  std::string chat(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                   const ChatOptions& options = {});

  /// sha256 hex of the canonical request JSON.
  static std::string cache_key(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages,
                               const ChatOptions& options);
  static nlohmann::json key_material(const LlmEndpoint& endpoint,
                                     const std::vector<ChatMessage>& messages,
                                     const ChatOptions& options);

  GatewayStats stats() const;

 private:
  ChatReply send_with_retry(const LlmEndpoint& endpoint, const std::vector<ChatMessage>& messages);

  std::shared_ptr<ChatTransport> transport_;
  GatewayOptions options_;
  std::optional<ResponseCache> cache_;
  std::counting_semaphore<> in_flight_;
  std::atomic<std::uint64_t> network_calls_{0};
  std::atomic<std::uint64_t> cache_hits_{0};
  std::atomic<std::uint64_t> retries_{0};
};

std::string sha256_hex(std::string_view data);

/// Status codes worth retrying: rate limiting, server errors, connection failures.
bool is_retryable_status(int status);

}  // namespace ph
