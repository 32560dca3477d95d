#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "persona_harness/embedding.hpp"

#include <cmath>
#include <cstdlib>

#include <httplib.h>

#include "persona_harness/errors.hpp"
#include "persona_harness/rng.hpp"
#include "persona_harness/text.hpp"

namespace ph {

using nlohmann::json;

std::vector<Vector> embed(EmbeddingProvider& provider, const std::vector<std::string>& texts) {
  auto out = provider.embed_batch(texts);
  if (out.size() != texts.size()) {
    throw Error(provider.id() + ": returned " + std::to_string(out.size()) + " vectors for " +
                std::to_string(texts.size()) + " texts");
  }
  for (const auto& v : out) {
    if (v.size() != out.front().size()) {
      throw Error(provider.id() + ": dimension mismatch within batch (" + std::to_string(out.front().size()) +
                  " vs " + std::to_string(v.size()) + ")");
    }
  }
  return out;
}

std::string StubEmbedder::id() const {
  return "stub:" + std::to_string(dimension_) + ":" + std::to_string(seed_);
}

Vector StubEmbedder::embed_one(const std::string& text) const {
  Vector v(dimension_, 0.0);
  auto add = [&](std::string_view feature) {
    const auto h = splitmix64(fnv1a64(feature, seed_ ^ 0x9e3779b97f4a7c15ULL));
    v[h % dimension_] += (h >> 63) ? -1.0 : 1.0;
  };
  const auto tokens = text::alpha_tokens(text);
  for (const auto& t : tokens) add(t);
  double norm = 0;
  for (double x : v) norm += x * x;
  if (norm == 0) {
    // No tokens, or every token cancelled out: fall back to one fixed bucket.
    std::fill(v.begin(), v.end(), 0.0);
    v[splitmix64(fnv1a64(text, seed_)) % dimension_] = 1.0;
    return v;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<Vector> StubEmbedder::embed_batch(const std::vector<std::string>& texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

RemoteEmbedder::RemoteEmbedder(std::string base_url, std::string model, std::string api_key_env,
                               std::size_t batch_size, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)),
      model_(std::move(model)),
      api_key_env_(std::move(api_key_env)),
      batch_size_(std::max<std::size_t>(1, batch_size)),
      timeout_(timeout) {}

std::vector<Vector> RemoteEmbedder::embed_batch(const std::vector<std::string>& texts) {
  const auto scheme_end = base_url_.find("://");
  const auto path_start = scheme_end == std::string::npos ? std::string::npos : base_url_.find('/', scheme_end + 3);
  const std::string origin = base_url_.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url_.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_env_.empty()) {
    if (const char* key = std::getenv(api_key_env_.c_str())) headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::vector<Vector> out;
  for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
    const auto end = std::min(texts.size(), start + batch_size_);
    json body = {{"model", model_}, {"input", std::vector<std::string>(texts.begin() + start, texts.begin() + end)}};
    auto res = client.Post(prefix + "/embeddings", headers, body.dump(), "application/json");
    if (!res) throw TransportError(id() + ": " + httplib::to_string(res.error()), 0, "");
    if (res->status != 200) throw TransportError(id() + ": HTTP " + std::to_string(res->status), res->status, res->body);
    try {
      const auto j = json::parse(res->body);
      std::vector<Vector> batch(end - start);
      for (const auto& item : j.at("data")) {
        const auto idx = item.value("index", std::size_t{0});
        if (idx >= batch.size()) throw Error(id() + ": embedding index out of range");
        batch[idx] = item.at("embedding").get<Vector>();
      }
      for (auto& v : batch) out.push_back(std::move(v));
    } catch (const json::exception& ex) {
      throw TransportError(id() + ": malformed embeddings reply: " + ex.what(), res->status, res->body);
    }
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> make_embedder(const json& config) {
  const auto kind = config.value("kind", std::string("stub"));
  if (kind == "stub") {
    const auto dim = config.value("dimension", std::size_t{256});
    if (dim == 0) throw ConfigError("stub embedder dimension must be positive");
    return std::make_unique<StubEmbedder>(dim,
                                          config.value("seed", std::uint64_t{0}));
  }
  if (kind == "remote") {
    if (!config.contains("base_url") || !config.contains("model")) {
      throw ConfigError("remote embedder needs base_url and model");
    }
    return std::make_unique<RemoteEmbedder>(config["base_url"].get<std::string>(),
                                            config["model"].get<std::string>(),
                                            config.value("api_key_env", std::string()),
                                            config.value("batch_size", std::size_t{64}));
  }
  throw ConfigError("unknown embedder kind '" + kind + "'");
}

double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace ph
