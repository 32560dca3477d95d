#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ph {

using Vector = std::vector<double>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::vector<Vector> embed_batch(const std::vector<std::string>& texts) = 0;
};

/// One vector per text; throws Error if the provider returns the wrong
/// count or vectors of differing dimension.
std::vector<Vector> embed(EmbeddingProvider& provider, const std::vector<std::string>& texts);

/// Deterministic offline embedder: signed feature hashing of lowercase
/// alphabetic tokens, then L2 normalisation. Text without tokens hashes
/// the raw string instead, so every vector is unit norm.
class StubEmbedder : public EmbeddingProvider {
 public:
  explicit StubEmbedder(std::size_t dimension = 256, std::uint64_t seed = 0)
      : dimension_(dimension), seed_(seed) {}

  std::string id() const override;
  std::vector<Vector> embed_batch(const std::vector<std::string>& texts) override;
  Vector embed_one(const std::string& text) const;
  std::size_t dimension() const noexcept { return dimension_; }

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

/// OpenAI-style POST {base_url}/embeddings, batched.
class RemoteEmbedder : public EmbeddingProvider {
 public:
  RemoteEmbedder(std::string base_url, std::string model, std::string api_key_env,
                 std::size_t batch_size = 64, std::chrono::seconds timeout = std::chrono::seconds(60));

  std::string id() const override { return "remote:" + model_; }
  std::vector<Vector> embed_batch(const std::vector<std::string>& texts) override;

 private:
  std::string base_url_;
  std::string model_;
  std::string api_key_env_;
  std::size_t batch_size_;
  std::chrono::seconds timeout_;
};

/// Builds a provider from a config object: {"kind": "stub", "dimension": 256, "seed": 0}
/// or {"kind": "remote", "base_url": ..., "model": ..., "api_key_env": ...}.
std::unique_ptr<EmbeddingProvider> make_embedder(const nlohmann::json& config);

double cosine(const Vector& a, const Vector& b);

}  // namespace ph
