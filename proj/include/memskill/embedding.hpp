#pragma once
// Shared representation space for spans, memories, queries, and skill
// descriptions. Two embedders: a deterministic feature-hashing one for
// offline use, and a client for any HTTP embedding endpoint.

#include <Eigen/Core>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace memskill {

using Vec = Eigen::VectorXd;

// L2-normalizes in place; the all-zero vector is preserved.
void normalize(Vec& v);
Vec normalized(Vec v);

// dot(a,b)/(|a||b|), 0 if either norm is 0. Throws on dimension mismatch.
double cosine(const Vec& a, const Vec& b);

// Deterministic bag-of-tokens feature hashing: lowercase, split on
// whitespace/punctuation, hash each token to a bucket and a sign with two
// independent hashes, accumulate, L2-normalize. Empty text -> zero vector.
Vec hash_embed(const std::string& text, int dim);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  virtual Vec embed(const std::string& text) const = 0;
  virtual std::vector<Vec> embed_batch(const std::vector<std::string>& texts) const {
    std::vector<Vec> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
  }
};

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(int dim) : dim_(dim) {
    if (dim_ < 2) throw std::invalid_argument("HashEmbedder: dim must be >= 2");
  }
  int dim() const override { return dim_; }
  Vec embed(const std::string& text) const override { return hash_embed(text, dim_); }

 private:
  int dim_;
};

struct EmbedEndpointConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string path = "/v1/embeddings";
  std::string model = "default";
  std::string api_key;  // sent as Bearer token when non-empty
  int max_retries = 3;
  int timeout_seconds = 30;
};

// Transport failure after exhausting retries.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, int attempts)
      : std::runtime_error(what), attempts(attempts) {}
  int attempts;
};

// Malformed or inconsistent response (wrong arity, mixed dimensions).
class ProtocolError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// POST {"model": ..., "input": [...]} -> {"data": [{"index", "embedding"}]}.
// Responses are reordered by "index" and L2-normalized.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbedEndpointConfig config);
  int dim() const override { return dim_; }
  Vec embed(const std::string& text) const override;
  std::vector<Vec> embed_batch(const std::vector<std::string>& texts) const override;

 private:
  EmbedEndpointConfig config_;
  mutable int dim_ = -1;  // learned from the first response
};

}  // namespace memskill
