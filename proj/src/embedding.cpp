#include "memskill/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>

#include "httplib.h"
#include "json.hpp"

namespace memskill {

void normalize(Vec& v) {
  double n = v.norm();
  if (n > 0.0) v /= n;
}

Vec normalized(Vec v) {
  normalize(v);
  return v;
}

double cosine(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

namespace {

// FNV-1a, two independent streams via different offset bases.
uint64_t fnv1a(const std::string& s, uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

constexpr uint64_t kIndexSeed = 14695981039346656037ULL;
constexpr uint64_t kSignSeed = 0x9e3779b97f4a7c15ULL;

}  // namespace

Vec hash_embed(const std::string& text, int dim) {
  if (dim < 2) throw std::invalid_argument("hash_embed: dim must be >= 2");
  Vec acc = Vec::Zero(dim);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    uint64_t hi = fnv1a(token, kIndexSeed);
    uint64_t hs = fnv1a(token, kSignSeed);
    double sign = (hs & 1u) ? 1.0 : -1.0;
    acc[static_cast<int>(hi % static_cast<uint64_t>(dim))] += sign;
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  normalize(acc);
  return acc;
}

RemoteEmbedder::RemoteEmbedder(EmbedEndpointConfig config) : config_(std::move(config)) {}

Vec RemoteEmbedder::embed(const std::string& text) const {
  return embed_batch({text}).front();
}

std::vector<Vec> RemoteEmbedder::embed_batch(const std::vector<std::string>& texts) const {
  if (texts.empty()) throw std::invalid_argument("remote embed: empty batch");

  nlohmann::json req;
  req["model"] = config_.model;
  req["input"] = texts;
  const std::string body = req.dump();

  httplib::Client client(config_.host, config_.port);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (!config_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + config_.api_key);

  httplib::Result res;
  int attempts = 0;
  for (; attempts < std::max(1, config_.max_retries); ++attempts) {
    res = client.Post(config_.path, headers, body, "application/json");
    if (res && res->status == 200) break;
  }
  if (!res || res->status != 200)
    throw TransportError("remote embed: request failed after " + std::to_string(attempts) +
                             " attempts",
                         attempts);

  nlohmann::json resp;
  try {
    resp = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("remote embed: bad JSON response: ") + e.what());
  }
  if (!resp.contains("data") || !resp["data"].is_array())
    throw ProtocolError("remote embed: response missing data array");
  const auto& data = resp["data"];
  if (data.size() != texts.size())
    throw ProtocolError("remote embed: expected " + std::to_string(texts.size()) +
                        " vectors, got " + std::to_string(data.size()));

  std::vector<Vec> out(texts.size());
  std::vector<bool> seen(texts.size(), false);
  for (const auto& entry : data) {
    if (!entry.contains("index") || !entry.contains("embedding"))
      throw ProtocolError("remote embed: data entry missing index/embedding");
    int idx = entry["index"].get<int>();
    if (idx < 0 || idx >= static_cast<int>(texts.size()) || seen[idx])
      throw ProtocolError("remote embed: bad or duplicate index " + std::to_string(idx));
    const auto& vals = entry["embedding"];
    Vec v(vals.size());
    for (int i = 0; i < static_cast<int>(vals.size()); ++i) v[i] = vals[i].get<double>();
    normalize(v);
    out[idx] = std::move(v);
    seen[idx] = true;
  }
  int d = static_cast<int>(out.front().size());
  for (const auto& v : out)
    if (static_cast<int>(v.size()) != d)
      throw ProtocolError("remote embed: mixed dimensions in batch");
  if (dim_ < 0) dim_ = d;
  else if (dim_ != d)
    throw ProtocolError("remote embed: dimension changed across calls");
  return out;
}

}  // namespace memskill
