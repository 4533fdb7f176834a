#include "qrewrite/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "qrewrite/errors.hpp"
#include "qrewrite/sql_text.hpp"

namespace qrw {

using nlohmann::json;

double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("distance over mismatched dimensions");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

std::vector<double> EmbeddingProvider::embed(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("cannot embed empty text");
  auto vectors = embed_batch({text});
  if (vectors.size() != 1) throw ProviderError("provider returned wrong batch size");
  auto& v = vectors[0];
  if (dim() != 0 && v.size() != dim()) {
    throw ProviderError("provider returned wrong dimension");
  }
  for (double x : v) {
    if (!std::isfinite(x)) throw ProviderError("provider returned non-finite value");
  }
  return std::move(v);
}

HashingEmbeddingProvider::HashingEmbeddingProvider(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

std::vector<std::vector<double>> HashingEmbeddingProvider::embed_batch(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> vec(dim_, 0.0);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      const std::uint64_t h = fnv1a64(token);
      const std::size_t bucket = static_cast<std::size_t>(h % dim_);
      const double sign = ((h >> 32) & 1ULL) != 0 ? 1.0 : -1.0;
      vec[bucket] += sign;
      token.clear();
    };
    for (char c : text) {
      if (std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_') {
        token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      } else {
        flush();
      }
    }
    flush();
    double norm = 0.0;
    for (double x : vec) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : vec) x /= norm;
    }
    out.push_back(std::move(vec));
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingConfig config)
    : config_(std::move(config)) {
  if (config_.base_url.empty()) throw ConfigError("embedding base_url not set");
}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed_batch(
    const std::vector<std::string>& texts) {
  json body = {{"texts", texts}};
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_s));
  client.set_read_timeout(std::chrono::duration<double>(config_.timeout_s));
  httplib::Result result = client.Post(config_.path, body.dump(), "application/json");
  if (!result) {
    throw ProviderError("embedding request failed: " + httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw ProviderError("embedding endpoint returned HTTP " +
                        std::to_string(result->status));
  }
  try {
    const json reply = json::parse(result->body);
    std::vector<std::vector<double>> vectors;
    for (const auto& row : reply.at("vectors")) {
      vectors.push_back(row.get<std::vector<double>>());
    }
    if (vectors.size() != texts.size()) {
      throw ProviderError("embedding endpoint returned wrong batch size");
    }
    return vectors;
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed embedding response: ") + e.what());
  }
}

VectorIndex::VectorIndex(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw std::invalid_argument("index dimension must be positive");
}

void VectorIndex::insert(IndexEntry entry) {
  if (entry.vector.size() != dim_) {
    throw std::invalid_argument("entry dimension does not match index");
  }
  std::unique_lock lock(mu_);
  for (const auto& existing : entries_) {
    if (existing.id == entry.id) {
      throw std::invalid_argument("duplicate index id: " + entry.id);
    }
  }
  entries_.push_back(std::move(entry));
}

std::vector<Neighbor> VectorIndex::knn(const std::vector<double>& target,
                                       std::size_t k, bool dedup) const {
  if (k == 0) throw std::invalid_argument("k must be positive");
  if (target.size() != dim_) {
    throw std::invalid_argument("target dimension does not match index");
  }
  std::shared_lock lock(mu_);

  // Indices sorted by (distance, insertion order); stable sort keeps older
  // entries first on exact ties.
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    order.emplace_back(euclidean_distance(target, entries_[i].vector), i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<Neighbor> result;
  std::unordered_set<std::string> seen_keys;
  for (const auto& [distance, idx] : order) {
    if (result.size() >= k) break;
    const IndexEntry& entry = entries_[idx];
    if (dedup && entry.dedup_key) {
      if (!seen_keys.insert(*entry.dedup_key).second) continue;
    }
    result.push_back({entry.id, distance});
  }
  return result;
}

std::size_t VectorIndex::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

}  // namespace qrw
