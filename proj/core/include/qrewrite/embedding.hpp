#pragma once

#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace qrw {

double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts) = 0;
  virtual std::size_t dim() const = 0;
  virtual const char* name() const = 0;

  // Single-text convenience; validates non-empty input and a finite,
  // dimension-correct result.
  std::vector<double> embed(const std::string& text);
};

// Deterministic local embedder: a token-hash bag projected onto a fixed
// dimension and L2-normalized. Identical text always yields the identical
// vector; no network, no model weights.
class HashingEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::size_t dim = 64);
  std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts) override;
  std::size_t dim() const override { return dim_; }
  const char* name() const override { return "hashing-local"; }

 private:
  std::size_t dim_;
};

struct HttpEmbeddingConfig {
  std::string base_url;
  std::string path = "/embed";
  std::size_t dim = 0;  // expected dimension; 0 = accept the provider's
  double timeout_s = 60.0;
};

// Remote embedding endpoint speaking JSON {"texts": [...]} -> {"vectors": [[...]]}.
class HttpEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(HttpEmbeddingConfig config);
  std::vector<std::vector<double>> embed_batch(
      const std::vector<std::string>& texts) override;
  std::size_t dim() const override { return config_.dim; }
  const char* name() const override { return "http"; }

 private:
  HttpEmbeddingConfig config_;
};

struct IndexEntry {
  std::string id;
  std::vector<double> vector;
  std::optional<std::string> dedup_key;
};

struct Neighbor {
  std::string id;
  double distance = 0.0;
};

// Brute-force exact nearest-neighbor index under Euclidean distance.
// Concurrent reads; insertions serialize.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dim);

  void insert(IndexEntry entry);

  // Ascending distance; ties broken by insertion order (older first). With
  // dedup, at most one result per dedup_key (keyless entries are exempt).
  // Returns min(k, available) neighbors.
  std::vector<Neighbor> knn(const std::vector<double>& target, std::size_t k,
                            bool dedup) const;

  std::size_t size() const;
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_;
  std::vector<IndexEntry> entries_;
  mutable std::shared_mutex mu_;
};

}  // namespace qrw
