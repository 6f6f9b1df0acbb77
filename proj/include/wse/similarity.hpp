#pragma once

// The two text-pair similarity channels used throughout: a cross-encoder
// style score (s_c) and an entailment probability (s_l). Their minimum is the
// conservative similarity consumed by relevance and the baselines.
//
// A SimilarityProvider pairs a backend (lexical, remote sidecar, or none) with
// an in-memory cache that can be persisted to an append-only JSON-lines file.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace wse {

struct SimilarityResult {
  double s_c = 0.0;
  double s_l = 0.0;
  double min_sim = 0.0;

  static SimilarityResult from(double s_c, double s_l);
  bool operator==(const SimilarityResult&) const = default;
};

// Ordered pair: (a, b) and (b, a) are different keys.
struct TextPair {
  std::string a;
  std::string b;

  bool operator==(const TextPair&) const = default;
};

enum class ProviderKind { kLexical, kCache, kRemote };

std::string to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(const std::string& s);

struct ProviderConfig {
  ProviderKind kind = ProviderKind::kLexical;
  double c = 1.0;                        // entailment logit temperature, > 0
  std::string endpoint;                  // remote: "http://host:port"
  std::optional<std::filesystem::path> cache_path;
  std::string model_id;                  // remote: recorded from the sidecar if empty
  // Cache-only mode serves entries produced by this provider id.
  ProviderKind cache_source = ProviderKind::kRemote;
  std::size_t max_batch = 64;
  int max_retries = 3;
  int timeout_seconds = 30;
  bool symmetrize = false;               // average (a,b) and (b,a)

  void validate() const;
};

// Something that can actually score pairs. Implementations must be safe to call
// from several threads.
class SimilarityBackend {
 public:
  virtual ~SimilarityBackend() = default;
  virtual std::string provider_id() const = 0;
  virtual std::string model_id() const = 0;
  // Exactly one result per pair, in order. `c` is the entailment temperature.
  virtual std::vector<SimilarityResult> score(std::span<const TextPair> pairs, double c) = 0;
};

// Jaccard overlap of lowercased word sets; s_c = s_l. Deterministic oracle.
class LexicalBackend final : public SimilarityBackend {
 public:
  std::string provider_id() const override { return "lexical"; }
  std::string model_id() const override { return "jaccard-v1"; }
  std::vector<SimilarityResult> score(std::span<const TextPair> pairs, double c) override;
};

double jaccard_similarity(const std::string& a, const std::string& b);

// Client for the scoring sidecar: POST {endpoint}/v1/similarity.
class HttpBackend final : public SimilarityBackend {
 public:
  HttpBackend(std::string endpoint, std::string model_id, int max_retries, int timeout_seconds);

  std::string provider_id() const override { return "remote"; }
  std::string model_id() const override { return model_id_; }
  std::vector<SimilarityResult> score(std::span<const TextPair> pairs, double c) override;

  std::size_t clamped_count() const { return clamped_.load(); }

 private:
  std::string endpoint_;
  std::string model_id_;
  int max_retries_;
  int timeout_seconds_;
  std::atomic<std::size_t> clamped_{0};
};

// Cache key: SHA-256 over (provider id, model id, c, a, b), hex encoded.
std::string similarity_cache_key(const std::string& provider, const std::string& model, double c,
                                 const std::string& a, const std::string& b);

class SimilarityCache {
 public:
  // In-memory only when `path` is empty. Loads existing entries; a corrupt
  // trailing line (truncated write) is dropped with a warning.
  explicit SimilarityCache(std::optional<std::filesystem::path> path = std::nullopt);

  std::optional<SimilarityResult> find(const std::string& key) const;

  struct Entry {
    std::string key;
    SimilarityResult result;
  };
  // Appends all entries in one write. Serialized through one writer.
  void insert(std::span<const Entry> entries, const std::string& provider, const std::string& model,
              double c);

  std::size_t size() const;
  std::size_t dropped_lines() const { return dropped_lines_; }

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, SimilarityResult> entries_;
  std::size_t dropped_lines_ = 0;
  std::uintmax_t valid_bytes_ = 0;
  bool needs_newline_ = false;
};

class SimilarityProvider {
 public:
  // `backend` may be null for cache-only operation (misses are errors).
  SimilarityProvider(ProviderConfig config, std::shared_ptr<SimilarityBackend> backend);

  SimilarityResult score_pair(const std::string& a, const std::string& b);
  std::vector<SimilarityResult> score_batch(std::span<const TextPair> pairs);

  const ProviderConfig& config() const { return config_; }
  std::string provider_id() const;
  std::string model_id() const;

  // Number of backend calls and pairs sent, for diagnostics and tests.
  std::size_t backend_calls() const { return backend_calls_.load(); }
  std::size_t pairs_sent() const { return pairs_sent_.load(); }

 private:
  std::vector<SimilarityResult> score_directed(std::span<const TextPair> pairs);

  ProviderConfig config_;
  std::shared_ptr<SimilarityBackend> backend_;
  SimilarityCache cache_;
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> pairs_sent_{0};
};

// Builds the backend for `config.kind` and wires up the cache file.
std::unique_ptr<SimilarityProvider> make_provider(const ProviderConfig& config);

}  // namespace wse
