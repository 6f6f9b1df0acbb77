#include "wse/similarity.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "wse/digest.hpp"
#include "wse/errors.hpp"
#include "wse/segmentation.hpp"

namespace wse {

using json = nlohmann::json;

namespace {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool in_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

SimilarityResult SimilarityResult::from(double s_c, double s_l) {
  return {s_c, s_l, std::min(s_c, s_l)};
}

std::string to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kLexical:
      return "lexical";
    case ProviderKind::kCache:
      return "cache";
    case ProviderKind::kRemote:
      return "remote";
  }
  return "unknown";
}

ProviderKind provider_kind_from_string(const std::string& s) {
  if (s == "lexical") return ProviderKind::kLexical;
  if (s == "cache") return ProviderKind::kCache;
  if (s == "remote") return ProviderKind::kRemote;
  throw ConfigError("unknown provider '" + s + "' (expected lexical, cache or remote)");
}

void ProviderConfig::validate() const {
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("provider: c must be a positive real");
  if (max_batch == 0) throw ConfigError("provider: max_batch must be positive");
  if (max_retries < 1) throw ConfigError("provider: max_retries must be >= 1");
  if (kind == ProviderKind::kRemote && endpoint.empty()) {
    throw ConfigError("provider: remote provider requires an endpoint");
  }
  if (kind == ProviderKind::kCache && !cache_path) {
    throw ConfigError("provider: cache provider requires a cache path");
  }
  if (kind == ProviderKind::kCache && cache_source == ProviderKind::kCache) {
    throw ConfigError("provider: cache_source must name the provider that filled the cache");
  }
}

double jaccard_similarity(const std::string& a, const std::string& b) {
  const auto wa = lowercase_words(a);
  const auto wb = lowercase_words(b);
  const std::set<std::string> sa(wa.begin(), wa.end());
  const std::set<std::string> sb(wb.begin(), wb.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& w : sa) common += sb.count(w);
  const std::size_t uni = sa.size() + sb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

std::vector<SimilarityResult> LexicalBackend::score(std::span<const TextPair> pairs, double) {
  std::vector<SimilarityResult> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const double j = jaccard_similarity(p.a, p.b);
    out.push_back(SimilarityResult::from(j, j));
  }
  return out;
}

HttpBackend::HttpBackend(std::string endpoint, std::string model_id, int max_retries,
                         int timeout_seconds)
    : endpoint_(std::move(endpoint)),
      model_id_(model_id.empty() ? "default" : std::move(model_id)),
      max_retries_(max_retries),
      timeout_seconds_(timeout_seconds) {}

std::vector<SimilarityResult> HttpBackend::score(std::span<const TextPair> pairs, double c) {
  json body = {{"c", c}, {"pairs", json::array()}};
  for (const auto& p : pairs) body["pairs"].push_back({{"a", p.a}, {"b", p.b}});
  const std::string payload = body.dump();

  httplib::Client client(endpoint_);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);

  std::string last_failure;
  for (int attempt = 1; attempt <= max_retries_; ++attempt) {
    auto res = client.Post("/v1/similarity", payload, "application/json");
    if (!res) {
      last_failure = httplib::to_string(res.error());
    } else if (res->status == 503) {
      last_failure = "503 service unavailable";
    } else if (res->status != 200) {
      std::string code;
      try {
        code = json::parse(res->body).at("error").at("code").get<std::string>();
      } catch (const std::exception&) {
        code = "unknown";
      }
      throw ProtocolError(endpoint_ + ": HTTP " + std::to_string(res->status) + " (" + code + ")");
    } else {
      json doc;
      try {
        doc = json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw ProtocolError(endpoint_ + ": response is not JSON: " + e.what());
      }
      const auto it = doc.find("results");
      if (it == doc.end() || !it->is_array() || it->size() != pairs.size()) {
        throw ProtocolError(endpoint_ + ": 'results' must be an array of " +
                            std::to_string(pairs.size()) + " entries");
      }
      std::vector<SimilarityResult> out;
      out.reserve(pairs.size());
      for (const auto& r : *it) {
        if (!r.is_object() || !r.contains("s_c") || !r.contains("s_l") || !r["s_c"].is_number() ||
            !r["s_l"].is_number()) {
          throw ProtocolError(endpoint_ + ": result entries need numeric s_c and s_l");
        }
        double s_c = r["s_c"].get<double>();
        const double s_l = r["s_l"].get<double>();
        if (!in_unit(s_l)) {
          throw ProtocolError(endpoint_ + ": s_l " + format_real(s_l) + " outside [0,1]");
        }
        if (!std::isfinite(s_c)) throw ProtocolError(endpoint_ + ": s_c is not finite");
        if (s_c < 0.0 || s_c > 1.0) {
          const std::size_t n = ++clamped_;
          spdlog::warn("{}: clamping s_c {} into [0,1] ({} clamped so far)", endpoint_, s_c, n);
          s_c = std::clamp(s_c, 0.0, 1.0);
        }
        out.push_back(SimilarityResult::from(s_c, s_l));
      }
      return out;
    }
    if (attempt < max_retries_) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
    }
  }
  throw TransportError("similarity endpoint " + endpoint_ + " unreachable after " +
                       std::to_string(max_retries_) + " attempt(s): " + last_failure);
}

std::string similarity_cache_key(const std::string& provider, const std::string& model, double c,
                                 const std::string& a, const std::string& b) {
  std::string material;
  for (const std::string* part : {&provider, &model}) {
    material += std::to_string(part->size()) + ":" + *part + ";";
  }
  const std::string cs = format_real(c);
  material += std::to_string(cs.size()) + ":" + cs + ";";
  material += std::to_string(a.size()) + ":" + a + ";";
  material += std::to_string(b.size()) + ":" + b + ";";
  return sha256_hex(material);
}

SimilarityCache::SimilarityCache(std::optional<std::filesystem::path> path)
    : path_(std::move(path)) {
  if (!path_) return;
  std::ifstream in(*path_, std::ios::binary);
  if (!in) return;  // starts empty; created on first insert
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos < data.size()) {
    const std::size_t nl = data.find('\n', pos);
    const std::size_t end = nl == std::string::npos ? data.size() : nl;
    const std::string line = data.substr(pos, end - pos);
    ++lineno;
    const bool last = nl == std::string::npos || nl + 1 == data.size();
    if (!line.empty()) {
      try {
        const json j = json::parse(line);
        const double s_c = j.at("s_c").get<double>();
        const double s_l = j.at("s_l").get<double>();
        if (!in_unit(s_c) || !in_unit(s_l)) throw std::runtime_error("score outside [0,1]");
        entries_.emplace(j.at("key").get<std::string>(), SimilarityResult::from(s_c, s_l));
      } catch (const std::exception&) {
        // Only a truncated final line is tolerated.
        if (!last) {
          throw DataError("similarity cache " + path_->string() + ": corrupt line " +
                              std::to_string(lineno),
                          "data.cache");
        }
        ++dropped_lines_;
        valid_bytes_ = pos;
        spdlog::warn("similarity cache {}: dropping truncated trailing line {}", path_->string(),
                     lineno);
        return;
      }
    }
    pos = nl == std::string::npos ? data.size() : nl + 1;
  }
  valid_bytes_ = data.size();
  needs_newline_ = !data.empty() && data.back() != '\n';
}

std::optional<SimilarityResult> SimilarityCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

std::size_t SimilarityCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void SimilarityCache::insert(std::span<const Entry> entries, const std::string& provider,
                             const std::string& model, double c) {
  std::lock_guard lock(mutex_);
  std::string lines;
  for (const auto& e : entries) {
    if (!entries_.emplace(e.key, e.result).second) continue;
    if (path_) {
      const json j = {{"key", e.key},         {"s_c", e.result.s_c}, {"s_l", e.result.s_l},
                      {"provider", provider}, {"model", model},      {"c", c}};
      lines += j.dump();
      lines += '\n';
    }
  }
  if (path_ && !lines.empty()) {
    if (dropped_lines_ > 0) {
      std::filesystem::resize_file(*path_, valid_bytes_);
      dropped_lines_ = 0;
    }
    std::ofstream out(*path_, std::ios::app | std::ios::binary);
    if (!out) throw ProviderError("cannot write similarity cache " + path_->string());
    if (needs_newline_) out << '\n';
    needs_newline_ = false;
    out << lines;
    out.flush();
    if (!out) throw ProviderError("failed writing similarity cache " + path_->string());
  }
}

SimilarityProvider::SimilarityProvider(ProviderConfig config,
                                       std::shared_ptr<SimilarityBackend> backend)
    : config_(std::move(config)), backend_(std::move(backend)), cache_(config_.cache_path) {
  config_.validate();
}

std::string SimilarityProvider::provider_id() const {
  return backend_ ? backend_->provider_id() : to_string(config_.cache_source);
}

std::string SimilarityProvider::model_id() const {
  if (backend_) return backend_->model_id();
  return config_.model_id.empty() ? "default" : config_.model_id;
}

SimilarityResult SimilarityProvider::score_pair(const std::string& a, const std::string& b) {
  const TextPair pair{a, b};
  return score_batch(std::span(&pair, 1)).front();
}

std::vector<SimilarityResult> SimilarityProvider::score_batch(std::span<const TextPair> pairs) {
  for (const auto& p : pairs) {
    if (p.a.empty() || p.b.empty()) throw ProviderError("similarity: empty text in pair");
  }
  if (!config_.symmetrize) return score_directed(pairs);

  std::vector<TextPair> both;
  both.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    both.push_back(p);
    both.push_back({p.b, p.a});
  }
  const auto scored = score_directed(both);
  std::vector<SimilarityResult> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& f = scored[2 * i];
    const auto& r = scored[2 * i + 1];
    out.push_back(SimilarityResult::from(0.5 * (f.s_c + r.s_c), 0.5 * (f.s_l + r.s_l)));
  }
  return out;
}

std::vector<SimilarityResult> SimilarityProvider::score_directed(std::span<const TextPair> pairs) {
  const std::string provider = provider_id();
  const std::string model = model_id();

  std::vector<SimilarityResult> out(pairs.size());
  // Distinct cache misses in first-seen order, with the slots they fill.
  std::vector<std::string> miss_keys;
  std::vector<TextPair> miss_pairs;
  std::vector<std::vector<std::size_t>> miss_slots;
  std::unordered_map<std::string, std::size_t> pending;

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::string key = similarity_cache_key(provider, model, config_.c, pairs[i].a, pairs[i].b);
    if (auto it = pending.find(key); it != pending.end()) {
      miss_slots[it->second].push_back(i);
      continue;
    }
    if (auto hit = cache_.find(key)) {
      out[i] = *hit;
      continue;
    }
    pending.emplace(key, miss_keys.size());
    miss_keys.push_back(std::move(key));
    miss_pairs.push_back(pairs[i]);
    miss_slots.push_back({i});
  }
  if (miss_pairs.empty()) return out;
  if (!backend_) {
    throw ProviderError("similarity cache miss in cache-only mode (" +
                            std::to_string(miss_pairs.size()) + " pair(s) not cached)",
                        "provider.cache_miss");
  }

  std::vector<SimilarityCache::Entry> fresh;
  fresh.reserve(miss_pairs.size());
  for (std::size_t lo = 0; lo < miss_pairs.size(); lo += config_.max_batch) {
    const std::size_t n = std::min(config_.max_batch, miss_pairs.size() - lo);
    auto chunk = std::span<const TextPair>(miss_pairs).subspan(lo, n);
    ++backend_calls_;
    pairs_sent_ += n;
    auto scored = backend_->score(chunk, config_.c);
    if (scored.size() != n) throw ProtocolError("similarity backend returned wrong result count");
    for (std::size_t k = 0; k < n; ++k) fresh.push_back({miss_keys[lo + k], scored[k]});
  }
  // Written only once every chunk succeeded.
  cache_.insert(fresh, provider, model, config_.c);
  for (std::size_t m = 0; m < fresh.size(); ++m) {
    for (std::size_t slot : miss_slots[m]) out[slot] = fresh[m].result;
  }
  return out;
}

std::unique_ptr<SimilarityProvider> make_provider(const ProviderConfig& config) {
  config.validate();
  std::shared_ptr<SimilarityBackend> backend;
  switch (config.kind) {
    case ProviderKind::kLexical:
      backend = std::make_shared<LexicalBackend>();
      break;
    case ProviderKind::kRemote:
      backend = std::make_shared<HttpBackend>(config.endpoint, config.model_id,
                                              config.max_retries, config.timeout_seconds);
      break;
    case ProviderKind::kCache:
      break;
  }
  return std::make_unique<SimilarityProvider>(config, std::move(backend));
}

}  // namespace wse
