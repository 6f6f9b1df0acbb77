#include "wse/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "wse/digest.hpp"
#include "wse/errors.hpp"

namespace wse {

using json = nlohmann::json;

namespace {

void check_keys(const YAML::Node& node, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'", "config.unknown_key");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  if (const YAML::Node v = node[key]) {
    try {
      out = v.as<T>();
    } catch (const YAML::Exception& e) {
      throw ConfigError(where + "." + key + ": " + e.what());
    }
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

void RunConfig::validate() const {
  similarity.validate();
  estimator.wse.validate();
  estimator.baseline.validate();
  correctness.validate();
  if (estimators.empty()) throw ConfigError("estimators: at least one estimator required");
  if (metrics.deep_auroc_groups == 0) throw ConfigError("metrics.deep_auroc_groups must be >= 1");
  for (std::size_t k : metrics.sweep.k_values) {
    if (k < 1) throw ConfigError("metrics.sweep.k_values must be >= 1");
  }
  for (double t : metrics.sweep.thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("metrics.sweep.thresholds must lie in [0,1]");
  }
  if (jobs == 0) throw ConfigError("jobs must be >= 1");
}

std::filesystem::path RunConfig::scores_file() const {
  return scores_path ? *scores_path : output_dir / "scores.jsonl";
}

std::filesystem::path RunConfig::labels_file() const {
  return labels_path ? *labels_path : output_dir / "labels.jsonl";
}

RunConfig parse_run_config(const std::string& yaml_text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what(), "config.parse");
  }
  RunConfig cfg;
  if (!root || root.IsNull()) return cfg;
  check_keys(root, "config",
             {"dataset", "output_dir", "scores", "labels", "estimators", "similarity", "wse",
              "baselines", "relevance", "correctness", "metrics", "generation", "jobs", "seed"});

  std::string s;
  if (root["dataset"]) {
    read(root, "dataset", s, "config");
    cfg.dataset = resolve(base_dir, s);
  }
  if (root["output_dir"]) {
    read(root, "output_dir", s, "config");
    cfg.output_dir = resolve(base_dir, s);
  }
  if (root["scores"]) {
    read(root, "scores", s, "config");
    cfg.scores_path = resolve(base_dir, s);
  }
  if (root["labels"]) {
    read(root, "labels", s, "config");
    cfg.labels_path = resolve(base_dir, s);
  }
  if (const auto e = root["estimators"]) {
    if (!e.IsSequence()) throw ConfigError("estimators: expected a list");
    cfg.estimators.clear();
    for (const auto& item : e) cfg.estimators.push_back(estimator_from_string(item.as<std::string>()));
  }
  read(root, "jobs", cfg.jobs, "config");
  read(root, "seed", cfg.seed, "config");

  if (const auto n = root["similarity"]) {
    check_keys(n, "similarity",
               {"provider", "c", "endpoint", "cache_path", "model_id", "cache_source", "max_batch",
                "max_retries", "timeout_seconds", "symmetrize"});
    auto& p = cfg.similarity;
    if (n["provider"]) {
      read(n, "provider", s, "similarity");
      p.kind = provider_kind_from_string(s);
    }
    if (n["cache_source"]) {
      read(n, "cache_source", s, "similarity");
      p.cache_source = provider_kind_from_string(s);
    }
    if (n["cache_path"]) {
      read(n, "cache_path", s, "similarity");
      p.cache_path = resolve(base_dir, s);
    }
    read(n, "c", p.c, "similarity");
    read(n, "endpoint", p.endpoint, "similarity");
    read(n, "model_id", p.model_id, "similarity");
    read(n, "max_batch", p.max_batch, "similarity");
    read(n, "max_retries", p.max_retries, "similarity");
    read(n, "timeout_seconds", p.timeout_seconds, "similarity");
    read(n, "symmetrize", p.symmetrize, "similarity");
  }
  if (const auto n = root["wse"]) {
    check_keys(n, "wse", {"d", "normalize_word_relevance", "length_normalize_pe"});
    read(n, "d", cfg.estimator.wse.d, "wse");
    read(n, "normalize_word_relevance", cfg.estimator.wse.normalize_word_relevance, "wse");
    read(n, "length_normalize_pe", cfg.estimator.wse.length_normalize_pe, "wse");
  }
  if (const auto n = root["baselines"]) {
    check_keys(n, "baselines", {"entail_threshold", "t_sar"});
    read(n, "entail_threshold", cfg.estimator.baseline.entail_threshold, "baselines");
    read(n, "t_sar", cfg.estimator.baseline.t_sar, "baselines");
  }
  if (const auto n = root["relevance"]) {
    check_keys(n, "relevance", {"include_context"});
    read(n, "include_context", cfg.estimator.relevance.include_context, "relevance");
  }
  if (const auto n = root["correctness"]) {
    check_keys(n, "correctness", {"rs_threshold", "ss_threshold"});
    read(n, "rs_threshold", cfg.correctness.rs_threshold, "correctness");
    read(n, "ss_threshold", cfg.correctness.ss_threshold, "correctness");
  }
  if (const auto n = root["metrics"]) {
    check_keys(n, "metrics", {"deep_auroc_groups", "sweep"});
    read(n, "deep_auroc_groups", cfg.metrics.deep_auroc_groups, "metrics");
    if (const auto sw = n["sweep"]) {
      check_keys(sw, "metrics.sweep", {"thresholds", "criterion", "k_values"});
      read(sw, "thresholds", cfg.metrics.sweep.thresholds, "metrics.sweep");
      read(sw, "k_values", cfg.metrics.sweep.k_values, "metrics.sweep");
      if (sw["criterion"]) {
        read(sw, "criterion", s, "metrics.sweep");
        cfg.metrics.sweep.criterion = sweep_criterion_from_string(s);
      }
    }
  }
  if (const auto n = root["generation"]) {
    check_keys(n, "generation", {"k", "max_length", "temperature", "most_likely"});
    read(n, "k", cfg.generation.k, "generation");
    read(n, "max_length", cfg.generation.max_length, "generation");
    read(n, "temperature", cfg.generation.temperature, "generation");
    read(n, "most_likely", cfg.generation.most_likely, "generation");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string(), "config.io");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

std::string canonical_settings(const RunConfig& cfg) {
  json est = json::array();
  for (EstimatorId id : cfg.estimators) est.push_back(to_string(id));
  const std::string provider = cfg.similarity.kind == ProviderKind::kCache
                                   ? to_string(cfg.similarity.cache_source)
                                   : to_string(cfg.similarity.kind);
  // Lexical results do not depend on a model id.
  const std::string model = cfg.similarity.kind == ProviderKind::kLexical
                                ? "jaccard-v1"
                                : (cfg.similarity.model_id.empty() ? "default"
                                                                   : cfg.similarity.model_id);
  json j = {
      {"estimators", est},
      {"similarity",
       {{"provider", provider},
        {"model", model},
        {"c", cfg.similarity.c},
        {"symmetrize", cfg.similarity.symmetrize}}},
      {"wse",
       {{"d", cfg.estimator.wse.d},
        {"normalize_word_relevance", cfg.estimator.wse.normalize_word_relevance},
        {"length_normalize_pe", cfg.estimator.wse.length_normalize_pe}}},
      {"baselines",
       {{"entail_threshold", cfg.estimator.baseline.entail_threshold},
        {"t_sar", cfg.estimator.baseline.t_sar}}},
      {"relevance", {{"include_context", cfg.estimator.relevance.include_context}}},
      {"correctness",
       {{"rs_threshold", cfg.correctness.rs_threshold},
        {"ss_threshold", cfg.correctness.ss_threshold}}},
      {"metrics",
       {{"deep_auroc_groups", cfg.metrics.deep_auroc_groups},
        {"sweep",
         {{"thresholds", cfg.metrics.sweep.thresholds},
          {"criterion", to_string(cfg.metrics.sweep.criterion)},
          {"k_values", cfg.metrics.sweep.k_values}}}}},
      {"generation",
       {{"k", cfg.generation.k},
        {"max_length", cfg.generation.max_length},
        {"temperature", cfg.generation.temperature},
        {"most_likely", cfg.generation.most_likely}}},
  };
  return j.dump();  // nlohmann sorts object keys
}

std::string config_fingerprint(const RunConfig& cfg, const std::string& dataset_digest) {
  return sha256_hex(canonical_settings(cfg) + "\n" + dataset_digest).substr(0, 16);
}

}  // namespace wse
