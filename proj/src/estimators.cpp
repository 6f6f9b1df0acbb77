#include "wse/estimators.hpp"

#include <array>
#include <cmath>
#include <numeric>

#include "wse/errors.hpp"
#include "wse/logmath.hpp"
#include "wse/segmentation.hpp"

namespace wse {

namespace {

constexpr std::array kAll = {
    EstimatorId::kPredictiveEntropy, EstimatorId::kLexicalSimilarity,
    EstimatorId::kSemanticEntropy,   EstimatorId::kTokenSar,
    EstimatorId::kSentSar,           EstimatorId::kSar,
    EstimatorId::kWseWord,           EstimatorId::kWseSequence,
    EstimatorId::kWseCombined,
};

void require_k2(const QASample& sample, EstimatorId id) {
  if (sample.k() < 2) {
    throw DataError("sample '" + sample.id + "': " + to_string(id) + " needs K >= 2 responses",
                    "data.precondition");
  }
}

double mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

EstimatorScore make_score(EstimatorId id, const QASample& sample, std::vector<double> per_seq) {
  EstimatorScore out;
  out.estimator = id;
  out.sample_id = sample.id;
  out.score = mean(per_seq);
  out.per_sequence = std::move(per_seq);
  return out;
}

std::vector<double> raw_log_probs(const QASample& sample) {
  std::vector<double> lp;
  lp.reserve(sample.k());
  for (const auto& r : sample.responses) lp.push_back(sequence_logprob(r).logprob);
  return lp;
}

// U_S per response: sum of E_T * R_T.
std::vector<double> word_level_uncertainty(const QASample& sample,
                                           std::span<const TokenRelevance> relevance) {
  if (relevance.size() != sample.k()) {
    throw DataError("sample '" + sample.id + "': token relevance missing for some responses",
                    "data.precondition");
  }
  std::vector<double> u(sample.k(), 0.0);
  for (std::size_t i = 0; i < sample.k(); ++i) {
    const auto& toks = sample.responses[i].tokens;
    const auto& rel = relevance[i].scores;
    if (rel.size() != toks.size()) {
      throw DataError("sample '" + sample.id + "' response " + std::to_string(i) +
                          ": token relevance length " + std::to_string(rel.size()) +
                          " != token count " + std::to_string(toks.size()),
                      "data.precondition");
    }
    for (std::size_t t = 0; t < toks.size(); ++t) u[i] += -toks[t].logprob * rel[t];
  }
  return u;
}

}  // namespace

std::string to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::kPredictiveEntropy:
      return "pe";
    case EstimatorId::kLexicalSimilarity:
      return "ls";
    case EstimatorId::kSemanticEntropy:
      return "se";
    case EstimatorId::kTokenSar:
      return "token_sar";
    case EstimatorId::kSentSar:
      return "sent_sar";
    case EstimatorId::kSar:
      return "sar";
    case EstimatorId::kWseWord:
      return "wse_w";
    case EstimatorId::kWseSequence:
      return "wse_s";
    case EstimatorId::kWseCombined:
      return "wse_c";
  }
  return "unknown";
}

EstimatorId estimator_from_string(const std::string& s) {
  for (EstimatorId id : kAll) {
    if (to_string(id) == s) return id;
  }
  throw ConfigError("unknown estimator '" + s + "'", "config.estimator");
}

std::span<const EstimatorId> all_estimators() { return kAll; }

bool is_baseline_approximation(EstimatorId id) {
  return id == EstimatorId::kSemanticEntropy || id == EstimatorId::kLexicalSimilarity ||
         id == EstimatorId::kTokenSar || id == EstimatorId::kSentSar || id == EstimatorId::kSar;
}

void WseConfig::validate() const {
  if (!(d > 0.0) || !std::isfinite(d)) throw ConfigError("wse.d must be a positive real");
}

void BaselineConfig::validate() const {
  if (!(entail_threshold >= 0.0 && entail_threshold <= 1.0)) {
    throw ConfigError("baselines.entail_threshold must lie in [0,1]");
  }
  if (!(t_sar > 0.0) || !std::isfinite(t_sar)) {
    throw ConfigError("baselines.t_sar must be a positive real");
  }
}

std::vector<double> token_entropies(const GenerationRecord& record) {
  std::vector<double> e;
  e.reserve(record.tokens.size());
  for (const auto& t : record.tokens) e.push_back(-t.logprob);
  return e;
}

EstimatorScore predictive_entropy(const QASample& sample, const WseConfig& cfg) {
  if (sample.k() == 0) {
    throw DataError("sample '" + sample.id + "': no responses", "data.precondition");
  }
  std::vector<double> per_seq;
  per_seq.reserve(sample.k());
  for (const auto& r : sample.responses) {
    double e = -sequence_logprob(r).logprob;
    if (cfg.length_normalize_pe) e /= static_cast<double>(r.tokens.size());
    per_seq.push_back(e);
  }
  return make_score(EstimatorId::kPredictiveEntropy, sample, std::move(per_seq));
}

EstimatorScore wse_word(const QASample& sample, std::span<const TokenRelevance> relevance,
                        const WseConfig&) {
  return make_score(EstimatorId::kWseWord, sample, word_level_uncertainty(sample, relevance));
}

std::vector<double> consensus_uncertainty(std::span<const double> log_probs,
                                          const SimilarityMatrix& sims, double d) {
  const SequenceRelevance rel = sequence_relevance(sims, log_probs);
  const double log_d = std::log(d);
  std::vector<double> u(log_probs.size());
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    u[i] = -log_add(log_probs[i], rel.log_scores[i] - log_d);
  }
  return u;
}

EstimatorScore wse_sequence(const QASample& sample, const SequenceRelevance& relevance,
                            const WseConfig& cfg) {
  require_k2(sample, EstimatorId::kWseSequence);
  if (relevance.log_scores.size() != sample.k()) {
    throw DataError("sample '" + sample.id + "': sequence relevance size mismatch",
                    "data.precondition");
  }
  const auto log_p = raw_log_probs(sample);
  const double log_d = std::log(cfg.d);
  std::vector<double> u(sample.k());
  for (std::size_t i = 0; i < sample.k(); ++i) {
    u[i] = -log_add(log_p[i], relevance.log_scores[i] - log_d);
  }
  return make_score(EstimatorId::kWseSequence, sample, std::move(u));
}

EstimatorScore wse_combined(const QASample& sample, std::span<const TokenRelevance> relevance,
                            const SimilarityMatrix& sims, const WseConfig& cfg) {
  require_k2(sample, EstimatorId::kWseCombined);
  const auto u_s = word_level_uncertainty(sample, relevance);
  std::vector<double> log_p(u_s.size());
  for (std::size_t i = 0; i < u_s.size(); ++i) log_p[i] = -u_s[i];
  return make_score(EstimatorId::kWseCombined, sample, consensus_uncertainty(log_p, sims, cfg.d));
}

EstimatorScore wse_combined(const QASample& sample, std::span<const TokenRelevance> relevance,
                            SimilarityProvider& provider, const WseConfig& cfg) {
  require_k2(sample, EstimatorId::kWseCombined);
  const auto sims = pairwise_similarity(sample.responses, provider, PairOrder::kUnordered);
  return wse_combined(sample, relevance, sims, cfg);
}

EstimatorScore semantic_entropy(const QASample& sample, const SimilarityMatrix& sims,
                                double entail_threshold) {
  require_k2(sample, EstimatorId::kSemanticEntropy);
  const std::size_t k = sample.k();
  const auto log_p = raw_log_probs(sample);

  // Greedy clustering against each cluster's first member.
  std::vector<std::size_t> cluster_of(k);
  std::vector<std::size_t> representative;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t c = 0;
    for (; c < representative.size(); ++c) {
      const std::size_t r = representative[c];
      if (sims.at(i, r) >= entail_threshold && sims.at(r, i) >= entail_threshold) break;
    }
    if (c == representative.size()) representative.push_back(i);
    cluster_of[i] = c;
  }
  std::vector<std::vector<double>> members(representative.size());
  for (std::size_t i = 0; i < k; ++i) members[cluster_of[i]].push_back(log_p[i]);
  std::vector<double> cluster_log_p;
  cluster_log_p.reserve(members.size());
  for (const auto& m : members) cluster_log_p.push_back(logsumexp(m));

  std::vector<double> per_seq(k);
  for (std::size_t i = 0; i < k; ++i) per_seq[i] = -cluster_log_p[cluster_of[i]];
  return make_score(EstimatorId::kSemanticEntropy, sample, std::move(per_seq));
}

EstimatorScore semantic_entropy(const QASample& sample, SimilarityProvider& provider,
                                double entail_threshold) {
  require_k2(sample, EstimatorId::kSemanticEntropy);
  const auto sims = pairwise_similarity(sample.responses, provider, PairOrder::kOrdered);
  return semantic_entropy(sample, sims, entail_threshold);
}

EstimatorScore lexical_similarity(const QASample& sample, const SimilarityMatrix& sims) {
  require_k2(sample, EstimatorId::kLexicalSimilarity);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t l = 0; l < sims.k; ++l) {
    for (std::size_t i = l + 1; i < sims.k; ++i) {
      sum += sims.at(l, i);
      ++n;
    }
  }
  EstimatorScore out;
  out.estimator = EstimatorId::kLexicalSimilarity;
  out.sample_id = sample.id;
  out.score = -(sum / static_cast<double>(n));
  return out;
}

EstimatorScore lexical_similarity(const QASample& sample, SimilarityProvider& provider) {
  require_k2(sample, EstimatorId::kLexicalSimilarity);
  const auto sims = pairwise_similarity(sample.responses, provider, PairOrder::kUnordered);
  return lexical_similarity(sample, sims);
}

std::vector<double> token_sar_relevance(const GenerationRecord& record,
                                        SimilarityProvider& provider) {
  const std::size_t n = record.tokens.size();
  std::vector<double> rel(n, 1.0);
  std::vector<TextPair> pairs;
  std::vector<std::size_t> slots;
  for (std::size_t t = 0; t < n; ++t) {
    const Span s = record.tokens[t].span;
    std::string without = record.text.substr(0, s.start) + record.text.substr(s.end);
    if (without.find_first_not_of(" \t\n\r\v\f") == std::string::npos) continue;
    pairs.push_back({record.text, std::move(without)});
    slots.push_back(t);
  }
  if (!pairs.empty()) {
    const auto sims = provider.score_batch(pairs);
    for (std::size_t p = 0; p < slots.size(); ++p) rel[slots[p]] = 1.0 - sims[p].min_sim;
  }
  return rel;
}

SarScores sar_family(const QASample& sample, std::span<const std::vector<double>> token_relevance,
                     const SimilarityMatrix& sims, double t_sar) {
  require_k2(sample, EstimatorId::kSar);
  const std::size_t k = sample.k();
  if (token_relevance.size() != k) {
    throw DataError("sample '" + sample.id + "': SAR token relevance missing", "data.precondition");
  }
  std::vector<double> token_sar(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& toks = sample.responses[i].tokens;
    const auto& rel = token_relevance[i];
    if (rel.size() != toks.size()) {
      throw DataError("sample '" + sample.id + "': SAR token relevance length mismatch",
                      "data.precondition");
    }
    const double total = std::accumulate(rel.begin(), rel.end(), 0.0);
    for (std::size_t t = 0; t < toks.size(); ++t) {
      // All-zero relevance falls back to uniform weights.
      const double w = total > 0.0 ? rel[t] / total : 1.0 / static_cast<double>(toks.size());
      token_sar[i] += -toks[t].logprob * w;
    }
  }
  std::vector<double> log_p_sar(k);
  for (std::size_t i = 0; i < k; ++i) log_p_sar[i] = -token_sar[i];

  SarScores out;
  out.token_sar = make_score(EstimatorId::kTokenSar, sample, token_sar);
  out.sent_sar = make_score(EstimatorId::kSentSar, sample,
                            consensus_uncertainty(raw_log_probs(sample), sims, t_sar));
  out.sar = make_score(EstimatorId::kSar, sample, consensus_uncertainty(log_p_sar, sims, t_sar));
  return out;
}

SarScores sar_family(const QASample& sample, SimilarityProvider& provider, double t_sar) {
  require_k2(sample, EstimatorId::kSar);
  std::vector<std::vector<double>> rel;
  rel.reserve(sample.k());
  for (const auto& r : sample.responses) rel.push_back(token_sar_relevance(r, provider));
  const auto sims = pairwise_similarity(sample.responses, provider, PairOrder::kUnordered);
  return sar_family(sample, rel, sims, t_sar);
}

std::vector<EstimatorScore> score_sample(const QASample& sample, SimilarityProvider& provider,
                                         const EstimatorConfig& cfg,
                                         std::span<const EstimatorId> estimators) {
  std::optional<std::vector<TokenRelevance>> token_rel;
  std::optional<SimilarityMatrix> unordered;
  std::optional<SimilarityMatrix> ordered;
  std::optional<SarScores> sar;

  auto get_token_rel = [&]() -> const std::vector<TokenRelevance>& {
    if (!token_rel) {
      token_rel.emplace();
      for (std::size_t i = 0; i < sample.k(); ++i) {
        const auto al = align_record(sample.responses[i]);
        const auto wr = word_relevance(sample, i, al, provider, cfg.relevance);
        token_rel->push_back(token_relevance(wr, al, cfg.wse.normalize_word_relevance));
      }
    }
    return *token_rel;
  };
  auto get_unordered = [&]() -> const SimilarityMatrix& {
    if (!unordered) {
      unordered = pairwise_similarity(sample.responses, provider, PairOrder::kUnordered);
    }
    return *unordered;
  };
  auto get_sar = [&]() -> const SarScores& {
    if (!sar) {
      require_k2(sample, EstimatorId::kSar);
      std::vector<std::vector<double>> rel;
      for (const auto& r : sample.responses) rel.push_back(token_sar_relevance(r, provider));
      sar = sar_family(sample, rel, get_unordered(), cfg.baseline.t_sar);
    }
    return *sar;
  };

  std::vector<EstimatorScore> out;
  out.reserve(estimators.size());
  for (EstimatorId id : estimators) {
    switch (id) {
      case EstimatorId::kPredictiveEntropy:
        out.push_back(predictive_entropy(sample, cfg.wse));
        break;
      case EstimatorId::kLexicalSimilarity:
        require_k2(sample, id);
        out.push_back(lexical_similarity(sample, get_unordered()));
        break;
      case EstimatorId::kSemanticEntropy:
        require_k2(sample, id);
        if (!ordered) ordered = pairwise_similarity(sample.responses, provider, PairOrder::kOrdered);
        out.push_back(semantic_entropy(sample, *ordered, cfg.baseline.entail_threshold));
        break;
      case EstimatorId::kTokenSar:
        out.push_back(get_sar().token_sar);
        break;
      case EstimatorId::kSentSar:
        out.push_back(get_sar().sent_sar);
        break;
      case EstimatorId::kSar:
        out.push_back(get_sar().sar);
        break;
      case EstimatorId::kWseWord:
        out.push_back(wse_word(sample, get_token_rel(), cfg.wse));
        break;
      case EstimatorId::kWseSequence: {
        require_k2(sample, id);
        const auto rel = sequence_relevance(get_unordered(), raw_log_probs(sample));
        out.push_back(wse_sequence(sample, rel, cfg.wse));
        break;
      }
      case EstimatorId::kWseCombined:
        require_k2(sample, id);
        out.push_back(wse_combined(sample, get_token_rel(), get_unordered(), cfg.wse));
        break;
    }
  }
  return out;
}

}  // namespace wse
