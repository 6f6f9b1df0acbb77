#include "wse/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <exception>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "wse/digest.hpp"
#include "wse/errors.hpp"
#include "wse/metrics.hpp"
#include "wse/relevance.hpp"
#include "wse/segmentation.hpp"

namespace wse {

using json = nlohmann::json;

namespace {

constexpr const char* kScoresFormat = "wse-scores";
constexpr const char* kLabelsFormat = "wse-labels";

// Files are written next to their destination and renamed only once every
// output of the command succeeded.
class OutputSet {
 public:
  OutputSet() = default;
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;

  ~OutputSet() {
    if (committed_) return;
    for (auto& f : files_) {
      f.stream.close();
      std::error_code ec;
      std::filesystem::remove(f.tmp, ec);
    }
  }

  std::ostream& open(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
      std::error_code ec;
      std::filesystem::create_directories(path.parent_path(), ec);
      if (ec) throw DataError("cannot create " + path.parent_path().string() + ": " + ec.message(),
                              "data.io");
    }
    File& f = files_.emplace_back();
    f.path = path;
    f.tmp = path;
    f.tmp += ".tmp";
    f.stream.open(f.tmp, std::ios::binary | std::ios::trunc);
    if (!f.stream) throw DataError("cannot write " + f.tmp.string(), "data.io");
    return f.stream;
  }

  std::vector<std::filesystem::path> commit() {
    for (auto& f : files_) {
      f.stream.flush();
      if (!f.stream) throw DataError("write failed: " + f.tmp.string(), "data.io");
      f.stream.close();
    }
    std::vector<std::filesystem::path> out;
    for (auto& f : files_) {
      std::error_code ec;
      std::filesystem::rename(f.tmp, f.path, ec);
      if (ec) throw DataError("cannot rename " + f.tmp.string() + ": " + ec.message(), "data.io");
      out.push_back(f.path);
    }
    committed_ = true;
    return out;
  }

 private:
  struct File {
    std::filesystem::path path;
    std::filesystem::path tmp;
    std::ofstream stream;
  };
  std::deque<File> files_;
  bool committed_ = false;
};

json header(const char* format, const std::string& fingerprint) {
  return {{"format", format}, {"version", 1}, {"fingerprint", fingerprint}};
}

std::vector<std::string> read_lines(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(std::string(what) + " required: cannot open " + path.string(),
                             std::string("config.missing_") + what);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t n) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what(), "data.malformed");
  }
}

void check_header(const json& h, const char* format, const std::filesystem::path& path) {
  if (!h.is_object() || h.value("format", "") != format || h.value("version", 0) != 1 ||
      !h.contains("fingerprint") || !h["fingerprint"].is_string()) {
    throw DataError(path.string() + ": expected a " + format + " version 1 header", "data.header");
  }
}

std::string opt_csv(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

struct Context {
  RunConfig cfg;
  DatasetManifest dataset;  // samples sorted by id
  std::string fingerprint;
  std::unique_ptr<SimilarityProvider> provider;
};

Context open_run(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.dataset.empty()) throw ConfigError("dataset path required", "config.missing_dataset");
  if (!std::filesystem::exists(cfg.dataset)) {
    throw ConfigError("dataset not found: " + cfg.dataset.string(), "config.missing_dataset");
  }
  Context ctx;
  ctx.cfg = cfg;
  ctx.dataset = load_samples(cfg.dataset);
  const auto order = id_order(ctx.dataset);
  std::vector<QASample> sorted;
  sorted.reserve(order.size());
  for (std::size_t i : order) sorted.push_back(std::move(ctx.dataset.samples[i]));
  ctx.dataset.samples = std::move(sorted);
  ctx.fingerprint = config_fingerprint(cfg, sha256_file(cfg.dataset));
  return ctx;
}

SimilarityProvider& provider(Context& ctx) {
  if (!ctx.provider) ctx.provider = make_provider(ctx.cfg.similarity);
  return *ctx.provider;
}

ScoreTable load_scores_for(const Context& ctx) {
  auto table = read_scores(ctx.cfg.scores_file());
  if (table.fingerprint != ctx.fingerprint) {
    throw DataError("scores file " + ctx.cfg.scores_file().string() + " has fingerprint " +
                        table.fingerprint + ", this run is " + ctx.fingerprint,
                    "data.stale_artifact");
  }
  const std::size_t n = ctx.dataset.samples.size();
  if (table.rows.size() != n * table.estimators.size()) {
    throw DataError("scores file does not cover the dataset", "data.precondition");
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (table.rows[s * table.estimators.size()].sample_id != ctx.dataset.samples[s].id) {
      throw DataError("scores file does not match the dataset sample ids", "data.precondition");
    }
  }
  return table;
}

LabelTable load_labels_for(const Context& ctx) {
  if (!std::filesystem::exists(ctx.cfg.labels_file())) {
    throw ConfigError("labels required: " + ctx.cfg.labels_file().string() + " not found",
                      "config.missing_labels");
  }
  auto table = read_labels(ctx.cfg.labels_file());
  if (table.fingerprint != ctx.fingerprint) {
    throw DataError("labels file " + ctx.cfg.labels_file().string() + " has fingerprint " +
                        table.fingerprint + ", this run is " + ctx.fingerprint,
                    "data.stale_artifact");
  }
  if (table.labels.size() != ctx.dataset.samples.size()) {
    throw DataError("labels file does not cover the dataset", "data.precondition");
  }
  for (std::size_t s = 0; s < table.labels.size(); ++s) {
    if (table.labels[s].sample_id != ctx.dataset.samples[s].id) {
      throw DataError("labels file does not match the dataset sample ids", "data.precondition");
    }
  }
  return table;
}

std::vector<std::filesystem::path> cmd_validate(Context& ctx, std::ostream& out) {
  std::size_t responses = 0;
  std::size_t tokens = 0;
  std::size_t words = 0;
  for (const auto& s : ctx.dataset.samples) {
    responses += s.k();
    for (const auto& r : s.responses) {
      tokens += r.tokens.size();
      words += segment_words(r.text).size();
    }
  }
  out << "dataset " << ctx.dataset.name << "\n"
      << "samples " << ctx.dataset.samples.size() << "\n"
      << "responses " << responses << "\n"
      << "tokens " << tokens << "\n"
      << "words " << words << "\n"
      << "fingerprint " << ctx.fingerprint << "\n";
  return {};
}

std::vector<std::filesystem::path> cmd_score(Context& ctx) {
  const auto table = score_dataset(ctx.dataset, provider(ctx), ctx.cfg, ctx.fingerprint);
  OutputSet files;
  write_scores(files.open(ctx.cfg.scores_file()), table);
  return files.commit();
}

std::vector<std::filesystem::path> cmd_label(Context& ctx) {
  const auto table = label_dataset(ctx.dataset, provider(ctx), ctx.cfg, ctx.fingerprint);
  OutputSet files;
  write_labels(files.open(ctx.cfg.labels_file()), table);
  return files.commit();
}

std::unique_ptr<bool[]> incorrect_flags(const LabelTable& labels) {
  std::unique_ptr<bool[]> flags(new bool[labels.labels.size()]);
  for (std::size_t s = 0; s < labels.labels.size(); ++s) flags[s] = !labels.labels[s].correct;
  return flags;
}

std::vector<double> score_values(const ScoreTable& table, EstimatorId id) {
  std::vector<double> v;
  for (const auto& r : table.column(id)) v.push_back(r.score);
  return v;
}

std::vector<std::filesystem::path> cmd_evaluate(Context& ctx) {
  const auto labels = load_labels_for(ctx);
  const auto scores = load_scores_for(ctx);
  const auto flags = incorrect_flags(labels);
  const std::span<const bool> inc(flags.get(), labels.labels.size());

  OutputSet files;
  auto& csv = files.open(ctx.cfg.output_dir / "evaluation.csv");
  csv << "# fingerprint=" << ctx.fingerprint << "\n"
      << "estimator,approximation,n_samples,n_incorrect,auroc,deep_auroc,groups,groups_used\n";
  json rows = json::array();
  for (EstimatorId id : scores.estimators) {
    const auto values = score_values(scores, id);
    const auto run = evaluate_estimator(id, values, inc, ctx.cfg.metrics.deep_auroc_groups);
    const bool approx = is_baseline_approximation(id);
    csv << to_string(id) << "," << (approx ? "true" : "false") << "," << run.n_samples << ","
        << run.n_positive << "," << opt_csv(run.auroc) << "," << opt_csv(run.deep_auroc) << ","
        << run.groups << "," << run.groups_used << "\n";
    rows.push_back({{"estimator", to_string(id)},
                    {"approximation", approx},
                    {"n_samples", run.n_samples},
                    {"n_incorrect", run.n_positive},
                    {"auroc", opt_json(run.auroc)},
                    {"deep_auroc", opt_json(run.deep_auroc)},
                    {"groups", run.groups},
                    {"groups_used", run.groups_used}});
  }
  json doc = header("wse-evaluation", ctx.fingerprint);
  doc["positives"] = "incorrect";
  doc["results"] = rows;
  files.open(ctx.cfg.output_dir / "evaluation.json") << doc.dump(2) << "\n";
  return files.commit();
}

std::vector<std::filesystem::path> cmd_analyze(Context& ctx) {
  auto& prov = provider(ctx);
  const auto& samples = ctx.dataset.samples;
  std::vector<ProportionProfile> profiles(samples.size());
  parallel_for(samples.size(), ctx.cfg.jobs, [&](std::size_t s) {
    const QASample& sample = samples[s];
    std::vector<WordAlignment> alignments;
    std::vector<WordRelevance> word_rel;
    for (std::size_t i = 0; i < sample.k(); ++i) {
      alignments.push_back(align_record(sample.responses[i]));
      word_rel.push_back(
          word_relevance(sample, i, alignments.back(), prov, ctx.cfg.estimator.relevance));
    }
    const auto sims = pairwise_similarity(sample.responses, prov, PairOrder::kUnordered);
    std::vector<double> log_p;
    for (const auto& r : sample.responses) log_p.push_back(sequence_logprob(r).logprob);
    profiles[s] = proportion_profile(sample, alignments, word_rel, sequence_relevance(sims, log_p));
  });
  ProportionProfile total;
  std::size_t zero_total = 0;
  for (const auto& p : profiles) {
    total.merge_histograms(p);
    zero_total += p.zero_total_entropy ? 1 : 0;
  }

  OutputSet files;
  auto& csv = files.open(ctx.cfg.output_dir / "analysis.csv");
  csv << "# fingerprint=" << ctx.fingerprint << "\n"
      << "# samples=" << samples.size() << " zero_entropy_samples=" << zero_total << "\n";
  write_histogram_csv(csv, total);
  return files.commit();
}

std::vector<std::filesystem::path> cmd_resample(Context& ctx) {
  const auto scores = load_scores_for(ctx);
  auto& prov = provider(ctx);
  OutputSet files;
  auto& csv = files.open(ctx.cfg.output_dir / "resample.csv");
  csv << "# fingerprint=" << ctx.fingerprint << "\n"
      << "estimator,n_samples,initial_accuracy,calibrated_accuracy,delta\n";
  json rows = json::array();
  for (EstimatorId id : scores.estimators) {
    const auto col = scores.column(id);
    if (col.empty() || !col.front().per_sequence) continue;
    const auto rep = resample_accuracy(ctx.dataset, col, prov, ctx.cfg.correctness);
    csv << to_string(id) << "," << rep.n_samples << "," << format_double(rep.initial_accuracy)
        << "," << format_double(rep.calibrated_accuracy) << "," << format_double(rep.delta)
        << "\n";
    json chosen = json::object();
    for (std::size_t s = 0; s < rep.chosen.size(); ++s) {
      chosen[ctx.dataset.samples[s].id] = rep.chosen[s];
    }
    rows.push_back({{"estimator", to_string(id)},
                    {"n_samples", rep.n_samples},
                    {"initial_accuracy", rep.initial_accuracy},
                    {"calibrated_accuracy", rep.calibrated_accuracy},
                    {"delta", rep.delta},
                    {"chosen", chosen}});
  }
  json doc = header("wse-resample", ctx.fingerprint);
  doc["results"] = rows;
  files.open(ctx.cfg.output_dir / "resample.json") << doc.dump(2) << "\n";
  return files.commit();
}

void write_sweep(std::ostream& out, const std::string& fingerprint,
                 std::span<const SweepRow> rows) {
  out << "# fingerprint=" << fingerprint << "\n"
      << "estimator,axis,value,auroc\n";
  for (const auto& r : rows) {
    out << to_string(r.estimator) << "," << r.axis << "," << format_double(r.value) << ","
        << opt_csv(r.auroc) << "\n";
  }
}

std::vector<std::filesystem::path> cmd_sweep(Context& ctx) {
  const auto labels = load_labels_for(ctx);
  const auto scores = load_scores_for(ctx);
  std::vector<EstimatorColumn> columns;
  for (EstimatorId id : scores.estimators) columns.push_back({id, score_values(scores, id)});
  const auto& sw = ctx.cfg.metrics.sweep;
  const auto by_threshold = threshold_sweep(columns, labels.labels, sw.thresholds, sw.criterion);
  const auto by_k = k_sweep(ctx.dataset, provider(ctx), ctx.cfg.estimator, scores.estimators,
                            labels.labels, sw.k_values);
  OutputSet files;
  write_sweep(files.open(ctx.cfg.output_dir / "sweep_threshold.csv"), ctx.fingerprint,
              by_threshold);
  write_sweep(files.open(ctx.cfg.output_dir / "sweep_k.csv"), ctx.fingerprint, by_k);
  return files.commit();
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig:
      return "config";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kProvider:
      return "provider";
    case ErrorKind::kMetric:
      return "metric";
  }
  return "unknown";
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig:
      return 2;
    case ErrorKind::kData:
    case ErrorKind::kMetric:
      return 3;
    case ErrorKind::kProvider:
      return 4;
  }
  return 1;
}

void error_record(std::ostream& err, const std::string& command, const std::string& kind,
                  const std::string& code, const std::string& message) {
  json j = {{"error", {{"command", command}, {"kind", kind}, {"code", code}, {"message", message}}}};
  err << j.dump(-1, ' ', false, json::error_handler_t::replace) << "\n";
}

}  // namespace

void apply_environment(RunConfig& cfg) {
  const char* dir = std::getenv("WSE_CACHE_DIR");
  if (dir && *dir) cfg.similarity.cache_path = std::filesystem::path(dir) / "similarity-cache.jsonl";
}

std::vector<EstimatorScore> ScoreTable::column(EstimatorId id) const {
  const auto it = std::find(estimators.begin(), estimators.end(), id);
  if (it == estimators.end()) return {};
  const auto e = static_cast<std::size_t>(it - estimators.begin());
  std::vector<EstimatorScore> out;
  for (std::size_t r = e; r < rows.size(); r += estimators.size()) out.push_back(rows[r]);
  return out;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(jobs, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex m;
  auto work = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!first) first = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

std::vector<std::size_t> id_order(const DatasetManifest& dataset) {
  std::vector<std::size_t> idx(dataset.samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return dataset.samples[a].id < dataset.samples[b].id;
  });
  return idx;
}

ScoreTable score_dataset(const DatasetManifest& dataset, SimilarityProvider& provider,
                         const RunConfig& cfg, const std::string& fingerprint) {
  const auto order = id_order(dataset);
  std::vector<std::vector<EstimatorScore>> per(order.size());
  parallel_for(order.size(), cfg.jobs, [&](std::size_t i) {
    per[i] = score_sample(dataset.samples[order[i]], provider, cfg.estimator, cfg.estimators);
  });
  ScoreTable table;
  table.fingerprint = fingerprint;
  table.estimators = cfg.estimators;
  for (auto& row : per) {
    for (auto& s : row) table.rows.push_back(std::move(s));
  }
  return table;
}

LabelTable label_dataset(const DatasetManifest& dataset, SimilarityProvider& provider,
                         const RunConfig& cfg, const std::string& fingerprint) {
  const auto order = id_order(dataset);
  LabelTable table;
  table.fingerprint = fingerprint;
  table.labels.resize(order.size());
  parallel_for(order.size(), cfg.jobs, [&](std::size_t i) {
    table.labels[i] = label(dataset.samples[order[i]], provider, cfg.correctness);
  });
  return table;
}

std::string format_double(double v) {
  if (!std::isfinite(v)) throw DataError("refusing to write a non-finite value", "data.nonfinite");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_scores(std::ostream& out, const ScoreTable& table) {
  json h = header(kScoresFormat, table.fingerprint);
  json est = json::array();
  for (EstimatorId id : table.estimators) est.push_back(to_string(id));
  h["estimators"] = est;
  out << h.dump() << "\n";
  for (const auto& r : table.rows) {
    if (!std::isfinite(r.score)) {
      throw DataError("non-finite " + to_string(r.estimator) + " score for sample '" +
                          r.sample_id + "'",
                      "data.nonfinite");
    }
    json j = {{"sample_id", r.sample_id}, {"estimator", to_string(r.estimator)}, {"score", r.score}};
    if (r.per_sequence) j["per_sequence"] = *r.per_sequence;
    out << j.dump() << "\n";
  }
}

ScoreTable read_scores(const std::filesystem::path& path) {
  const auto lines = read_lines(path, "scores");
  if (lines.empty()) throw DataError(path.string() + ": empty scores file", "data.header");
  const json h = parse_line(lines[0], path, 1);
  check_header(h, kScoresFormat, path);
  ScoreTable table;
  table.fingerprint = h["fingerprint"].get<std::string>();
  try {
    for (const auto& e : h.at("estimators")) {
      table.estimators.push_back(estimator_from_string(e.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad estimator list: " + e.what(), "data.header");
  }
  if (table.estimators.empty()) throw DataError(path.string() + ": no estimators", "data.header");
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const json j = parse_line(lines[n], path, n + 1);
    EstimatorScore s;
    try {
      s.sample_id = j.at("sample_id").get<std::string>();
      s.estimator = estimator_from_string(j.at("estimator").get<std::string>());
      s.score = j.at("score").get<double>();
      if (j.contains("per_sequence")) s.per_sequence = j["per_sequence"].get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n + 1) + ": " + e.what(),
                      "data.malformed");
    }
    const std::size_t row = table.rows.size();
    const EstimatorId expected = table.estimators[row % table.estimators.size()];
    const bool same_sample = row % table.estimators.size() == 0 ||
                             table.rows[row - 1].sample_id == s.sample_id;
    if (s.estimator != expected || !same_sample) {
      throw DataError(path.string() + ":" + std::to_string(n + 1) + ": rows out of order",
                      "data.malformed");
    }
    table.rows.push_back(std::move(s));
  }
  if (table.rows.size() % table.estimators.size() != 0) {
    throw DataError(path.string() + ": incomplete final sample", "data.malformed");
  }
  return table;
}

void write_labels(std::ostream& out, const LabelTable& table) {
  out << header(kLabelsFormat, table.fingerprint).dump() << "\n";
  for (const auto& l : table.labels) {
    json j = {{"sample_id", l.sample_id},
              {"rs", l.rs},
              {"ss", l.ss},
              {"correct", l.correct},
              {"best_rs_reference", l.best_rs_reference},
              {"best_ss_reference", l.best_ss_reference}};
    out << j.dump() << "\n";
  }
}

LabelTable read_labels(const std::filesystem::path& path) {
  const auto lines = read_lines(path, "labels");
  if (lines.empty()) throw DataError(path.string() + ": empty labels file", "data.header");
  const json h = parse_line(lines[0], path, 1);
  check_header(h, kLabelsFormat, path);
  LabelTable table;
  table.fingerprint = h["fingerprint"].get<std::string>();
  for (std::size_t n = 1; n < lines.size(); ++n) {
    const json j = parse_line(lines[n], path, n + 1);
    CorrectnessLabel l;
    try {
      l.sample_id = j.at("sample_id").get<std::string>();
      l.rs = j.at("rs").get<double>();
      l.ss = j.at("ss").get<double>();
      l.correct = j.at("correct").get<bool>();
      l.best_rs_reference = j.at("best_rs_reference").get<std::size_t>();
      l.best_ss_reference = j.at("best_ss_reference").get<std::size_t>();
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n + 1) + ": " + e.what(),
                      "data.malformed");
    }
    table.labels.push_back(std::move(l));
  }
  return table;
}

int run_command(const std::string& command, const RunConfig& cfg, std::ostream& out,
                std::ostream& err) {
  try {
    using Handler = std::vector<std::filesystem::path> (*)(Context&);
    static const std::unordered_map<std::string, Handler> handlers = {
        {"score", cmd_score},       {"label", cmd_label},       {"evaluate", cmd_evaluate},
        {"analyze", cmd_analyze},   {"resample", cmd_resample}, {"sweep", cmd_sweep},
    };
    const auto it = handlers.find(command);
    if (command != "validate" && it == handlers.end()) {
      throw ConfigError("unknown command '" + command + "'", "config.command");
    }
    Context ctx = open_run(cfg);
    const auto written = command == "validate" ? cmd_validate(ctx, out) : it->second(ctx);
    for (const auto& p : written) out << "wrote " << p.string() << "\n";
    return 0;
  } catch (const Error& e) {
    error_record(err, command, kind_name(e.kind()), e.code(), e.what());
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    error_record(err, command, "data", "data.io", e.what());
    return 3;
  } catch (const std::exception& e) {
    error_record(err, command, "internal", "internal", e.what());
    return 1;
  }
}

}  // namespace wse
