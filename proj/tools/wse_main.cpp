// wse: score, label and evaluate sampled LLM responses for uncertainty.
//
//   wse <validate|score|label|evaluate|analyze|resample|sweep> [options]

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wse/config.hpp"
#include "wse/errors.hpp"
#include "wse/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::string dataset;
  std::string out;
  std::string provider;
  std::string endpoint;
  std::string estimators;
  std::string scores;
  std::string labels;
  std::size_t jobs = 0;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

wse::RunConfig build_config(const Flags& f) {
  wse::RunConfig cfg = f.config.empty() ? wse::RunConfig{} : wse::load_run_config(f.config);
  wse::apply_environment(cfg);
  if (!f.dataset.empty()) cfg.dataset = f.dataset;
  if (!f.out.empty()) cfg.output_dir = f.out;
  if (!f.provider.empty()) cfg.similarity.kind = wse::provider_kind_from_string(f.provider);
  if (!f.endpoint.empty()) cfg.similarity.endpoint = f.endpoint;
  if (!f.estimators.empty()) {
    cfg.estimators.clear();
    for (const auto& e : split_list(f.estimators)) {
      cfg.estimators.push_back(wse::estimator_from_string(e));
    }
  }
  if (!f.scores.empty()) cfg.scores_path = f.scores;
  if (!f.labels.empty()) cfg.labels_path = f.labels;
  if (f.jobs > 0) cfg.jobs = f.jobs;
  return cfg;
}

int report(const std::string& command, const std::string& code, const std::string& message) {
  nlohmann::json j = {
      {"error", {{"command", command}, {"kind", "config"}, {"code", code}, {"message", message}}}};
  std::cerr << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Word-sequence entropy scoring and evaluation"};
  app.require_subcommand(1);
  Flags flags;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"validate", "Check a dataset file and print summary counts"},
      {"score", "Write per-sample estimator scores"},
      {"label", "Write correctness labels for the most-likely answers"},
      {"evaluate", "AUROC and deep AUROC per estimator"},
      {"analyze", "Relevance histograms of uncertainty"},
      {"resample", "Accuracy after picking the lowest-uncertainty response"},
      {"sweep", "AUROC across correctness thresholds and response counts"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "YAML run configuration");
    sub->add_option("--dataset", flags.dataset, "Dataset JSONL file");
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--provider", flags.provider, "Similarity provider: lexical, cache or remote");
    sub->add_option("--endpoint", flags.endpoint, "Sidecar base URL, e.g. http://127.0.0.1:8700");
    sub->add_option("--estimators", flags.estimators, "Comma-separated estimator ids");
    sub->add_option("--jobs", flags.jobs, "Parallel workers");
    sub->add_option("--scores", flags.scores, "Scores file (default <out>/scores.jsonl)");
    sub->add_option("--labels", flags.labels, "Labels file (default <out>/labels.jsonl)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    const std::string cmd = argc > 1 ? argv[1] : "";
    return report(cmd, "config.flags", e.what());
  }

  const std::string command = app.get_subcommands().front()->get_name();
  wse::RunConfig cfg;
  try {
    cfg = build_config(flags);
  } catch (const wse::Error& e) {
    return report(command, e.code(), e.what());
  }
  return wse::run_command(command, cfg, std::cout, std::cerr);
}
