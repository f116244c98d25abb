#ifndef HEDN_CLI_HPP
#define HEDN_CLI_HPP

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hedn/checkpoint.hpp"
#include "hedn/clustering.hpp"
#include "hedn/data.hpp"
#include "hedn/engine.hpp"
#include "hedn/report.hpp"

namespace hedn::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfigFailure = 2, kDataFailure = 3, kNumericFailure = 4 };

/// Everything a command needs: training hyperparameters, synthetic-data
/// settings and protocol switches. Filled from a `key = value` file and
/// then from command-line overrides.
struct RunConfig {
  TrainConfig train;
  SynthConfig synth;
  std::string protocol = "loso";  // loso | cross-dataset | single-fold
  bool zscore = false;
  bool use_trial_ids = true;
  bool merge_4to3_sources = false;
  bool merge_4to3_targets = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  if (!hedn::detail::parse_number(v, out)) throw ConfigError(key + ": not a number: '" + v + "'");
  return out;
}

inline std::size_t to_count(const std::string& key, const std::string& v) {
  long long out = 0;
  if (!hedn::detail::parse_number(v, out) || out < 0) {
    throw ConfigError(key + ": not a non-negative integer: '" + v + "'");
  }
  return static_cast<std::size_t>(out);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": not a boolean: '" + v + "'");
}

inline std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (auto part : hedn::detail::split_commas(v)) out.push_back(to_double(key, trim(std::string(part))));
  return out;
}

}  // namespace detail

/// Sets one configuration key. Unknown keys raise ConfigError.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"lr", [&](const std::string& v) { cfg.train.lr = to_double(key, v); }},
      {"weight_decay", [&](const std::string& v) { cfg.train.weight_decay = to_double(key, v); }},
      {"iterations", [&](const std::string& v) { cfg.train.iterations = to_count(key, v); }},
      {"batch_size", [&](const std::string& v) { cfg.train.batch_size = to_count(key, v); }},
      {"lambda2", [&](const std::string& v) { cfg.train.lambda2 = to_double(key, v); }},
      {"gamma_s", [&](const std::string& v) { cfg.train.gamma_s = to_double(key, v); }},
      {"gamma_t", [&](const std::string& v) { cfg.train.gamma_t = to_double(key, v); }},
      {"tau", [&](const std::string& v) { cfg.train.tau = to_double(key, v); }},
      {"rmsprop_alpha", [&](const std::string& v) { cfg.train.rmsprop_alpha = to_double(key, v); }},
      {"rmsprop_eps", [&](const std::string& v) { cfg.train.rmsprop_eps = to_double(key, v); }},
      {"dropout", [&](const std::string& v) { cfg.train.dropout = to_double(key, v); }},
      {"seed", [&](const std::string& v) { cfg.train.seed = to_count(key, v); }},
      {"lambda1_gamma", [&](const std::string& v) { cfg.train.lambda1_gamma = to_double(key, v); }},
      {"lambda1_max", [&](const std::string& v) { cfg.train.lambda1_max = to_double(key, v); }},
      {"easy_network", [&](const std::string& v) { cfg.train.easy_network = to_bool(key, v); }},
      {"protocol", [&](const std::string& v) { cfg.protocol = v; }},
      {"zscore", [&](const std::string& v) { cfg.zscore = to_bool(key, v); }},
      {"use_trial_ids", [&](const std::string& v) { cfg.use_trial_ids = to_bool(key, v); }},
      {"merge_4to3_sources", [&](const std::string& v) { cfg.merge_4to3_sources = to_bool(key, v); }},
      {"merge_4to3_targets", [&](const std::string& v) { cfg.merge_4to3_targets = to_bool(key, v); }},
      {"synth.n_subjects", [&](const std::string& v) { cfg.synth.n_subjects = to_count(key, v); }},
      {"synth.n_classes", [&](const std::string& v) { cfg.synth.n_classes = to_count(key, v); }},
      {"synth.clusters_per_class", [&](const std::string& v) { cfg.synth.clusters_per_class = to_count(key, v); }},
      {"synth.samples_per_cluster", [&](const std::string& v) { cfg.synth.samples_per_cluster = to_count(key, v); }},
      {"synth.feature_dim", [&](const std::string& v) { cfg.synth.feature_dim = to_count(key, v); }},
      {"synth.cluster_spread", [&](const std::string& v) { cfg.synth.cluster_spread = to_double(key, v); }},
      {"synth.class_separation", [&](const std::string& v) { cfg.synth.class_separation = to_double(key, v); }},
      {"synth.shift_scale", [&](const std::string& v) { cfg.synth.shift_scale = to_double(key, v); }},
      {"synth.label_noise", [&](const std::string& v) { cfg.synth.label_noise = to_double_list(key, v); }},
      {"synth.seed", [&](const std::string& v) { cfg.synth.seed = to_count(key, v); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second(trim(value));
}

/// Applies a `key=value` override.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like key=value: '" + assignment + "'");
  apply_setting(cfg, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Reads a flat `key = value` file; `#` starts a comment.
inline void apply_config_stream(RunConfig& cfg, std::istream& in, const std::string& name = "<config>") {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(name + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  apply_config_stream(cfg, in, path.string());
}

inline void validate(const RunConfig& cfg) {
  cfg.train.validate();
  cfg.synth.validate();
  if (cfg.protocol != "loso" && cfg.protocol != "cross-dataset" && cfg.protocol != "single-fold") {
    throw ConfigError("protocol must be loso, cross-dataset or single-fold");
  }
}

// ---------------------------------------------------------------------------
// Commands

/// Writes subject_XX.csv files from the synthetic generator; returns their paths.
inline std::vector<fs::path> cmd_synth(const RunConfig& cfg, const fs::path& out_dir) {
  validate(cfg);
  fs::create_directories(out_dir);
  std::vector<fs::path> paths;
  const auto subjects = synth_generate(cfg.synth);
  for (const auto& s : subjects) {
    char name[32];
    std::snprintf(name, sizeof name, "subject_%02d.csv", s.domain_id);
    paths.push_back(out_dir / name);
    save_subject(paths.back(), s);
  }
  return paths;
}

/// Loads subject files as consecutive domains, applying the configured preprocessing.
inline std::vector<SubjectDataset> load_subjects(const std::vector<std::string>& files, int first_domain,
                                                 bool zscore, bool merge_4to3) {
  std::vector<SubjectDataset> out;
  std::optional<std::size_t> dim;
  for (std::size_t i = 0; i < files.size(); ++i) {
    SubjectDataset ds = load_subject(files[i], first_domain + static_cast<int>(i), dim);
    dim = ds.dim();
    if (merge_4to3) ds = merge_labels_4to3(std::move(ds));
    if (zscore) ds = zscore_per_domain(std::move(ds));
    out.push_back(std::move(ds));
  }
  return out;
}

/// Grid of the DBSCAN tuner as CSV: eps,min_samples,n_clusters,noise_fraction,score.
inline TuneResult cmd_tune_dbscan(const RunConfig& cfg, const std::string& data_file, std::ostream& out) {
  validate(cfg);
  const auto subjects = load_subjects({data_file}, 0, cfg.zscore, false);
  const auto& ds = subjects.front();
  std::optional<std::span<const int>> trials;
  if (cfg.use_trial_ids) trials = std::span<const int>(ds.trial_ids);
  TuneResult r = tune_dbscan(ds.features, trials);
  out << "eps,min_samples,n_clusters,noise_fraction,score\n";
  for (const auto& rec : r.grid) {
    out << hedn::detail::format_double(rec.eps) << ',' << rec.min_samples << ',' << rec.n_clusters << ','
        << hedn::detail::format_double(rec.noise_fraction) << ','
        << (rec.accepted ? hedn::detail::format_double(rec.score) : std::string("nan")) << '\n';
  }
  return r;
}

/// Evaluates a trained model on a labeled target; inference latency is total / n.
inline EvalReport evaluate(const HednModel& model, const MemoryBanks& banks, const SubjectDataset& target,
                           bool prototype_vote = true) {
  if (target.dim() != model.input_dim) {
    throw DataError("target has " + std::to_string(target.dim()) + " features, model expects " +
                    std::to_string(model.input_dim));
  }
  if (!target.labeled()) throw DataError("evaluation needs a labeled target");
  EvalReport rep;
  rep.samples = target.size();
  const auto start = std::chrono::steady_clock::now();
  const auto pred = prototype_vote ? predict(banks, model, target.features)
                                   : predict_classifier(model, target.features);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rep.confusion = confusion_matrix(target.labels, pred, model.classes);
  rep.accuracy = accuracy(rep.confusion);
  rep.inference_ms_per_sample = rep.samples ? 1000.0 * secs / static_cast<double>(rep.samples) : 0.0;
  return rep;
}

struct TrainOutputs {
  TrainResult result;
  std::optional<EvalReport> report;  // when the target carries labels
};

/// Clusters, trains and writes `model.hedn`, `train_log.csv` and, for a
/// labeled target, `summary.csv` into `out_dir`.
inline TrainOutputs cmd_train(const RunConfig& cfg, const std::vector<std::string>& source_files,
                              const std::string& target_file, const fs::path& out_dir) {
  validate(cfg);
  if (source_files.size() < 2) throw ConfigError("train needs at least 2 source files");
  auto sources = load_subjects(source_files, 0, cfg.zscore, cfg.merge_4to3_sources);
  auto target = load_subjects({target_file}, static_cast<int>(sources.size()), cfg.zscore,
                              cfg.merge_4to3_targets).front();
  if (target.dim() != sources.front().dim()) throw DataError("target dimension differs from sources");

  TrainOutputs out;
  Trainer trainer(sources, target, cfg.train, cluster_fold(sources, target, cfg.use_trial_ids));
  const auto start = std::chrono::steady_clock::now();
  out.result.logs = trainer.run();
  out.result.adaptation_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.result.model = trainer.model();
  out.result.banks = trainer.banks();
  out.result.clusters = trainer.clusters();

  fs::create_directories(out_dir);
  save_checkpoint(out_dir / "model.hedn", out.result.model, out.result.banks);
  std::ofstream log(out_dir / "train_log.csv", std::ios::binary);
  write_log_header(log);
  for (const auto& l : out.result.logs) write_log_row(log, l);
  if (target.labeled()) {
    EvalReport rep = evaluate(out.result.model, out.result.banks, target, cfg.train.easy_network);
    rep.name = fs::path(target_file).stem().string();
    rep.adaptation_seconds = out.result.adaptation_seconds;
    std::ofstream summary(out_dir / "summary.csv", std::ios::binary);
    write_report_header(summary);
    write_report_row(summary, rep);
    out.report = rep;
  }
  return out;
}

/// Prototype-vote evaluation of a checkpoint on a labeled target file.
inline EvalReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const std::string& target_file,
                           std::ostream& out) {
  validate(cfg);
  const Checkpoint ck = load_checkpoint(checkpoint);
  const auto target = load_subjects({target_file}, 0, cfg.zscore, cfg.merge_4to3_targets).front();
  EvalReport rep = evaluate(ck.model, ck.banks, target);
  rep.name = fs::path(target_file).stem().string();
  write_report_header(out);
  write_report_row(out, rep);
  return rep;
}

struct LosoSummary {
  std::vector<EvalReport> folds;
  MeanStd accuracy;
  std::vector<std::string> failures;  // "<fold>: <message>" for folds that threw
};

/**
 * Runs every fold of the selected protocol and writes one row per fold plus
 * an aggregate row. loso: each of `subject_files` is the target once with
 * the rest as sources. cross-dataset: `source_files` are the sources and
 * each of `subject_files` is a target. single-fold: the last subject is the
 * target. A failing fold is reported and skipped.
 */
inline LosoSummary cmd_loso(const RunConfig& cfg, const std::vector<std::string>& subject_files,
                            const std::vector<std::string>& source_files, std::ostream& out) {
  validate(cfg);
  LosoSummary summary;
  std::vector<std::pair<std::vector<std::string>, std::string>> plan;
  if (cfg.protocol == "cross-dataset") {
    if (source_files.size() < 2 || subject_files.empty()) {
      throw ConfigError("cross-dataset needs at least 2 source files and 1 target file");
    }
    for (const auto& t : subject_files) plan.emplace_back(source_files, t);
  } else if (cfg.protocol == "single-fold") {
    if (subject_files.size() < 3) throw ConfigError("single-fold needs at least 3 subject files");
    plan.emplace_back(std::vector<std::string>(subject_files.begin(), subject_files.end() - 1),
                      subject_files.back());
  } else {
    if (subject_files.size() < 3) throw ConfigError("loso needs at least 3 subject files");
    for (std::size_t t = 0; t < subject_files.size(); ++t) {
      std::vector<std::string> src;
      for (std::size_t s = 0; s < subject_files.size(); ++s)
        if (s != t) src.push_back(subject_files[s]);
      plan.emplace_back(std::move(src), subject_files[t]);
    }
  }

  write_report_header(out);
  std::vector<double> accs;
  for (const auto& [src_files, target_file] : plan) {
    const std::string name = fs::path(target_file).stem().string();
    try {
      auto sources = load_subjects(src_files, 0, cfg.zscore, cfg.merge_4to3_sources);
      auto target = load_subjects({target_file}, static_cast<int>(sources.size()), cfg.zscore,
                                  cfg.merge_4to3_targets).front();
      Trainer trainer(sources, target, cfg.train, cluster_fold(sources, target, cfg.use_trial_ids));
      const auto start = std::chrono::steady_clock::now();
      trainer.run();
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      EvalReport rep = evaluate(trainer.model(), trainer.banks(), target, cfg.train.easy_network);
      rep.name = name;
      rep.adaptation_seconds = secs;
      write_report_row(out, rep);
      accs.push_back(rep.accuracy);
      summary.folds.push_back(std::move(rep));
    } catch (const Error& e) {
      summary.failures.push_back(name + ": " + e.what());
    }
  }
  summary.accuracy = mean_std(accs);
  write_aggregate_row(out, summary.accuracy, summary.folds.size());
  return summary;
}

/// Eval-mode embeddings z = g(f(x)) as CSV: domain_id,cluster_id,label,z0..z63.
/// cluster_id is the nearest target prototype.
inline std::size_t cmd_export_embeddings(const RunConfig& cfg, const fs::path& checkpoint,
                                         const std::vector<std::string>& files, std::ostream& out) {
  validate(cfg);
  const Checkpoint ck = load_checkpoint(checkpoint);
  out << "domain_id,cluster_id,label";
  for (std::size_t k = 0; k < kEmbeddingWidth; ++k) out << ",z" << k;
  out << '\n';
  std::size_t rows = 0;
  const auto subjects = load_subjects(files, 0, cfg.zscore, false);
  for (const auto& ds : subjects) {
    const Matrix z = embed(ck.model, ds.features);
    for (std::size_t i = 0; i < z.rows(); ++i) {
      out << ds.domain_id << ',' << match_prototype(z.row(i), ck.banks.target).cluster_id << ','
          << ds.labels[i];
      for (double v : z.row(i)) out << ',' << hedn::detail::format_double(v);
      out << '\n';
      ++rows;
    }
  }
  return rows;
}

}  // namespace hedn::cli

#endif  // HEDN_CLI_HPP
