#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hedn/cli.hpp"

namespace {

using namespace hedn;
using namespace hedn::cli;

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hedn: reliability-aware multi-source domain adaptation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_file, "key = value configuration file");
  app.add_option("-s,--set", overrides, "override a configuration key (key=value)");

  std::string out_dir = "synth_data";
  auto* synth = app.add_subcommand("synth", "write synthetic subject CSV files");
  synth->add_option("-o,--out", out_dir, "output directory");

  std::string data_file, report_file;
  auto* tune = app.add_subcommand("tune-dbscan", "grid-search DBSCAN parameters on one subject");
  tune->add_option("data", data_file, "subject CSV")->required();
  tune->add_option("-o,--out", report_file, "grid CSV (default: stdout)");

  std::vector<std::string> sources;
  std::string target, run_dir = "run";
  auto* train = app.add_subcommand("train", "cluster, train and checkpoint one fold");
  train->add_option("--sources", sources, "source subject CSVs")->required();
  train->add_option("--target", target, "target subject CSV")->required();
  train->add_option("-o,--out", run_dir, "output directory");

  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a labeled target");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--target", target, "target subject CSV")->required();
  eval->add_option("-o,--out", report_file, "report CSV (default: stdout)");

  std::vector<std::string> subjects;
  auto* loso = app.add_subcommand("loso", "run every fold of the configured protocol");
  loso->add_option("subjects", subjects, "subject CSVs (targets for cross-dataset)")->required();
  loso->add_option("--sources", sources, "fixed source CSVs for cross-dataset");
  loso->add_option("-o,--out", report_file, "report CSV (default: stdout)");

  std::vector<std::string> files;
  auto* exp = app.add_subcommand("export-embeddings", "write eval-mode embeddings as CSV");
  exp->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  exp->add_option("files", files, "subject CSVs")->required();
  exp->add_option("-o,--out", report_file, "embedding CSV (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  auto with_output = [&](auto&& fn) {
    if (report_file.empty()) return fn(std::cout);
    auto out = open_output(report_file);
    return fn(out);
  };

  try {
    RunConfig cfg;
    if (!config_file.empty()) apply_config_file(cfg, config_file);
    for (const auto& o : overrides) apply_override(cfg, o);
    validate(cfg);

    if (*synth) {
      for (const auto& p : cmd_synth(cfg, out_dir)) std::cout << p.string() << '\n';
    } else if (*tune) {
      const TuneResult r = with_output([&](std::ostream& o) { return cmd_tune_dbscan(cfg, data_file, o); });
      std::cerr << "selected eps=" << r.params.eps << " min_samples=" << r.params.min_samples
                << " clusters=" << r.assignment.n_clusters << (r.fallback ? " (fallback)" : "") << '\n';
    } else if (*train) {
      const TrainOutputs t = cmd_train(cfg, sources, target, run_dir);
      std::cout << "iterations " << t.result.logs.size() << ", adaptation " << t.result.adaptation_seconds
                << " s\n";
      if (t.report) std::cout << "target accuracy " << t.report->accuracy << '\n';
    } else if (*eval) {
      const EvalReport r = with_output([&](std::ostream& o) { return cmd_eval(cfg, checkpoint, target, o); });
      std::cerr << "accuracy " << r.accuracy << ", " << r.inference_ms_per_sample << " ms/sample\n";
    } else if (*loso) {
      const LosoSummary s = with_output([&](std::ostream& o) { return cmd_loso(cfg, subjects, sources, o); });
      for (const auto& f : s.failures) std::cerr << "fold failed: " << f << '\n';
      std::cerr << "accuracy " << s.accuracy.mean << " +/- " << s.accuracy.stddev << " over " << s.folds.size()
                << " folds\n";
      if (s.folds.empty()) return kDataFailure;
    } else if (*exp) {
      const auto rows =
          with_output([&](std::ostream& o) { return cmd_export_embeddings(cfg, checkpoint, files, o); });
      std::cerr << rows << " rows\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataFailure;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataFailure;
  }
  return kOk;
}
