// cgfedrec: command-line front end for the federated recommendation simulator.
//
//   cgfedrec stats --data u.data
//   cgfedrec run --config exp.json [--set key=value ...]
//   cgfedrec grid | ablation | ldp-sweep --config exp.json
//   cgfedrec export-embeddings --input global_embeddings.bin --out table.csv

#include "cgfedrec/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>

using namespace cgfedrec;

namespace {

struct SpecArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string data;
  std::string format;
  std::string out;
};

void add_spec_options(CLI::App* cmd, SpecArgs& args) {
  cmd->add_option("-c,--config", args.config, "JSON experiment config");
  cmd->add_option("-s,--set", args.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("-d,--data", args.data, "interaction log (overrides dataset_path)");
  cmd->add_option("-f,--format", args.format, "tsv | csv | planted (overrides dataset_format)");
  cmd->add_option("-o,--out", args.out, "output directory (overrides output_dir)");
}

ExperimentSpec resolve_spec(const SpecArgs& args) {
  ExperimentSpec spec = args.config.empty() ? ExperimentSpec{} : load_spec(args.config);
  if (!args.data.empty()) apply_override(spec, "dataset_path=\"" + args.data + "\"");
  if (!args.format.empty()) apply_override(spec, "dataset_format=\"" + args.format + "\"");
  if (!args.out.empty()) apply_override(spec, "output_dir=\"" + args.out + "\"");
  for (const auto& o : args.overrides) apply_override(spec, o);
  return spec;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster-guided federated recommendation simulator"};
  app.require_subcommand(1);

  // stats
  std::string stats_data;
  std::string stats_format = "tsv";
  std::size_t stats_min = 5;
  auto* stats = app.add_subcommand("stats", "dataset statistics as JSON");
  stats->add_option("-d,--data", stats_data, "interaction log")->required();
  stats->add_option("-f,--format", stats_format, "tsv | csv");
  stats->add_option("--min-interactions", stats_min, "keep users with more than this many interactions");

  SpecArgs run_args, grid_args, ablation_args, ldp_args;
  std::string resume, checkpoint;
  auto* run = app.add_subcommand("run", "train and evaluate one configuration");
  add_spec_options(run, run_args);
  run->add_option("--resume", resume, "continue from a checkpoint");
  run->add_option("--checkpoint", checkpoint, "write a checkpoint after the last round");
  auto* grid = app.add_subcommand("grid", "hyperparameter grid over lambda, tau and k");
  add_spec_options(grid, grid_args);
  auto* ablation = app.add_subcommand("ablation", "compare the four broadcast strategies");
  add_spec_options(ablation, ablation_args);
  auto* ldp = app.add_subcommand("ldp-sweep", "vary the upload noise intensity");
  add_spec_options(ldp, ldp_args);

  std::string export_in, export_out;
  auto* exporter = app.add_subcommand("export-embeddings", "convert a binary embedding table to CSV");
  exporter->add_option("-i,--input", export_in, "binary table (e.g. global_embeddings.bin)")->required();
  exporter->add_option("-o,--out", export_out, "CSV destination (stdout when omitted)");

  auto* print_config = app.add_subcommand("config", "print the resolved configuration");
  SpecArgs config_args;
  add_spec_options(print_config, config_args);

  CLI11_PARSE(app, argc, argv);

  try {
    const std::size_t workers = default_workers();
    const auto t0 = std::chrono::steady_clock::now();

    if (*stats) {
      const auto log = filter_min_interactions(ingest(stats_data, parse_log_format(stats_format)), stats_min);
      const auto ds = split_leave_one_out(log, 0);
      std::cout << stats_to_json(compute_stats(ds)) << '\n';
      std::cerr << std::fixed << std::setprecision(2) << "sparsity " << compute_stats(ds).sparsity_pct() << "%  ("
                << seconds_since(t0) << " s)\n";
    } else if (*run) {
      const auto spec = resolve_spec(run_args);
      RunOptions opts{resume, checkpoint};
      const auto r = run_single(spec, workers, true, opts);
      std::cout << r.summary.dump(2) << '\n';
      std::cerr << "wrote " << spec.output_dir << " (" << r.rounds_run << " rounds, " << seconds_since(t0) << " s)\n";
    } else if (*grid) {
      const auto spec = resolve_spec(grid_args);
      const auto rows = run_grid(spec, workers);
      std::cerr << "wrote " << spec.output_dir << "/grid.csv (" << rows.size() << " cells)\n";
    } else if (*ablation) {
      const auto spec = resolve_spec(ablation_args);
      const auto rows = run_ablation_suite(spec, workers);
      std::cout << std::left << std::setw(14) << "variant" << std::setw(10) << ("HR@" + std::to_string(spec.eval_k))
                << std::setw(10) << ("NDCG@" + std::to_string(spec.eval_k)) << "download_bytes\n";
      for (const auto& row : rows) {
        std::cout << std::setw(14) << row.variant << std::setw(10) << std::setprecision(4) << std::fixed << row.hr
                  << std::setw(10) << row.ndcg << row.download_bytes << '\n';
      }
    } else if (*ldp) {
      const auto spec = resolve_spec(ldp_args);
      const auto rows = run_ldp_sweep(spec, workers);
      std::cout << "delta,hr@" << spec.eval_k << ",ndcg@" << spec.eval_k << '\n';
      for (const auto& row : rows) std::cout << row.delta << ',' << row.hr << ',' << row.ndcg << '\n';
    } else if (*exporter) {
      const auto table = load_table(export_in);
      if (export_out.empty()) {
        write_table_csv(std::cout, table);
      } else {
        std::ofstream out(export_out);
        if (!out) throw Error("cannot write '" + export_out + "'");
        write_table_csv(out, table);
      }
    } else if (*print_config) {
      std::cout << spec_to_json(resolve_spec(config_args)).dump(2) << '\n';
    }
  } catch (const ParameterError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
