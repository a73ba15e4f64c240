#pragma once

#include "cgfedrec/dataset.hpp"
#include "cgfedrec/evaluation.hpp"
#include "cgfedrec/federation.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cgfedrec {

// A full experiment description. Serialized as a flat JSON object whose
// keys mirror the fields (see spec_to_json for the key names).
struct ExperimentSpec {
  std::string dataset_path;
  std::string dataset_format = "tsv";  // tsv | csv | planted
  PlantedConfig planted;               // used when dataset_format == planted; seed follows federation.seed
  std::size_t min_interactions = 5;
  std::size_t eval_negatives = 99;
  std::size_t eval_k = 5;
  bool full_ranking = false;
  std::size_t early_stop_patience = 20;  // 0 disables early stopping
  FederationConfig federation;

  std::vector<double> grid_lambda;
  std::vector<double> grid_tau;
  std::vector<std::size_t> grid_k;
  std::vector<double> ldp_deltas = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};

  std::string output_dir = "out";

  friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

nlohmann::ordered_json spec_to_json(const ExperimentSpec& spec);
// Keys absent from j keep their defaults; unknown keys are rejected.
ExperimentSpec spec_from_json(const nlohmann::json& j);
ExperimentSpec load_spec(const std::filesystem::path& path);
// "key=value"; the value is read as JSON when it parses, else as a string.
void apply_override(ExperimentSpec& spec, std::string_view assignment);

struct PreparedData {
  InteractionLog log;
  InteractionDataset ds;
  std::optional<PlantedCorpus> planted;
  std::vector<std::uint32_t> item_group;  // planted group per dense item of ds (planted only)
};

PreparedData prepare_data(const ExperimentSpec& spec);

struct RunResult {
  EvalSummary eval;
  std::vector<RoundReport> reports;
  CommLedger ledger;
  DatasetStats stats;
  std::size_t rounds_run = 0;
  bool stopped_early = false;
  std::optional<ClusterAssignment> clusters;
  EmbeddingTable global;
  nlohmann::ordered_json summary;
};

struct RunOptions {
  std::filesystem::path resume_from;      // checkpoint to continue from
  std::filesystem::path save_checkpoint;  // written after the last round
};

// Trains and evaluates one configuration. When write_outputs is set, the
// output directory receives summary.json, rounds.jsonl, ledger.csv,
// per_user.csv, global_embeddings.bin and global_embeddings.csv.
RunResult run_single(const ExperimentSpec& spec, const PreparedData& data, std::size_t workers,
                     bool write_outputs = true, const RunOptions& opts = {});
RunResult run_single(const ExperimentSpec& spec, std::size_t workers, bool write_outputs = true,
                     const RunOptions& opts = {});

struct GridRow {
  std::size_t cell = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double tau = 0.0;
  std::size_t k = 0;
  double hr = 0.0;
  double ndcg = 0.0;
  std::uint64_t upload_bytes = 0;
  std::uint64_t download_bytes = 0;
  std::size_t rounds_run = 0;
};

// Cartesian product of the grid lists (an empty list keeps the base value);
// cell i runs with seed derive_seed(base_seed, {grid, i}). Writes grid.csv.
std::vector<GridRow> run_grid(const ExperimentSpec& spec, std::size_t workers);

struct AblationRow {
  std::string variant;
  BroadcastMode mode = BroadcastMode::labels_only;
  double lambda = 0.0;
  double hr = 0.0;
  double ndcg = 0.0;
  std::uint64_t upload_bytes = 0;
  std::uint64_t download_bytes = 0;
};

// CGFedRec, -E (lambda = 0), -EC and -ERC under one seed. Writes ablation.csv.
std::vector<AblationRow> run_ablation_suite(const ExperimentSpec& spec, std::size_t workers);

struct LdpRow {
  double delta = 0.0;
  double hr = 0.0;
  double ndcg = 0.0;
};

// One run per entry of spec.ldp_deltas. Writes ldp.csv.
std::vector<LdpRow> run_ldp_sweep(const ExperimentSpec& spec, std::size_t workers);

}  // namespace cgfedrec
