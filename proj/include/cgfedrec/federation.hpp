#pragma once

#include "cgfedrec/comms_ledger.hpp"
#include "cgfedrec/common.hpp"
#include "cgfedrec/dataset.hpp"
#include "cgfedrec/local_model.hpp"
#include "cgfedrec/structure.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cgfedrec {

// What the server sends to participants at the start of each round.
enum class BroadcastMode {
  labels_only,                   // CGFedRec
  embeddings_only,               // -E
  embeddings_and_labels,         // -EC
  embeddings_and_random_labels,  // -ERC
};

BroadcastMode parse_broadcast_mode(std::string_view name);
std::string_view to_string(BroadcastMode mode);
bool sends_embeddings(BroadcastMode mode);
bool sends_labels(BroadcastMode mode);

enum class NoiseMechanism { laplace, gaussian };
NoiseMechanism parse_noise_mechanism(std::string_view name);
std::string_view to_string(NoiseMechanism mech);

AggregateMode parse_aggregate_mode(std::string_view name);
std::string_view to_string(AggregateMode mode);

struct FederationConfig {
  std::size_t rounds = 100;
  double participation = 1.0;
  BroadcastMode mode = BroadcastMode::labels_only;
  std::size_t clusters = 10;
  std::size_t dim = 32;
  LearningRates rates;
  ContrastiveConfig contrastive;
  std::size_t neg_ratio = 4;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 256;
  double ldp_delta = 0.0;
  NoiseMechanism ldp_mechanism = NoiseMechanism::laplace;
  std::uint64_t seed = 0;
  AggregateMode aggregate = AggregateMode::coverage_weighted;
  bool bootstrap_labels = true;      // cluster the initial table so round 1 has labels
  bool redraw_random_labels = true;  // -ERC: new random labels every round
  KMeansOptions kmeans;
  std::size_t contrastive_max_items = 8192;  // larger catalogues use a per-round subsample
  std::size_t float_bytes = 4;               // s_f
  std::size_t label_bytes = 1;               // s_i; promoted to 2 when clusters > 256
  double init_scale = 0.01;

  friend bool operator==(const FederationConfig&, const FederationConfig&) = default;
};

// Throws ParameterError naming the offending field.
void validate(const FederationConfig& cfg);

struct ClientState {
  UserId client_id = 0;
  ClientModel model;
};

struct RoundReport {
  std::size_t round = 0;  // 1-based
  std::vector<UserId> participants;
  double mean_rec_loss = 0.0;
  double mean_cg_loss = 0.0;
  std::uint64_t upload_bytes = 0;
  std::uint64_t download_bytes = 0;
  std::optional<std::uint64_t> cluster_labels_hash;  // labels broadcast this round
  double kmeans_inertia = 0.0;                       // server clustering after aggregation

  friend bool operator==(const RoundReport&, const RoundReport&) = default;
};

std::string report_to_json(const RoundReport& report);

// ceil(gamma * n) distinct clients, sorted ascending.
std::vector<UserId> select_participants(std::size_t n_clients, double gamma, std::size_t round, std::uint64_t seed);

// Element-wise zero-mean noise of scale delta (Laplace scale b = delta, or
// Gaussian sigma = delta). delta == 0 returns the input unchanged.
EmbeddingTable apply_ldp(const EmbeddingTable& upload, double delta, std::uint64_t seed,
                         NoiseMechanism mech = NoiseMechanism::laplace);

struct ClientRoundResult {
  ClientUpload upload;
  double rec_loss = 0.0;  // summed BCE over the last local epoch
  double cg_loss = 0.0;   // contrastive loss at the start of the last epoch (0 when not used)
};

// One client's local update. A present global table overwrites the client's
// table before training; present labels add lambda * L_cg to the objective.
ClientRoundResult client_round(ClientState& state, const InteractionDataset& ds,
                               const std::vector<std::uint32_t>* labels, const EmbeddingTable* global,
                               const FederationConfig& cfg, std::size_t round);

// Number of worker threads from CGFEDREC_WORKERS, else hardware concurrency.
std::size_t default_workers();

// Round-by-round simulator state. All randomness is derived from
// (cfg.seed, round, client), so a run is reproducible regardless of the
// worker count and can be checkpointed between rounds.
class Simulator {
 public:
  Simulator(const InteractionDataset& ds, FederationConfig cfg, std::size_t workers = 1);

  // Runs one round; returns its report.
  const RoundReport& step();
  bool done() const { return next_round_ > cfg_.rounds; }
  std::size_t next_round() const { return next_round_; }

  const FederationConfig& config() const { return cfg_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  std::vector<ClientModel> models() const;
  const EmbeddingTable& global_table() const { return global_; }
  const std::optional<ClusterAssignment>& server_clusters() const { return clusters_; }
  const std::vector<RoundReport>& reports() const { return reports_; }
  const CommLedger& ledger() const { return ledger_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  static Simulator load_checkpoint(const std::filesystem::path& path, const InteractionDataset& ds,
                                   FederationConfig cfg, std::size_t workers = 1);

 private:
  const InteractionDataset* ds_;
  FederationConfig cfg_;
  std::size_t workers_;
  std::vector<ClientState> clients_;
  EmbeddingTable global_;
  std::optional<ClusterAssignment> clusters_;  // most recent server clustering
  std::vector<std::uint32_t> fixed_random_;   // -ERC without redraw
  std::vector<RoundReport> reports_;
  CommLedger ledger_;
  std::size_t next_round_ = 1;
};

// Called after every round; return false to stop early.
using RoundObserver = std::function<bool(const Simulator&, const RoundReport&)>;

struct FederationResult {
  std::vector<ClientState> clients;
  std::vector<RoundReport> reports;
  CommLedger ledger;
  EmbeddingTable global;
  std::optional<ClusterAssignment> clusters;
};

FederationResult run_federation(const InteractionDataset& ds, const FederationConfig& cfg, std::size_t workers = 1,
                                const RoundObserver& observer = {});

}  // namespace cgfedrec
