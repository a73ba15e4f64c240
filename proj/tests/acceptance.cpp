// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 2 5 6      run a subset
//
// Exit status is non-zero when any selected criterion fails.

#include "cgfedrec/experiment.hpp"
#include "support.hpp"

#include <json.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

using namespace cgfedrec;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << x;
  return s.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Runs a shell command and returns its stdout.
std::string capture(const std::string& cmd, int& status) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) {
    status = -1;
    return out;
  }
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  status = pclose(pipe);
  return out;
}

// The desk-scale synthetic instance shared by criteria 6 and 7.
ExperimentSpec synthetic_spec(std::uint64_t seed, BroadcastMode mode) {
  ExperimentSpec s;
  s.dataset_format = "planted";
  s.planted = {40, 200, 4, 45, 0};
  s.early_stop_patience = 0;
  s.federation.rounds = 30;
  s.federation.dim = 16;
  s.federation.clusters = 4;
  s.federation.mode = mode;
  s.federation.seed = seed;
  if (mode == BroadcastMode::embeddings_only) s.federation.contrastive.lambda = 0.0;
  return s;
}

// ---------------------------------------------------------------------------

Outcome dataset_fidelity() {
  if (!testing::have_ml100k()) return {false, "MovieLens-100K missing at " + testing::ml100k_path().string()};
  const auto t0 = Clock::now();
  int status = 0;
  const auto out = capture(std::string(CGFEDREC_CLI_PATH) + " stats --data '" + testing::ml100k_path().string() +
                               "' 2>/dev/null",
                           status);
  const double secs = seconds_since(t0);
  if (status != 0) return {false, "stats exited with status " + std::to_string(status)};
  const auto j = nlohmann::json::parse(out);
  const double pct = j["sparsity_pct"];
  const bool ok = j["users"] == 943 && j["items"] == 1682 && j["interactions"] == 100000 &&
                  std::abs(pct - 93.70) <= 0.005 && secs < 5.0;
  return {ok, "users=" + j["users"].dump() + " items=" + j["items"].dump() + " interactions=" +
                  j["interactions"].dump() + " sparsity=" + fmt(pct, 6) + "% time=" + fmt(secs, 3) + "s"};
}

Outcome communication_exactness() {
  // 10 clients, 10 rounds, d=32, s_f=4, s_i=1
  PlantedConfig p{10, 120, 4, 12, 3};
  auto ds = split_leave_one_out(make_planted_corpus(p).log, 1);
  FederationConfig cfg;
  cfg.rounds = 10;
  cfg.dim = 32;
  cfg.clusters = 4;
  cfg.participation = 0.7;
  cfg.seed = 8;

  const auto t0 = Clock::now();
  const auto labels = run_federation(ds, cfg);
  const double secs = seconds_since(t0);
  cfg.mode = BroadcastMode::embeddings_only;
  const auto embeds = run_federation(ds, cfg);

  bool ok = secs < 1.0;
  const auto& lr = labels.ledger.per_round();
  const auto& er = embeds.ledger.per_round();
  for (std::size_t r = 0; r < lr.size(); ++r) {
    ok &= lr[r].download_bytes == ours_download_bytes(lr[r].participants, ds.n_items, 1);
    ok &= er[r].download_bytes == baseline_download_bytes(er[r].participants, ds.n_items, 32, 4);
    // labels / embeddings == s_i / (d s_f), as an exact integer identity
    ok &= lr[r].download_bytes * 32 * 4 == er[r].download_bytes * 1;
  }
  const double rate = reduction_rate(32, 4, 1);
  ok &= rate == 1.0 - 1.0 / 128.0;
  const double measured = 1.0 - static_cast<double>(labels.ledger.cumulative_down()) /
                                    static_cast<double>(embeds.ledger.cumulative_down());
  ok &= measured == rate;
  return {ok, "label bytes=" + std::to_string(labels.ledger.cumulative_down()) + " embedding bytes=" +
                  std::to_string(embeds.ledger.cumulative_down()) + " reduction=" + fmt(measured, 8) +
                  " toy run=" + fmt(secs, 3) + "s"};
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst_rec = 0.0, worst_cg = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(derive_seed(2024, {seed}));
    const auto m = static_cast<Eigen::Index>(2 + rng() % 7);  // 2..8
    const auto d = static_cast<Eigen::Index>(1 + rng() % 4);  // 1..4
    EmbeddingTable table(testing::uniform_matrix(m, d, rng));
    ScoreHead head{testing::uniform_matrix(d, 1, rng).col(0)};
    TrainBatch batch;
    for (int k = 0; k < 6; ++k) {
      batch.items.push_back(static_cast<ItemId>(rng() % static_cast<std::uint64_t>(m)));
      batch.labels.push_back(static_cast<std::uint8_t>(rng() % 2));
    }

    const auto g = bce_gradients(head, table, batch);
    Matrix dense_e = Matrix::Zero(m, d);
    for (std::size_t k = 0; k < g.grad_e.rows.size(); ++k)
      dense_e.row(g.grad_e.rows[k]) = g.grad_e.values.row(static_cast<Eigen::Index>(k));
    const auto num_e = testing::numeric_gradient(table.values(), [&] { return bce_loss(head, table, batch); });
    Matrix w = head.w;
    const auto num_w = testing::numeric_gradient(w, [&] { return bce_loss(ScoreHead{w.col(0)}, table, batch); });
    worst_rec = std::max({worst_rec, testing::max_rel_error(dense_e, num_e), testing::max_rel_error(g.grad_w, num_w)});

    std::vector<std::uint32_t> labels(static_cast<std::size_t>(m));
    for (auto& l : labels) l = static_cast<std::uint32_t>(rng() % 3);
    const PairMask mask(labels);
    const ContrastiveConfig cc{0.5, 0.07, 1.0, true};
    const auto gc = contrastive_gradients(table, mask, cc);
    const auto num_c = testing::numeric_gradient(table.values(), [&] { return contrastive_loss(table, mask, cc); });
    worst_cg = std::max(worst_cg, testing::max_rel_error(gc.values, num_c));
  }
  const double secs = seconds_since(t0);
  return {worst_rec < 1e-4 && worst_cg < 1e-4 && secs < 10.0,
          "max rel err rec=" + fmt(worst_rec, 3) + " cg=" + fmt(worst_cg, 3) + " time=" + fmt(secs, 3) + "s"};
}

Outcome contrastive_oracle() {
  // reference value from tests/oracles/oracles.py
  constexpr double kOracle = 0.208841125;
  const EmbeddingTable table(Matrix{{1, 0}, {1, 0}, {0, 1}});
  const double loss = contrastive_loss(table, PairMask(std::vector<std::uint32_t>{0, 0, 1}), {1.0, 1.0, 1.0, true});
  return {std::abs(loss - kOracle) <= 1e-6, "loss=" + fmt(loss, 10) + " oracle=" + fmt(kOracle, 10)};
}

Outcome kmeans_properties() {
  std::size_t violations = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    const auto m = static_cast<Eigen::Index>(10 + rng() % 90);
    const auto d = static_cast<Eigen::Index>(1 + rng() % 8);
    const auto a = kmeans(EmbeddingTable(testing::uniform_matrix(m, d, rng)), 2 + rng() % 8, seed);
    for (std::size_t i = 1; i < a.inertia_trace.size(); ++i) violations += a.inertia_trace[i] > a.inertia_trace[i - 1];
  }

  const Matrix pts{{0, 0}, {0.1, 0}, {5, 5}, {5.1, 5}};
  // brute force over the 2^4 labelings with both clusters non-empty
  double best = std::numeric_limits<double>::infinity();
  unsigned best_mask = 0;
  for (unsigned mask = 1; mask < 15; ++mask) {
    double inertia = 0.0;
    for (unsigned c = 0; c < 2; ++c) {
      Eigen::RowVector2d mean = Eigen::RowVector2d::Zero();
      int n = 0;
      for (int i = 0; i < 4; ++i)
        if (((mask >> i) & 1u) == c) mean += pts.row(i), ++n;
      mean /= n;
      for (int i = 0; i < 4; ++i)
        if (((mask >> i) & 1u) == c) inertia += (pts.row(i) - mean).squaredNorm();
    }
    if (inertia < best - 1e-12) best = inertia, best_mask = mask;
  }
  const auto a = kmeans(EmbeddingTable(pts), 2, 0);
  bool same = true;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      same &= (a.labels[i] == a.labels[j]) == ((((best_mask >> i) ^ (best_mask >> j)) & 1u) == 0);
  return {violations == 0 && same, "monotonicity violations=" + std::to_string(violations) +
                                       " two-blob optimum recovered=" + (same ? "yes" : "no") +
                                       " inertia=" + fmt(a.inertia) + " brute-force=" + fmt(best)};
}

Outcome structure_recovery() {
  const auto t0 = Clock::now();
  const auto spec = synthetic_spec(0, BroadcastMode::labels_only);
  const auto data = prepare_data(spec);
  const auto r = run_single(spec, data, default_workers(), false);
  const double secs = seconds_since(t0);
  if (!r.clusters) return {false, "no server clustering"};
  const double ari = testing::adjusted_rand_index(r.clusters->labels, data.item_group);
  return {ari >= 0.9 && secs < 60.0, "ARI=" + fmt(ari, 4) + " items=" + std::to_string(data.ds.n_items) +
                                         " time=" + fmt(secs, 3) + "s"};
}

Outcome directional_ablation() {
  const auto t0 = Clock::now();
  double ours = 0.0, baseline = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = synthetic_spec(seed, BroadcastMode::labels_only);
    const auto data = prepare_data(a);
    ours += run_single(a, data, default_workers(), false).eval.hr / 5.0;
    baseline += run_single(synthetic_spec(seed, BroadcastMode::embeddings_only), data, default_workers(), false).eval.hr / 5.0;
  }
  const double synth_secs = seconds_since(t0);
  std::string detail = "synthetic HR@5 labels_only=" + fmt(ours, 4) + " embeddings_only=" + fmt(baseline, 4) +
                       " (" + fmt(synth_secs, 3) + "s)";
  bool ok = ours >= baseline;

  // End-to-end MovieLens-100K ablation report under the time budget.
  if (!testing::have_ml100k()) return {false, detail + "; MovieLens-100K missing"};
  const auto t1 = Clock::now();
  ExperimentSpec ml;
  ml.dataset_path = testing::ml100k_path().string();
  ml.early_stop_patience = 0;
  ml.federation.rounds = CGFEDREC_ML100K_ROUNDS;
  ml.output_dir = (std::filesystem::temp_directory_path() / "cgfedrec_acceptance_ml100k").string();
  std::filesystem::remove_all(ml.output_dir);
  const auto rows = run_ablation_suite(ml, default_workers());
  const double ml_secs = seconds_since(t1);
  std::cout << "      MovieLens-100K, " << ml.federation.rounds << " rounds, d=" << ml.federation.dim
            << ", k=" << ml.federation.clusters << "\n";
  std::cout << "      " << std::left << std::setw(14) << "variant" << std::setw(9) << "HR@5" << std::setw(9) << "NDCG@5"
            << "download bytes\n";
  for (const auto& row : rows) {
    std::cout << "      " << std::setw(14) << row.variant << std::setw(9) << fmt(row.hr, 4) << std::setw(9)
              << fmt(row.ndcg, 4) << row.download_bytes << "\n";
  }
  const bool report = rows.size() == 4 && std::filesystem::exists(std::filesystem::path(ml.output_dir) / "ablation.csv");
  ok &= report && ml_secs <= 1800.0;
  detail += "; MovieLens-100K ablation " + std::string(report ? "written" : "missing") + " in " + fmt(ml_secs, 4) + "s";
  return {ok, detail};
}

// The same loop as the simulator, spelled out without any noise step.
std::vector<EmbeddingTable> noise_free_globals(const InteractionDataset& ds, const FederationConfig& cfg) {
  const std::size_t m = ds.n_items;
  EmbeddingTable global = init_table(m, cfg.dim, cfg.init_scale, derive_seed(cfg.seed, {stream::global_init}));
  std::vector<ClientState> clients;
  for (UserId u = 0; u < ds.n_users; ++u)
    clients.push_back({u, {init_head(cfg.dim, cfg.init_scale, derive_seed(cfg.seed, {stream::client_init, u})), global}});
  auto labels = kmeans(global, cfg.clusters, derive_seed(cfg.seed, {stream::kmeans, 0}), cfg.kmeans).labels;
  std::vector<EmbeddingTable> out;
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    std::vector<ClientUpload> uploads;
    for (UserId u : select_participants(ds.n_users, cfg.participation, round, cfg.seed))
      uploads.push_back(client_round(clients[u], ds, &labels, nullptr, cfg, round).upload);
    global = aggregate(uploads, global, cfg.aggregate);
    labels = kmeans(global, cfg.clusters, derive_seed(cfg.seed, {stream::kmeans, round}), cfg.kmeans).labels;
    out.push_back(global);
  }
  return out;
}

Outcome ldp_identity() {
  PlantedConfig p{20, 80, 4, 10, 6};
  auto ds = split_leave_one_out(make_planted_corpus(p).log, 2);
  FederationConfig cfg;
  cfg.rounds = 5;
  cfg.dim = 8;
  cfg.clusters = 4;
  cfg.participation = 0.6;
  cfg.seed = 21;

  const auto reference = noise_free_globals(ds, cfg);
  bool identical = true;
  Simulator zero(ds, cfg);
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    zero.step();
    identical &= zero.global_table() == reference[r];
  }
  cfg.ldp_delta = 0.1;
  Simulator noisy(ds, cfg);
  while (!noisy.done()) noisy.step();
  const bool differs = !(noisy.global_table() == zero.global_table()) && noisy.global_table().all_finite();
  return {identical && differs, std::string("delta=0 bitwise equal to noise-free loop: ") + (identical ? "yes" : "no") +
                                    "; delta=0.1 completes and differs: " + (differs ? "yes" : "no")};
}

Outcome determinism() {
  const auto base = std::filesystem::temp_directory_path() / "cgfedrec_acceptance_det";
  std::filesystem::remove_all(base);
  auto spec = synthetic_spec(3, BroadcastMode::labels_only);
  spec.federation.rounds = 8;
  spec.federation.participation = 0.5;
  spec.federation.ldp_delta = 0.05;
  spec.early_stop_patience = 3;
  std::vector<std::string> summaries;
  for (auto [name, workers] : {std::pair{"a", 1}, std::pair{"b", 1}, std::pair{"c", 4}}) {
    spec.output_dir = (base / name).string();
    run_single(spec, static_cast<std::size_t>(workers), true);
    summaries.push_back(slurp(base / name / "summary.json"));
  }
  const bool ok = !summaries[0].empty() && summaries[0] == summaries[1] && summaries[0] == summaries[2];
  return {ok, "summary.json identical across reruns and 1 vs 4 workers: " + std::string(ok ? "yes" : "no") + " (" +
                  std::to_string(summaries[0].size()) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"dataset fidelity", dataset_fidelity},
      {"communication exactness", communication_exactness},
      {"gradient correctness", gradient_correctness},
      {"contrastive oracle", contrastive_oracle},
      {"k-means properties", kmeans_properties},
      {"structure recovery", structure_recovery},
      {"directional ablation", directional_ablation},
      {"LDP identity", ldp_identity},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
