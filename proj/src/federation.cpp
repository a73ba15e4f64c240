#include "cgfedrec/federation.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace cgfedrec {

BroadcastMode parse_broadcast_mode(std::string_view name) {
  if (name == "labels_only" || name == "cgfedrec") return BroadcastMode::labels_only;
  if (name == "embeddings_only" || name == "e") return BroadcastMode::embeddings_only;
  if (name == "embeddings_and_labels" || name == "ec") return BroadcastMode::embeddings_and_labels;
  if (name == "embeddings_and_random_labels" || name == "erc") return BroadcastMode::embeddings_and_random_labels;
  throw ParameterError("unknown broadcast mode '" + std::string(name) + "'");
}

std::string_view to_string(BroadcastMode mode) {
  switch (mode) {
    case BroadcastMode::labels_only: return "labels_only";
    case BroadcastMode::embeddings_only: return "embeddings_only";
    case BroadcastMode::embeddings_and_labels: return "embeddings_and_labels";
    case BroadcastMode::embeddings_and_random_labels: return "embeddings_and_random_labels";
  }
  return "?";
}

bool sends_embeddings(BroadcastMode mode) { return mode != BroadcastMode::labels_only; }
bool sends_labels(BroadcastMode mode) { return mode != BroadcastMode::embeddings_only; }

NoiseMechanism parse_noise_mechanism(std::string_view name) {
  if (name == "laplace") return NoiseMechanism::laplace;
  if (name == "gaussian") return NoiseMechanism::gaussian;
  throw ParameterError("unknown noise mechanism '" + std::string(name) + "'");
}

std::string_view to_string(NoiseMechanism mech) {
  return mech == NoiseMechanism::laplace ? "laplace" : "gaussian";
}

AggregateMode parse_aggregate_mode(std::string_view name) {
  if (name == "coverage_weighted") return AggregateMode::coverage_weighted;
  if (name == "plain_mean") return AggregateMode::plain_mean;
  throw ParameterError("unknown aggregate mode '" + std::string(name) + "'");
}

std::string_view to_string(AggregateMode mode) {
  return mode == AggregateMode::coverage_weighted ? "coverage_weighted" : "plain_mean";
}

void validate(const FederationConfig& cfg) {
  auto fail = [](const char* field, const std::string& why) { throw ParameterError(std::string(field) + ": " + why); };
  if (cfg.rounds < 1) fail("rounds", "must be >= 1");
  if (!(cfg.participation > 0.0 && cfg.participation <= 1.0)) fail("participation", "must lie in (0, 1]");
  if (cfg.clusters < 1) fail("clusters", "must be >= 1");
  if (cfg.dim < 1) fail("dim", "must be >= 1");
  if (!(cfg.rates.eta > 0.0) || !std::isfinite(cfg.rates.eta)) fail("eta", "must be positive and finite");
  if (!(cfg.rates.eta_prime > 0.0) || !std::isfinite(cfg.rates.eta_prime)) fail("eta_prime", "must be positive and finite");
  if (!(cfg.contrastive.tau > 0.0) || !std::isfinite(cfg.contrastive.tau)) fail("tau", "must be positive and finite");
  if (!(cfg.contrastive.tau_base > 0.0) || !std::isfinite(cfg.contrastive.tau_base)) fail("tau_base", "must be positive and finite");
  if (!(cfg.contrastive.lambda >= 0.0) || !std::isfinite(cfg.contrastive.lambda)) fail("lambda", "must be >= 0");
  if (cfg.neg_ratio < 1) fail("neg_ratio", "must be >= 1");
  if (cfg.batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(cfg.ldp_delta >= 0.0) || !std::isfinite(cfg.ldp_delta)) fail("ldp_delta", "must be >= 0");
  if (cfg.kmeans.max_iters < 1) fail("kmeans_max_iters", "must be >= 1");
  if (!(cfg.kmeans.tol >= 0.0)) fail("kmeans_tol", "must be >= 0");
  if (cfg.kmeans.restarts < 1) fail("kmeans_restarts", "must be >= 1");
  if (cfg.contrastive_max_items < 2) fail("contrastive_max_items", "must be >= 2");
  if (cfg.float_bytes < 1) fail("float_bytes", "must be >= 1");
  if (cfg.label_bytes < 1) fail("label_bytes", "must be >= 1");
  if (!(cfg.init_scale > 0.0)) fail("init_scale", "must be > 0");
}

std::string report_to_json(const RoundReport& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["participants"] = r.participants;
  j["mean_rec_loss"] = r.mean_rec_loss;
  j["mean_cg_loss"] = r.mean_cg_loss;
  j["upload_bytes"] = r.upload_bytes;
  j["download_bytes"] = r.download_bytes;
  j["cluster_labels_hash"] = r.cluster_labels_hash ? nlohmann::ordered_json(*r.cluster_labels_hash) : nullptr;
  j["kmeans_inertia"] = r.kmeans_inertia;
  return j.dump();
}

std::vector<UserId> select_participants(std::size_t n_clients, double gamma, std::size_t round, std::uint64_t seed) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ParameterError("participation rate must lie in (0, 1]");
  const double exact = gamma * static_cast<double>(n_clients);
  const double nearest = std::round(exact);
  // gamma * n that is an integer up to rounding counts as that integer
  std::size_t count = std::abs(exact - nearest) < 1e-9 ? static_cast<std::size_t>(nearest)
                                                        : static_cast<std::size_t>(std::ceil(exact));
  count = std::min(count, n_clients);

  std::vector<UserId> all(n_clients);
  std::iota(all.begin(), all.end(), UserId{0});
  if (count == n_clients) return all;
  std::mt19937_64 rng(derive_seed(seed, {stream::participants, round}));
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_clients - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(count);
  std::sort(all.begin(), all.end());
  return all;
}

EmbeddingTable apply_ldp(const EmbeddingTable& upload, double delta, std::uint64_t seed, NoiseMechanism mech) {
  if (!(delta >= 0.0)) throw ParameterError("LDP intensity must be >= 0");
  if (delta == 0.0) return upload;
  EmbeddingTable out = upload;
  std::mt19937_64 rng(seed);
  double* data = out.values().data();
  const auto n = out.values().size();
  if (mech == NoiseMechanism::laplace) {
    std::uniform_real_distribution<double> unit(-0.5, 0.5);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = unit(rng);
      const double mag = -delta * std::log1p(-2.0 * std::abs(u));
      data[i] += u < 0.0 ? -mag : mag;
    }
  } else {
    std::normal_distribution<double> normal(0.0, delta);
    for (Eigen::Index i = 0; i < n; ++i) data[i] += normal(rng);
  }
  return out;
}

namespace {

std::vector<ItemId> contrastive_subset(std::size_t m, std::size_t limit, std::uint64_t seed) {
  if (m <= limit) return {};
  std::vector<ItemId> all(m);
  std::iota(all.begin(), all.end(), ItemId{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < limit; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, m - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(limit);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

ClientRoundResult client_round(ClientState& state, const InteractionDataset& ds,
                               const std::vector<std::uint32_t>* labels, const EmbeddingTable* global,
                               const FederationConfig& cfg, std::size_t round) {
  auto& model = state.model;
  if (global) {
    if (global->m() != model.table.m() || global->d() != model.table.d()) {
      throw ShapeError("broadcast table shape differs from the client table");
    }
    model.table = *global;
  }
  const UserId user = state.client_id;
  const std::size_t m = model.table.m();

  ClientRoundResult result;
  result.upload.coverage.assign(m, 0);

  const bool use_cg = labels != nullptr && cfg.contrastive.lambda > 0.0;
  PairMask mask;
  if (use_cg) {
    if (labels->size() != m) throw ShapeError("label vector length differs from item count");
    mask = PairMask(*labels);
  }

  const auto& positives = ds.train_positives[user];
  std::vector<std::pair<ItemId, std::uint8_t>> samples;
  BceGradients grads;
  RowGradient extra;
  const RowGradient none;
  TrainBatch batch;

  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    const auto negatives =
        sample_train_negatives(ds, user, cfg.neg_ratio, derive_seed(cfg.seed, {stream::train_negatives, round, user, epoch}));
    samples.clear();
    for (ItemId i : positives) samples.emplace_back(i, 1);
    for (ItemId i : negatives) samples.emplace_back(i, 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, {stream::shuffle, round, user, epoch}));
    std::shuffle(samples.begin(), samples.end(), rng);

    extra = RowGradient{};
    if (use_cg) {
      const auto subset = contrastive_subset(
          m, cfg.contrastive_max_items, derive_seed(cfg.seed, {stream::contrastive_subsample, round, user, epoch}));
      result.cg_loss = contrastive_loss_and_gradients(model.table, mask, cfg.contrastive, subset, &extra);
      extra.values *= cfg.contrastive.lambda;
    }

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(samples.size(), start + cfg.batch_size);
      batch.items.clear();
      batch.labels.clear();
      for (std::size_t s = start; s < end; ++s) {
        batch.items.push_back(samples[s].first);
        batch.labels.push_back(samples[s].second);
        result.upload.coverage[samples[s].first] = 1;
      }
      epoch_loss += bce_loss_and_gradients(model.head, model.table, batch, grads);
      // the contrastive gradient is applied once per epoch, with the first batch
      sgd_step(model.head, model.table, grads.grad_w, grads.grad_e, start == 0 ? extra : none, cfg.rates);
    }
    result.rec_loss = epoch_loss;
  }
  result.upload.table = model.table;
  return result;
}

std::size_t default_workers() {
  if (const char* env = std::getenv("CGFEDREC_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first failure
// by index is rethrown after all threads finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](std::atomic<std::size_t>& next) {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::atomic<std::size_t> next{0};
  const std::size_t threads = std::min(workers, n);
  if (threads <= 1) {
    body(next);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back([&] { body(next); });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

constexpr std::uint64_t kLabelHeaderBytes = 8;  // k + item count

}  // namespace

Simulator::Simulator(const InteractionDataset& ds, FederationConfig cfg, std::size_t workers)
    : ds_(&ds), cfg_(std::move(cfg)), workers_(std::max<std::size_t>(1, workers)),
      ledger_(cfg_.float_bytes, std::max<std::size_t>(cfg_.label_bytes, label_width(cfg_.clusters))) {
  validate(cfg_);
  const std::size_t m = ds.n_items;
  if (ds.n_users == 0 || m == 0) throw EmptyDatasetError("federation needs a non-empty dataset");
  if (cfg_.clusters > m) throw ParameterError("clusters: must not exceed the item count");

  global_ = init_table(m, cfg_.dim, cfg_.init_scale, derive_seed(cfg_.seed, {stream::global_init}));
  clients_.reserve(ds.n_users);
  for (UserId u = 0; u < ds.n_users; ++u) {
    clients_.push_back(
        {u, ClientModel{init_head(cfg_.dim, cfg_.init_scale, derive_seed(cfg_.seed, {stream::client_init, u})), global_}});
  }
  if (cfg_.bootstrap_labels) {
    clusters_ = kmeans(global_, cfg_.clusters, derive_seed(cfg_.seed, {stream::kmeans, 0}), cfg_.kmeans);
  }
  if (!cfg_.redraw_random_labels) {
    fixed_random_ = random_labels(m, cfg_.clusters, derive_seed(cfg_.seed, {stream::random_labels, 0})).labels;
  }
}

std::vector<ClientModel> Simulator::models() const {
  std::vector<ClientModel> out;
  out.reserve(clients_.size());
  for (const auto& c : clients_) out.push_back(c.model);
  return out;
}

const RoundReport& Simulator::step() {
  if (done()) throw std::logic_error("simulator already ran every configured round");
  const std::size_t round = next_round_;
  const std::size_t m = ds_->n_items;
  const std::size_t d = cfg_.dim;
  const std::size_t k = cfg_.clusters;

  RoundReport report;
  report.round = round;
  report.participants = select_participants(clients_.size(), cfg_.participation, round, cfg_.seed);
  ledger_.begin_round(report.participants.size());

  // server -> client payloads
  std::optional<std::vector<std::uint32_t>> labels;
  switch (cfg_.mode) {
    case BroadcastMode::labels_only:
    case BroadcastMode::embeddings_and_labels:
      if (clusters_) labels = clusters_->labels;
      break;
    case BroadcastMode::embeddings_and_random_labels:
      labels = cfg_.redraw_random_labels
                   ? random_labels(m, k, derive_seed(cfg_.seed, {stream::random_labels, round})).labels
                   : fixed_random_;
      break;
    case BroadcastMode::embeddings_only:
      break;
  }
  std::vector<std::uint32_t> received;
  if (labels) {
    const auto payload = encode_labels(*labels, k);
    received = decode_labels(payload, k);
    report.cluster_labels_hash = hash_labels(received);
  }
  const bool send_table = sends_embeddings(cfg_.mode);
  for (std::size_t p = 0; p < report.participants.size(); ++p) {
    if (labels) {
      ledger_.record_transfer(Direction::down, PayloadKind::label_vector, m, 1);
      ledger_.record_framing(kLabelHeaderBytes);
    }
    if (send_table) {
      ledger_.record_transfer(Direction::down, PayloadKind::embedding_table, m, d);
      ledger_.record_framing(kTableHeaderBytes);
    }
  }

  // local training
  std::vector<ClientRoundResult> results(report.participants.size());
  const std::vector<std::uint32_t>* label_ptr = labels ? &received : nullptr;
  const EmbeddingTable* table_ptr = send_table ? &global_ : nullptr;
  parallel_for(report.participants.size(), workers_, [&](std::size_t idx) {
    const UserId client = report.participants[idx];
    try {
      results[idx] = client_round(clients_[client], *ds_, label_ptr, table_ptr, cfg_, round);
      results[idx].upload.table =
          apply_ldp(results[idx].upload.table, cfg_.ldp_delta, derive_seed(cfg_.seed, {stream::ldp, round, client}),
                    cfg_.ldp_mechanism);
    } catch (const std::exception& e) {
      throw Error("round " + std::to_string(round) + ", client " + std::to_string(client) + ": " + e.what());
    }
  });

  // client -> server
  std::vector<ClientUpload> uploads;
  uploads.reserve(results.size());
  double rec = 0.0;
  double cg = 0.0;
  for (auto& r : results) {
    ledger_.record_transfer(Direction::up, PayloadKind::embedding_table, m, d);
    ledger_.record_framing(kTableHeaderBytes + (m + 7) / 8);  // header + packed coverage bits
    rec += r.rec_loss;
    cg += r.cg_loss;
    uploads.push_back(std::move(r.upload));
  }
  const auto n_part = static_cast<double>(results.size());
  report.mean_rec_loss = rec / n_part;
  report.mean_cg_loss = cg / n_part;

  try {
    global_ = aggregate(uploads, global_, cfg_.aggregate);
    clusters_ = kmeans(global_, k, derive_seed(cfg_.seed, {stream::kmeans, round}), cfg_.kmeans);
  } catch (const std::exception& e) {
    throw Error("round " + std::to_string(round) + ", server: " + e.what());
  }
  report.kmeans_inertia = clusters_->inertia;
  report.upload_bytes = ledger_.per_round().back().upload_bytes;
  report.download_bytes = ledger_.per_round().back().download_bytes;

  reports_.push_back(std::move(report));
  ++next_round_;
  return reports_.back();
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<char, 8> kCheckpointMagic = {'C', 'G', 'F', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("truncated checkpoint");
  return value;
}

void put_doubles(std::ostream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_doubles(std::istream& in, double* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw FormatError("truncated checkpoint");
}

void put_u32s(std::ostream& out, const std::vector<std::uint32_t>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(std::uint32_t)));
}

std::vector<std::uint32_t> get_u32s(std::istream& in) {
  std::vector<std::uint32_t> v(get<std::uint64_t>(in));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(std::uint32_t)));
  if (!in) throw FormatError("truncated checkpoint");
  return v;
}

std::uint64_t fingerprint(const FederationConfig& cfg, std::size_t n_clients, std::size_t m) {
  return derive_seed(cfg.seed, {static_cast<std::uint64_t>(cfg.mode), cfg.clusters, cfg.dim, n_clients, m});
}

}  // namespace

void Simulator::save_checkpoint(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  const std::size_t m = global_.m();
  const std::size_t d = global_.d();
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put<std::uint64_t>(out, fingerprint(cfg_, clients_.size(), m));
  put<std::uint64_t>(out, next_round_);
  put<std::uint64_t>(out, clients_.size());
  put<std::uint64_t>(out, m);
  put<std::uint64_t>(out, d);
  write_table_binary(out, global_);

  put<std::uint8_t>(out, clusters_ ? 1 : 0);
  if (clusters_) {
    put<std::uint64_t>(out, clusters_->k);
    put_u32s(out, clusters_->labels);
    put_doubles(out, clusters_->centroids.data(), static_cast<std::size_t>(clusters_->centroids.size()));
    put<double>(out, clusters_->inertia);
    put<std::uint64_t>(out, clusters_->iterations);
  }
  put_u32s(out, fixed_random_);

  for (const auto& c : clients_) {
    put_doubles(out, c.model.head.w.data(), d);
    put_doubles(out, c.model.table.values().data(), m * d);
  }

  put<std::uint64_t>(out, ledger_.s_f());
  put<std::uint64_t>(out, ledger_.s_i());
  put<std::uint64_t>(out, ledger_.per_round().size());
  for (const auto& r : ledger_.per_round()) {
    put(out, r.participants);
    put(out, r.upload_bytes);
    put(out, r.download_bytes);
    put(out, r.framing_bytes);
  }

  put<std::uint64_t>(out, reports_.size());
  for (const auto& r : reports_) {
    put<std::uint64_t>(out, r.round);
    put_u32s(out, r.participants);
    put(out, r.mean_rec_loss);
    put(out, r.mean_cg_loss);
    put(out, r.upload_bytes);
    put(out, r.download_bytes);
    put<std::uint8_t>(out, r.cluster_labels_hash ? 1 : 0);
    put<std::uint64_t>(out, r.cluster_labels_hash.value_or(0));
    put(out, r.kmeans_inertia);
  }
  if (!out) throw Error("failed writing checkpoint '" + path.string() + "'");
}

Simulator Simulator::load_checkpoint(const std::filesystem::path& path, const InteractionDataset& ds,
                                     FederationConfig cfg, std::size_t workers) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) throw FormatError("not a simulator checkpoint");

  FederationConfig probe = cfg;
  probe.bootstrap_labels = false;  // state comes from the file
  probe.redraw_random_labels = true;
  Simulator sim(ds, probe, workers);
  sim.cfg_ = std::move(cfg);

  if (get<std::uint64_t>(in) != fingerprint(sim.cfg_, ds.n_users, ds.n_items)) {
    throw FormatError("checkpoint was written for a different dataset or configuration");
  }
  sim.next_round_ = get<std::uint64_t>(in);
  const auto n_clients = get<std::uint64_t>(in);
  const auto m = get<std::uint64_t>(in);
  const auto d = get<std::uint64_t>(in);
  if (n_clients != ds.n_users || m != ds.n_items || d != sim.cfg_.dim) throw FormatError("checkpoint shape mismatch");
  sim.global_ = read_table_binary(in);

  if (get<std::uint8_t>(in)) {
    ClusterAssignment c;
    c.k = get<std::uint64_t>(in);
    c.labels = get_u32s(in);
    c.centroids = Matrix(static_cast<Eigen::Index>(c.k), static_cast<Eigen::Index>(d));
    get_doubles(in, c.centroids.data(), c.k * d);
    c.inertia = get<double>(in);
    c.iterations = get<std::uint64_t>(in);
    c.empty.assign(c.k, 1);
    for (auto l : c.labels) c.empty[l] = 0;
    sim.clusters_ = std::move(c);
  } else {
    sim.clusters_.reset();
  }
  sim.fixed_random_ = get_u32s(in);

  for (auto& c : sim.clients_) {
    get_doubles(in, c.model.head.w.data(), d);
    get_doubles(in, c.model.table.values().data(), m * d);
  }

  const auto s_f = get<std::uint64_t>(in);
  const auto s_i = get<std::uint64_t>(in);
  sim.ledger_ = CommLedger(s_f, s_i);
  std::vector<RoundTraffic> traffic(get<std::uint64_t>(in));
  for (auto& r : traffic) {
    r.participants = get<std::uint64_t>(in);
    r.upload_bytes = get<std::uint64_t>(in);
    r.download_bytes = get<std::uint64_t>(in);
    r.framing_bytes = get<std::uint64_t>(in);
  }
  sim.ledger_.restore(std::move(traffic));

  sim.reports_.resize(get<std::uint64_t>(in));
  for (auto& r : sim.reports_) {
    r.round = get<std::uint64_t>(in);
    r.participants = get_u32s(in);
    r.mean_rec_loss = get<double>(in);
    r.mean_cg_loss = get<double>(in);
    r.upload_bytes = get<std::uint64_t>(in);
    r.download_bytes = get<std::uint64_t>(in);
    const bool has_hash = get<std::uint8_t>(in) != 0;
    const auto hash = get<std::uint64_t>(in);
    if (has_hash) r.cluster_labels_hash = hash;
    r.kmeans_inertia = get<double>(in);
  }
  return sim;
}

FederationResult run_federation(const InteractionDataset& ds, const FederationConfig& cfg, std::size_t workers,
                                const RoundObserver& observer) {
  Simulator sim(ds, cfg, workers);
  while (!sim.done()) {
    const auto& report = sim.step();
    if (observer && !observer(sim, report)) break;
  }
  return {sim.clients(), sim.reports(), sim.ledger(), sim.global_table(), sim.server_clusters()};
}

}  // namespace cgfedrec
