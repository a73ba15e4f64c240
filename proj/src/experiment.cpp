#include "cgfedrec/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace cgfedrec {

namespace {

using ojson = nlohmann::ordered_json;

template <typename T>
ojson to_json_value(const T& v) {
  if constexpr (std::is_same_v<T, BroadcastMode> || std::is_same_v<T, NoiseMechanism> ||
                std::is_same_v<T, AggregateMode>) {
    return std::string(to_string(v));
  } else {
    return v;
  }
}

template <typename T>
void from_json_value(const nlohmann::json& j, T& out, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, BroadcastMode>) {
      out = parse_broadcast_mode(j.get<std::string>());
    } else if constexpr (std::is_same_v<T, NoiseMechanism>) {
      out = parse_noise_mechanism(j.get<std::string>());
    } else if constexpr (std::is_same_v<T, AggregateMode>) {
      out = parse_aggregate_mode(j.get<std::string>());
    } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (j.is_number_float() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
        throw ParameterError("expected a non-negative integer");
      }
      out = j.get<T>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!j.is_number()) throw ParameterError("expected a number");
      out = j.get<double>();
    } else {
      out = j.get<T>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError("config key '" + key + "': " + e.what());
  } catch (const Error& e) {
    throw ParameterError("config key '" + key + "': " + e.what());
  }
}

// Visits every serialized field as (key, reference).
template <typename Spec, typename Visitor>
void visit_fields(Spec& s, Visitor&& v) {
  v("dataset_path", s.dataset_path);
  v("dataset_format", s.dataset_format);
  v("planted_users", s.planted.n_users);
  v("planted_items", s.planted.n_items);
  v("planted_groups", s.planted.n_groups);
  v("planted_per_user", s.planted.interactions_per_user);
  v("min_interactions", s.min_interactions);
  v("eval_negatives", s.eval_negatives);
  v("eval_k", s.eval_k);
  v("full_ranking", s.full_ranking);
  v("early_stop_patience", s.early_stop_patience);
  auto& f = s.federation;
  v("rounds", f.rounds);
  v("participation", f.participation);
  v("mode", f.mode);
  v("clusters", f.clusters);
  v("dim", f.dim);
  v("eta", f.rates.eta);
  v("eta_prime", f.rates.eta_prime);
  v("tau", f.contrastive.tau);
  v("tau_base", f.contrastive.tau_base);
  v("lambda", f.contrastive.lambda);
  v("normalized", f.contrastive.use_normalized);
  v("neg_ratio", f.neg_ratio);
  v("local_epochs", f.local_epochs);
  v("batch_size", f.batch_size);
  v("ldp_delta", f.ldp_delta);
  v("ldp_mechanism", f.ldp_mechanism);
  v("seed", f.seed);
  v("aggregate", f.aggregate);
  v("bootstrap_labels", f.bootstrap_labels);
  v("redraw_random_labels", f.redraw_random_labels);
  v("kmeans_max_iters", f.kmeans.max_iters);
  v("kmeans_tol", f.kmeans.tol);
  v("kmeans_restarts", f.kmeans.restarts);
  v("contrastive_max_items", f.contrastive_max_items);
  v("float_bytes", f.float_bytes);
  v("label_bytes", f.label_bytes);
  v("init_scale", f.init_scale);
  v("grid_lambda", s.grid_lambda);
  v("grid_tau", s.grid_tau);
  v("grid_k", s.grid_k);
  v("ldp_deltas", s.ldp_deltas);
  v("output_dir", s.output_dir);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

std::string hr_key(std::size_t k) { return "hr@" + std::to_string(k); }
std::string ndcg_key(std::size_t k) { return "ndcg@" + std::to_string(k); }

}  // namespace

ojson spec_to_json(const ExperimentSpec& spec) {
  ojson j = ojson::object();
  visit_fields(spec, [&](const char* key, const auto& value) { j[key] = to_json_value(value); });
  return j;
}

ExperimentSpec spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("config must be a JSON object");
  ExperimentSpec spec;
  std::set<std::string> known;
  visit_fields(spec, [&](const char* key, auto& value) {
    known.insert(key);
    if (auto it = j.find(key); it != j.end()) from_json_value(*it, value, key);
  });
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ParameterError("unknown config key '" + key + "'");
  }
  validate(spec.federation);
  if (spec.eval_k < 1) throw ParameterError("eval_k: must be >= 1");
  if (spec.dataset_format != "tsv" && spec.dataset_format != "csv" && spec.dataset_format != "planted") {
    throw ParameterError("dataset_format: must be tsv, csv or planted");
  }
  return spec;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParameterError("config '" + path.string() + "': " + e.what());
  }
  return spec_from_json(j);
}

void apply_override(ExperimentSpec& spec, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ParameterError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json j = spec_to_json(spec);
  if (!j.contains(key)) throw ParameterError("unknown config key '" + key + "'");
  j[key] = value;
  spec = spec_from_json(j);
}

PreparedData prepare_data(const ExperimentSpec& spec) {
  PreparedData out;
  const std::uint64_t seed = spec.federation.seed;
  if (spec.dataset_format == "planted") {
    PlantedConfig cfg = spec.planted;
    cfg.seed = seed;
    out.planted = make_planted_corpus(cfg);
    out.log = filter_min_interactions(out.planted->log, spec.min_interactions);
    // filtering re-densifies; planted raw ids are the original dense ids
    for (const auto raw : out.log.item_ids) out.item_group.push_back(out.planted->item_group[static_cast<std::size_t>(raw)]);
  } else {
    if (spec.dataset_path.empty()) throw ParameterError("dataset_path: required for tsv/csv datasets");
    out.log = filter_min_interactions(ingest(spec.dataset_path, parse_log_format(spec.dataset_format)),
                                      spec.min_interactions);
  }
  if (out.log.records.empty()) throw EmptyDatasetError("no user survives the minimum-interaction filter");
  out.ds = split_leave_one_out(out.log, derive_seed(seed, {stream::split}));
  build_eval_candidates(out.ds, spec.eval_negatives, derive_seed(seed, {stream::eval_candidates}));
  return out;
}

RunResult run_single(const ExperimentSpec& spec, std::size_t workers, bool write_outputs, const RunOptions& opts) {
  return run_single(spec, prepare_data(spec), workers, write_outputs, opts);
}

RunResult run_single(const ExperimentSpec& spec, const PreparedData& data, std::size_t workers, bool write_outputs,
                     const RunOptions& opts) {
  validate(spec.federation);
  RunResult result;
  result.stats = compute_stats(data.ds);

  // Early stopping trains without each user's latest training positive and
  // watches HR@K on it.
  std::optional<ValidationSplit> validation;
  if (spec.early_stop_patience > 0) {
    validation = holdout_validation(data.ds, data.log, spec.eval_negatives,
                                    derive_seed(spec.federation.seed, {stream::validation}));
  }
  const InteractionDataset& train_ds = validation ? validation->train : data.ds;

  Simulator sim = opts.resume_from.empty()
                      ? Simulator(train_ds, spec.federation, workers)
                      : Simulator::load_checkpoint(opts.resume_from, train_ds, spec.federation, workers);
  auto lookup = [&sim](UserId u) -> const ClientModel& { return sim.clients()[u].model; };
  double best_val = -1.0;
  std::size_t since_best = 0;
  while (!sim.done()) {
    sim.step();
    if (validation) {
      const double hr = evaluate_targets(lookup, validation->target, validation->candidates, spec.eval_k).hr;
      if (hr > best_val) {
        best_val = hr;
        since_best = 0;
      } else if (++since_best >= spec.early_stop_patience) {
        result.stopped_early = !sim.done();
        break;
      }
    }
  }
  if (!opts.save_checkpoint.empty()) sim.save_checkpoint(opts.save_checkpoint);
  result.rounds_run = sim.reports().size();
  result.eval = evaluate_all(lookup, data.ds, spec.eval_k, spec.full_ranking);
  result.reports = sim.reports();
  result.ledger = sim.ledger();
  result.clusters = sim.server_clusters();
  result.global = sim.global_table();

  const auto& fed = spec.federation;
  const std::uint64_t m = data.ds.n_items;
  std::uint64_t baseline = 0;
  std::uint64_t ours = 0;
  for (const auto& r : result.ledger.per_round()) {
    baseline += baseline_download_bytes(r.participants, m, fed.dim, result.ledger.s_f());
    ours += ours_download_bytes(r.participants, m, result.ledger.s_i());
  }

  ExperimentSpec echoed = spec;
  echoed.output_dir.clear();  // the summary must not depend on where it is written
  ojson summary;
  summary["config"] = spec_to_json(echoed);
  summary["dataset"] = ojson::parse(stats_to_json(result.stats));
  summary["rounds_run"] = result.rounds_run;
  summary["stopped_early"] = result.stopped_early;
  summary["metrics"] = {{hr_key(spec.eval_k), result.eval.hr}, {ndcg_key(spec.eval_k), result.eval.ndcg}};
  if (validation) summary["best_validation_hr"] = best_val;
  summary["communication"] = {
      {"upload_bytes", result.ledger.cumulative_up()},
      {"download_bytes", result.ledger.cumulative_down()},
      {"framing_bytes", result.ledger.cumulative_framing()},
      {"baseline_download_bytes", baseline},
      {"label_download_bytes", ours},
      {"float_bytes", result.ledger.s_f()},
      {"label_bytes", result.ledger.s_i()},
      {"measured_reduction", baseline > 0 ? 1.0 - static_cast<double>(result.ledger.cumulative_down()) /
                                                      static_cast<double>(baseline)
                                          : 0.0},
      {"closed_form_reduction", fed.dim * result.ledger.s_f() > result.ledger.s_i()
                                    ? reduction_rate(fed.dim, result.ledger.s_f(), result.ledger.s_i())
                                    : 0.0},
  };
  if (!result.reports.empty()) {
    summary["final_mean_rec_loss"] = result.reports.back().mean_rec_loss;
    summary["final_mean_cg_loss"] = result.reports.back().mean_cg_loss;
  }
  result.summary = summary;

  if (write_outputs) {
    const std::filesystem::path dir = spec.output_dir;
    std::filesystem::create_directories(dir);
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    {
      auto out = open_out(dir / "rounds.jsonl");
      for (const auto& r : result.reports) out << report_to_json(r) << '\n';
    }
    {
      auto out = open_out(dir / "ledger.csv");
      write_ledger_csv(out, result.ledger, to_string(fed.mode), m, fed.dim);
    }
    {
      auto out = open_out(dir / "per_user.csv");
      write_per_user_csv(out, result.eval, data.log.user_ids);
    }
    save_table(dir / "global_embeddings.bin", result.global);
    {
      auto out = open_out(dir / "global_embeddings.csv");
      write_table_csv(out, result.global,
                      result.clusters ? std::span<const std::uint32_t>(result.clusters->labels)
                                      : std::span<const std::uint32_t>());
    }
  }
  return result;
}

std::vector<GridRow> run_grid(const ExperimentSpec& spec, std::size_t workers) {
  if (spec.grid_lambda.empty() && spec.grid_tau.empty() && spec.grid_k.empty()) {
    throw ParameterError("grid mode needs at least one of grid_lambda, grid_tau, grid_k");
  }
  const std::vector<double> lambdas = spec.grid_lambda.empty() ? std::vector<double>{spec.federation.contrastive.lambda}
                                                                : spec.grid_lambda;
  const std::vector<double> taus = spec.grid_tau.empty() ? std::vector<double>{spec.federation.contrastive.tau}
                                                          : spec.grid_tau;
  const std::vector<std::size_t> ks = spec.grid_k.empty() ? std::vector<std::size_t>{spec.federation.clusters}
                                                           : spec.grid_k;

  std::vector<GridRow> rows;
  const std::filesystem::path dir = spec.output_dir;
  std::size_t cell = 0;
  for (double lambda : lambdas) {
    for (double tau : taus) {
      for (std::size_t k : ks) {
        ExperimentSpec cell_spec = spec;
        cell_spec.grid_lambda.clear();
        cell_spec.grid_tau.clear();
        cell_spec.grid_k.clear();
        cell_spec.federation.contrastive.lambda = lambda;
        cell_spec.federation.contrastive.tau = tau;
        cell_spec.federation.clusters = k;
        cell_spec.federation.seed = derive_seed(spec.federation.seed, {stream::grid, cell});
        std::ostringstream name;
        name << "cell_" << std::setw(3) << std::setfill('0') << cell;
        cell_spec.output_dir = (dir / name.str()).string();
        const auto r = run_single(cell_spec, workers, true);
        rows.push_back({cell, cell_spec.federation.seed, lambda, tau, k, r.eval.hr, r.eval.ndcg,
                        r.ledger.cumulative_up(), r.ledger.cumulative_down(), r.rounds_run});
        ++cell;
      }
    }
  }
  std::filesystem::create_directories(dir);
  auto out = open_out(dir / "grid.csv");
  out << "cell,seed,lambda,tau,k," << hr_key(spec.eval_k) << ',' << ndcg_key(spec.eval_k)
      << ",upload_bytes,download_bytes,rounds_run\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.cell << ',' << r.seed << ',' << r.lambda << ',' << r.tau << ',' << r.k << ',' << r.hr << ',' << r.ndcg
        << ',' << r.upload_bytes << ',' << r.download_bytes << ',' << r.rounds_run << '\n';
  }
  return rows;
}

std::vector<AblationRow> run_ablation_suite(const ExperimentSpec& spec, std::size_t workers) {
  struct Variant {
    const char* name;
    BroadcastMode mode;
    bool zero_lambda;
  };
  const Variant variants[] = {
      {"CGFedRec", BroadcastMode::labels_only, false},
      {"CGFedRec-E", BroadcastMode::embeddings_only, true},
      {"CGFedRec-EC", BroadcastMode::embeddings_and_labels, false},
      {"CGFedRec-ERC", BroadcastMode::embeddings_and_random_labels, false},
  };
  const PreparedData data = prepare_data(spec);
  const std::filesystem::path dir = spec.output_dir;
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    ExperimentSpec run = spec;
    run.federation.mode = v.mode;
    if (v.zero_lambda) run.federation.contrastive.lambda = 0.0;
    run.output_dir = (dir / v.name).string();
    const auto r = run_single(run, data, workers, true);
    rows.push_back({v.name, v.mode, run.federation.contrastive.lambda, r.eval.hr, r.eval.ndcg, r.ledger.cumulative_up(),
                    r.ledger.cumulative_down()});
  }
  std::filesystem::create_directories(dir);
  auto out = open_out(dir / "ablation.csv");
  out << "variant,mode,lambda," << hr_key(spec.eval_k) << ',' << ndcg_key(spec.eval_k)
      << ",upload_bytes,download_bytes\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.variant << ',' << to_string(r.mode) << ',' << r.lambda << ',' << r.hr << ',' << r.ndcg << ','
        << r.upload_bytes << ',' << r.download_bytes << '\n';
  }
  return rows;
}

std::vector<LdpRow> run_ldp_sweep(const ExperimentSpec& spec, std::size_t workers) {
  if (spec.ldp_deltas.empty()) throw ParameterError("ldp_deltas: must not be empty");
  const PreparedData data = prepare_data(spec);
  const std::filesystem::path dir = spec.output_dir;
  std::vector<LdpRow> rows;
  for (double delta : spec.ldp_deltas) {
    ExperimentSpec run = spec;
    run.federation.ldp_delta = delta;
    std::ostringstream name;
    name << "delta_" << delta;
    run.output_dir = (dir / name.str()).string();
    const auto r = run_single(run, data, workers, true);
    rows.push_back({delta, r.eval.hr, r.eval.ndcg});
  }
  std::filesystem::create_directories(dir);
  auto out = open_out(dir / "ldp.csv");
  out << "delta," << hr_key(spec.eval_k) << ',' << ndcg_key(spec.eval_k) << '\n';
  out << std::setprecision(17);
  for (const auto& r : rows) out << r.delta << ',' << r.hr << ',' << r.ndcg << '\n';
  return rows;
}

}  // namespace cgfedrec
