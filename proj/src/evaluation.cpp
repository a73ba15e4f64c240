#include "cgfedrec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace cgfedrec {

RankedList rank_target(const ScoreHead& head, const EmbeddingTable& table, std::span<const ItemId> candidates,
                       ItemId target) {
  if (std::find(candidates.begin(), candidates.end(), target) == candidates.end()) {
    throw ParameterError("target item " + std::to_string(target) + " is not among the candidates");
  }
  RankedList out;
  out.candidate_items.assign(candidates.begin(), candidates.end());
  out.scores.reserve(candidates.size());
  for (ItemId item : candidates) out.scores.push_back(predict(head, table, item));

  const double target_score = predict(head, table, target);
  std::size_t ahead = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const ItemId item = candidates[c];
    if (item == target) continue;
    const double s = out.scores[c];
    if (s > target_score || (s == target_score && item < target)) ++ahead;
  }
  out.rank_of_target = ahead + 1;
  return out;
}

int hr_at_k(std::size_t rank, std::size_t k) {
  if (rank < 1 || k < 1) throw ParameterError("rank and K must be >= 1");
  return rank <= k ? 1 : 0;
}

double ndcg_at_k(std::size_t rank, std::size_t k) {
  if (rank < 1 || k < 1) throw ParameterError("rank and K must be >= 1");
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

namespace {

UserMetrics score_user(const ClientModel& model, UserId u, std::span<const ItemId> candidates, ItemId target,
                       std::size_t k) {
  const auto ranked = rank_target(model.head, model.table, candidates, target);
  return {u, ranked.rank_of_target, hr_at_k(ranked.rank_of_target, k), ndcg_at_k(ranked.rank_of_target, k)};
}

void finish(EvalSummary& s) {
  double hr = 0.0;
  double ndcg = 0.0;
  for (const auto& u : s.per_user) {
    hr += u.hr;
    ndcg += u.ndcg;
  }
  if (!s.per_user.empty()) {
    s.hr = hr / static_cast<double>(s.per_user.size());
    s.ndcg = ndcg / static_cast<double>(s.per_user.size());
  }
}

}  // namespace

EvalSummary evaluate_all(std::span<const ClientModel> models, const InteractionDataset& ds, std::size_t k,
                         bool full_ranking) {
  if (models.size() != ds.n_users) throw ShapeError("one model per user is required");
  return evaluate_all([&](UserId u) -> const ClientModel& { return models[u]; }, ds, k, full_ranking);
}

EvalSummary evaluate_all(const ModelLookup& model, const InteractionDataset& ds, std::size_t k, bool full_ranking) {
  if (!full_ranking && ds.eval_candidates.size() != ds.n_users) {
    throw ParameterError("evaluation candidates have not been built");
  }
  EvalSummary out;
  out.k = k;
  out.per_user.reserve(ds.n_users);
  std::vector<ItemId> all;
  for (UserId u = 0; u < ds.n_users; ++u) {
    if (full_ranking) {
      all.clear();
      const auto& train = ds.train_positives[u];
      for (ItemId i = 0; i < ds.n_items; ++i) {
        if (!std::binary_search(train.begin(), train.end(), i)) all.push_back(i);
      }
      out.per_user.push_back(score_user(model(u), u, all, ds.test_positive[u], k));
    } else {
      out.per_user.push_back(score_user(model(u), u, ds.eval_candidates[u], ds.test_positive[u], k));
    }
  }
  finish(out);
  return out;
}

EvalSummary evaluate_targets(const ModelLookup& model, std::span<const std::optional<ItemId>> targets,
                             std::span<const std::vector<ItemId>> candidates, std::size_t k) {
  if (targets.size() != candidates.size()) throw ShapeError("targets and candidates must have one entry per user");
  EvalSummary out;
  out.k = k;
  for (UserId u = 0; u < targets.size(); ++u) {
    if (!targets[u]) continue;
    out.per_user.push_back(score_user(model(u), u, candidates[u], *targets[u], k));
  }
  finish(out);
  return out;
}

void write_per_user_csv(std::ostream& out, const EvalSummary& summary, std::span<const std::int64_t> raw_user_ids) {
  out << "user_id,rank,hr@" << summary.k << ",ndcg@" << summary.k << '\n';
  const auto old_precision = out.precision(17);
  for (const auto& u : summary.per_user) {
    if (raw_user_ids.empty()) out << u.user;
    else out << raw_user_ids[u.user];
    out << ',' << u.rank << ',' << u.hr << ',' << u.ndcg << '\n';
  }
  out.precision(old_precision);
}

}  // namespace cgfedrec
