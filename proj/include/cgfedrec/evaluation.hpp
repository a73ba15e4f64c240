#pragma once

#include "cgfedrec/common.hpp"
#include "cgfedrec/dataset.hpp"
#include "cgfedrec/local_model.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace cgfedrec {

struct RankedList {
  std::vector<ItemId> candidate_items;
  std::vector<double> scores;
  std::size_t rank_of_target = 0;  // 1-based
};

// rank = 1 + #candidates scoring strictly higher than the target, plus the
// candidates with an equal score and a smaller item index.
RankedList rank_target(const ScoreHead& head, const EmbeddingTable& table, std::span<const ItemId> candidates,
                       ItemId target);

int hr_at_k(std::size_t rank, std::size_t k);
double ndcg_at_k(std::size_t rank, std::size_t k);

struct UserMetrics {
  UserId user = 0;
  std::size_t rank = 0;
  int hr = 0;
  double ndcg = 0.0;
};

struct EvalSummary {
  double hr = 0.0;
  double ndcg = 0.0;
  std::size_t k = 0;
  std::vector<UserMetrics> per_user;
};

// Returns user u's local model.
using ModelLookup = std::function<const ClientModel&(UserId)>;

// Macro-average over users of HR@K and NDCG@K on the leave-one-out
// candidates. models[u] is user u's local model. With full_ranking the
// target is ranked against every item the user has not trained on.
EvalSummary evaluate_all(std::span<const ClientModel> models, const InteractionDataset& ds, std::size_t k,
                         bool full_ranking = false);
EvalSummary evaluate_all(const ModelLookup& model, const InteractionDataset& ds, std::size_t k,
                         bool full_ranking = false);

// Same, against explicit per-user targets and candidate lists; users without
// a target are skipped.
EvalSummary evaluate_targets(const ModelLookup& model, std::span<const std::optional<ItemId>> targets,
                             std::span<const std::vector<ItemId>> candidates, std::size_t k);

// Per-user CSV: user_id, rank, hr@K, ndcg@K.
void write_per_user_csv(std::ostream& out, const EvalSummary& summary, std::span<const std::int64_t> raw_user_ids = {});

}  // namespace cgfedrec
