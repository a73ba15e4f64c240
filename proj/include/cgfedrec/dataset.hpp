#pragma once

#include "cgfedrec/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cgfedrec {

enum class LogFormat { tab_separated, comma_separated };

LogFormat parse_log_format(std::string_view name);
std::string_view to_string(LogFormat format);

// One implicit-feedback record. Ids are dense indices into the owning
// InteractionLog's id maps. Ratings are binarized on ingestion, so rating is
// always 1 for retained records.
struct RawInteraction {
  UserId user = 0;
  ItemId item = 0;
  double rating = 1.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const RawInteraction&, const RawInteraction&) = default;
};

// Records plus dense->original id maps.
struct InteractionLog {
  std::vector<RawInteraction> records;
  std::vector<std::int64_t> user_ids;  // dense user index -> raw id
  std::vector<std::int64_t> item_ids;  // dense item index -> raw id
  std::size_t dropped_non_positive = 0;

  std::size_t n_users() const { return user_ids.size(); }
  std::size_t n_items() const { return item_ids.size(); }
};

// Parses "user, item, rating[, timestamp]" lines. Records with rating <= 0
// are not positives and are dropped before re-indexing. Blank lines and
// lines starting with '#' are skipped.
InteractionLog parse_interactions(std::istream& in, LogFormat format);
InteractionLog ingest(const std::filesystem::path& path, LogFormat format);

// Keeps users with strictly more than min_count records and re-densifies
// both user and item ids (items seen only by dropped users disappear).
InteractionLog filter_min_interactions(const InteractionLog& log, std::size_t min_count);

struct InteractionDataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<std::vector<ItemId>> train_positives;  // sorted per user
  std::vector<ItemId> test_positive;
  std::vector<std::vector<ItemId>> eval_candidates;  // [0] is the test positive
  std::vector<std::vector<ItemId>> interacted;       // sorted train + test per user

  bool has_interacted(UserId user, ItemId item) const;
  std::size_t n_interactions() const;
};

// Holds out each user's latest interaction (seeded uniform tie-break).
// Duplicate (user, item) records collapse to one, keeping the latest timestamp.
InteractionDataset split_leave_one_out(const InteractionLog& log, std::uint64_t seed);

// ratio * |train_positives[user]| items drawn uniformly with replacement from
// the items the user never interacted with.
std::vector<ItemId> sample_train_negatives(const InteractionDataset& ds, UserId user, std::size_t ratio,
                                           std::uint64_t seed);

// Fills ds.eval_candidates: the test positive followed by n_negatives
// distinct non-interacted items.
void build_eval_candidates(InteractionDataset& ds, std::size_t n_negatives, std::uint64_t seed);

struct DatasetStats {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t n_interactions = 0;
  double sparsity = 0.0;

  double sparsity_pct() const { return 100.0 * sparsity; }
};

DatasetStats compute_stats(const InteractionDataset& ds);
DatasetStats compute_stats(const InteractionLog& log);
std::string stats_to_json(const DatasetStats& stats);

// Validation slice for early stopping: the latest training positive of every
// user with at least two training positives is moved out of training and
// ranked against sampled non-interacted items. Users without a validation
// item have an empty candidate list.
struct ValidationSplit {
  InteractionDataset train;
  std::vector<std::optional<ItemId>> target;
  std::vector<std::vector<ItemId>> candidates;
};

ValidationSplit holdout_validation(const InteractionDataset& ds, const InteractionLog& log, std::size_t n_negatives,
                                   std::uint64_t seed);

// Synthetic corpus with planted item groups. Items are assigned to groups by
// a seeded permutation; every user belongs to one group and interacts only
// with items of that group.
struct PlantedConfig {
  std::size_t n_users = 40;
  std::size_t n_items = 200;
  std::size_t n_groups = 4;
  std::size_t interactions_per_user = 45;
  std::uint64_t seed = 0;

  friend bool operator==(const PlantedConfig&, const PlantedConfig&) = default;
};

struct PlantedCorpus {
  InteractionLog log;
  std::vector<std::uint32_t> item_group;  // indexed by dense item id
  std::vector<std::uint32_t> user_group;  // indexed by dense user id
};

PlantedCorpus make_planted_corpus(const PlantedConfig& cfg);

}  // namespace cgfedrec
