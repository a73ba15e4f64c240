#include "cgfedrec/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <unordered_map>

namespace cgfedrec {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* name) {
  field = trim(field);
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError(line, std::string("malformed ") + name + " field '" + std::string(field) + "'");
  }
  return value;
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

// Re-densifies ids of the given records in order of first appearance.
InteractionLog reindex(std::vector<RawInteraction> records, const std::vector<std::int64_t>& old_users,
                       const std::vector<std::int64_t>& old_items) {
  InteractionLog out;
  std::vector<std::int64_t> user_map(old_users.size(), -1);
  std::vector<std::int64_t> item_map(old_items.size(), -1);
  for (auto& r : records) {
    if (user_map[r.user] < 0) {
      user_map[r.user] = static_cast<std::int64_t>(out.user_ids.size());
      out.user_ids.push_back(old_users[r.user]);
    }
    if (item_map[r.item] < 0) {
      item_map[r.item] = static_cast<std::int64_t>(out.item_ids.size());
      out.item_ids.push_back(old_items[r.item]);
    }
    r.user = static_cast<UserId>(user_map[r.user]);
    r.item = static_cast<ItemId>(item_map[r.item]);
  }
  out.records = std::move(records);
  return out;
}

std::vector<ItemId> complement(const std::vector<ItemId>& sorted_items, std::size_t n_items) {
  std::vector<ItemId> out;
  out.reserve(n_items - std::min(n_items, sorted_items.size()));
  auto it = sorted_items.begin();
  for (ItemId i = 0; i < n_items; ++i) {
    while (it != sorted_items.end() && *it < i) ++it;
    if (it != sorted_items.end() && *it == i) continue;
    out.push_back(i);
  }
  return out;
}

}  // namespace

LogFormat parse_log_format(std::string_view name) {
  if (name == "tsv" || name == "tab" || name == "tab_separated") return LogFormat::tab_separated;
  if (name == "csv" || name == "comma" || name == "comma_separated") return LogFormat::comma_separated;
  throw ParameterError("unknown log format '" + std::string(name) + "'");
}

std::string_view to_string(LogFormat format) {
  return format == LogFormat::tab_separated ? "tsv" : "csv";
}

InteractionLog parse_interactions(std::istream& in, LogFormat format) {
  const char sep = format == LogFormat::tab_separated ? '\t' : ',';
  std::unordered_map<std::int64_t, UserId> user_index;
  std::unordered_map<std::int64_t, ItemId> item_index;
  InteractionLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto fields = split_fields(view, sep);
    if (fields.size() < 3) {
      throw ParseError(line_no, "expected at least 3 fields, got " + std::to_string(fields.size()));
    }
    const auto raw_user = parse_number<std::int64_t>(fields[0], line_no, "user");
    const auto raw_item = parse_number<std::int64_t>(fields[1], line_no, "item");
    const auto rating = parse_number<double>(fields[2], line_no, "rating");
    std::int64_t timestamp = 0;
    if (fields.size() >= 4 && !trim(fields[3]).empty()) {
      timestamp = parse_number<std::int64_t>(fields[3], line_no, "timestamp");
    }
    if (!(rating >= 0.0)) throw ParseError(line_no, "negative rating");
    if (rating <= 0.0) {
      ++log.dropped_non_positive;
      continue;
    }
    auto [uit, unew] = user_index.try_emplace(raw_user, static_cast<UserId>(log.user_ids.size()));
    if (unew) log.user_ids.push_back(raw_user);
    auto [iit, inew] = item_index.try_emplace(raw_item, static_cast<ItemId>(log.item_ids.size()));
    if (inew) log.item_ids.push_back(raw_item);
    log.records.push_back({uit->second, iit->second, 1.0, timestamp});
  }
  if (log.records.empty()) throw EmptyDatasetError("no interactions in input");
  return log;
}

InteractionLog ingest(const std::filesystem::path& path, LogFormat format) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return parse_interactions(in, format);
}

InteractionLog filter_min_interactions(const InteractionLog& log, std::size_t min_count) {
  std::vector<std::size_t> counts(log.n_users(), 0);
  for (const auto& r : log.records) ++counts[r.user];
  std::vector<RawInteraction> kept;
  kept.reserve(log.records.size());
  for (const auto& r : log.records) {
    if (counts[r.user] > min_count) kept.push_back(r);
  }
  InteractionLog out = reindex(std::move(kept), log.user_ids, log.item_ids);
  out.dropped_non_positive = log.dropped_non_positive;
  return out;
}

bool InteractionDataset::has_interacted(UserId user, ItemId item) const {
  const auto& v = interacted[user];
  return std::binary_search(v.begin(), v.end(), item);
}

std::size_t InteractionDataset::n_interactions() const {
  std::size_t total = 0;
  for (const auto& v : train_positives) total += v.size();
  return total + test_positive.size();
}

InteractionDataset split_leave_one_out(const InteractionLog& log, std::uint64_t seed) {
  const std::size_t n_users = log.n_users();
  // per user: item -> latest timestamp
  std::vector<std::map<ItemId, std::int64_t>> per_user(n_users);
  for (const auto& r : log.records) {
    auto [it, inserted] = per_user[r.user].try_emplace(r.item, r.timestamp);
    if (!inserted) it->second = std::max(it->second, r.timestamp);
  }

  InteractionDataset ds;
  ds.n_users = n_users;
  ds.n_items = log.n_items();
  ds.train_positives.resize(n_users);
  ds.test_positive.resize(n_users);
  ds.interacted.resize(n_users);
  for (UserId u = 0; u < n_users; ++u) {
    const auto& items = per_user[u];
    if (items.size() < 2) {
      throw SplitError("user " + std::to_string(log.user_ids[u]) + " has " + std::to_string(items.size()) +
                       " distinct interaction(s); leave-one-out needs at least 2");
    }
    std::int64_t latest = std::numeric_limits<std::int64_t>::min();
    for (const auto& [item, ts] : items) latest = std::max(latest, ts);
    std::vector<ItemId> tied;
    for (const auto& [item, ts] : items) {
      if (ts == latest) tied.push_back(item);
    }
    ItemId held_out = tied.front();
    if (tied.size() > 1) {
      std::mt19937_64 rng(derive_seed(seed, {stream::split, u}));
      std::uniform_int_distribution<std::size_t> pick(0, tied.size() - 1);
      held_out = tied[pick(rng)];
    }
    ds.test_positive[u] = held_out;
    auto& train = ds.train_positives[u];
    auto& all = ds.interacted[u];
    for (const auto& [item, ts] : items) {
      all.push_back(item);
      if (item != held_out) train.push_back(item);
    }
  }
  return ds;
}

std::vector<ItemId> sample_train_negatives(const InteractionDataset& ds, UserId user, std::size_t ratio,
                                           std::uint64_t seed) {
  if (ratio < 1) throw ParameterError("negative ratio must be >= 1");
  const auto pool = complement(ds.interacted[user], ds.n_items);
  if (pool.empty()) {
    throw SamplingError("user " + std::to_string(user) + " interacted with every item; no negatives to sample");
  }
  const std::size_t n = ratio * ds.train_positives[user].size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<ItemId> out(n);
  for (auto& item : out) item = pool[pick(rng)];
  return out;
}

void build_eval_candidates(InteractionDataset& ds, std::size_t n_negatives, std::uint64_t seed) {
  ds.eval_candidates.assign(ds.n_users, {});
  for (UserId u = 0; u < ds.n_users; ++u) {
    auto pool = complement(ds.interacted[u], ds.n_items);
    if (pool.size() < n_negatives) {
      throw SamplingError("user " + std::to_string(u) + " has " + std::to_string(pool.size()) +
                          " non-interacted items, " + std::to_string(n_negatives - pool.size()) +
                          " short of the " + std::to_string(n_negatives) + " requested");
    }
    std::mt19937_64 rng(derive_seed(seed, {stream::eval_candidates, u}));
    // partial Fisher-Yates
    for (std::size_t i = 0; i < n_negatives; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    auto& list = ds.eval_candidates[u];
    list.reserve(n_negatives + 1);
    list.push_back(ds.test_positive[u]);
    list.insert(list.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_negatives));
  }
}

namespace {

DatasetStats make_stats(std::size_t users, std::size_t items, std::size_t interactions) {
  if (users == 0 || items == 0) throw EmptyDatasetError("cannot compute statistics of an empty dataset");
  DatasetStats s{users, items, interactions, 0.0};
  s.sparsity = 1.0 - static_cast<double>(interactions) / (static_cast<double>(users) * static_cast<double>(items));
  return s;
}

}  // namespace

DatasetStats compute_stats(const InteractionDataset& ds) {
  return make_stats(ds.n_users, ds.n_items, ds.n_interactions());
}

DatasetStats compute_stats(const InteractionLog& log) {
  return make_stats(log.n_users(), log.n_items(), log.records.size());
}

std::string stats_to_json(const DatasetStats& stats) {
  nlohmann::ordered_json j;
  j["users"] = stats.n_users;
  j["items"] = stats.n_items;
  j["interactions"] = stats.n_interactions;
  j["sparsity_pct"] = stats.sparsity_pct();
  return j.dump();
}

ValidationSplit holdout_validation(const InteractionDataset& ds, const InteractionLog& log, std::size_t n_negatives,
                                   std::uint64_t seed) {
  std::vector<std::map<ItemId, std::int64_t>> latest(ds.n_users);
  for (const auto& r : log.records) {
    auto [it, inserted] = latest[r.user].try_emplace(r.item, r.timestamp);
    if (!inserted) it->second = std::max(it->second, r.timestamp);
  }

  ValidationSplit out;
  out.train = ds;
  out.target.assign(ds.n_users, std::nullopt);
  out.candidates.assign(ds.n_users, {});
  for (UserId u = 0; u < ds.n_users; ++u) {
    auto& train = out.train.train_positives[u];
    if (train.size() < 2) continue;
    // latest training positive; ties go to the smallest item index
    ItemId pick = train.front();
    std::int64_t best = std::numeric_limits<std::int64_t>::min();
    for (ItemId item : train) {
      const auto it = latest[u].find(item);
      const std::int64_t ts = it == latest[u].end() ? 0 : it->second;
      if (ts > best) {
        best = ts;
        pick = item;
      }
    }
    train.erase(std::find(train.begin(), train.end(), pick));
    out.target[u] = pick;

    auto pool = complement(ds.interacted[u], ds.n_items);
    const std::size_t n = std::min(n_negatives, pool.size());
    std::mt19937_64 rng(derive_seed(seed, {stream::validation, u}));
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> dist(i, pool.size() - 1);
      std::swap(pool[i], pool[dist(rng)]);
    }
    auto& list = out.candidates[u];
    list.push_back(pick);
    list.insert(list.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

PlantedCorpus make_planted_corpus(const PlantedConfig& cfg) {
  if (cfg.n_groups == 0 || cfg.n_items < cfg.n_groups) throw ParameterError("planted corpus needs 1 <= groups <= items");
  const std::size_t group_size = cfg.n_items / cfg.n_groups;
  if (cfg.interactions_per_user < 2 || cfg.interactions_per_user > group_size) {
    throw ParameterError("interactions_per_user must be in [2, items per group]");
  }
  std::mt19937_64 rng(derive_seed(cfg.seed, {stream::planted}));

  std::vector<ItemId> perm(cfg.n_items);
  std::iota(perm.begin(), perm.end(), ItemId{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::uint32_t> raw_item_group(cfg.n_items);
  std::vector<std::vector<ItemId>> members(cfg.n_groups);
  for (std::size_t pos = 0; pos < cfg.n_items; ++pos) {
    const auto g = static_cast<std::uint32_t>(std::min(pos / group_size, cfg.n_groups - 1));
    raw_item_group[perm[pos]] = g;
    members[g].push_back(perm[pos]);
  }

  // Raw ids equal dense ids: every item is listed once up front so the dense
  // order is stable even when some item is never sampled.
  PlantedCorpus out;
  out.log.user_ids.resize(cfg.n_users);
  std::iota(out.log.user_ids.begin(), out.log.user_ids.end(), std::int64_t{0});
  out.log.item_ids.resize(cfg.n_items);
  std::iota(out.log.item_ids.begin(), out.log.item_ids.end(), std::int64_t{0});
  out.item_group = raw_item_group;
  out.user_group.resize(cfg.n_users);
  for (UserId u = 0; u < cfg.n_users; ++u) {
    const auto g = static_cast<std::uint32_t>(u % cfg.n_groups);
    out.user_group[u] = g;
    auto pool = members[g];
    for (std::size_t i = 0; i < cfg.interactions_per_user; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      out.log.records.push_back({u, pool[i], 1.0, static_cast<std::int64_t>(i + 1)});
    }
  }
  return out;
}

}  // namespace cgfedrec
