#pragma once

#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace cgfedrec {

// Download volume of one round when the server sends the global table to
// every participant.
std::uint64_t baseline_download_bytes(std::uint64_t n_participants, std::uint64_t m, std::uint64_t d, std::uint64_t s_f);

// Download volume of one round when only cluster labels are sent.
std::uint64_t ours_download_bytes(std::uint64_t n_participants, std::uint64_t m, std::uint64_t s_i);

// 1 - s_i / (d * s_f). Requires d * s_f > s_i.
double reduction_rate(std::uint64_t d, std::uint64_t s_f, std::uint64_t s_i);

enum class Direction { up, down };
enum class PayloadKind { embedding_table, label_vector };

struct RoundTraffic {
  std::uint64_t participants = 0;
  std::uint64_t upload_bytes = 0;
  std::uint64_t download_bytes = 0;
  std::uint64_t framing_bytes = 0;  // headers; excluded from the two totals above

  friend bool operator==(const RoundTraffic&, const RoundTraffic&) = default;
};

// Byte accounting for a run. Payload bytes follow the closed-form counts
// exactly; message headers go to a separate framing counter.
class CommLedger {
 public:
  explicit CommLedger(std::uint64_t s_f = 4, std::uint64_t s_i = 1);

  void begin_round(std::uint64_t participants);
  // n_items x width x s_f for embedding tables, n_items x s_i for labels.
  void record_transfer(Direction dir, PayloadKind kind, std::uint64_t n_items, std::uint64_t width);
  void record_framing(std::uint64_t bytes);

  std::uint64_t s_f() const { return s_f_; }
  std::uint64_t s_i() const { return s_i_; }
  void set_label_bytes(std::uint64_t s_i);

  const std::vector<RoundTraffic>& per_round() const { return rounds_; }
  std::uint64_t cumulative_up() const { return up_; }
  std::uint64_t cumulative_down() const { return down_; }
  std::uint64_t cumulative_framing() const { return framing_; }

  // Restores a ledger from its per-round entries (checkpoint resume).
  void restore(std::vector<RoundTraffic> rounds);

  friend bool operator==(const CommLedger&, const CommLedger&) = default;

 private:
  RoundTraffic& current();

  std::uint64_t s_f_;
  std::uint64_t s_i_;
  std::vector<RoundTraffic> rounds_;
  std::uint64_t up_ = 0;
  std::uint64_t down_ = 0;
  std::uint64_t framing_ = 0;
};

// CSV columns: round, mode, upload_bytes, download_bytes,
// baseline_download_bytes, reduction.
void write_ledger_csv(std::ostream& out, const CommLedger& ledger, std::string_view mode, std::uint64_t m,
                      std::uint64_t d);

}  // namespace cgfedrec
