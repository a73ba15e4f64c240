#include "cgfedrec/comms_ledger.hpp"

#include "cgfedrec/common.hpp"

#include <ostream>
#include <stdexcept>
#include <string>

namespace cgfedrec {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) throw std::overflow_error("byte count overflows 64 bits");
  return out;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t out = 0;
  if (__builtin_add_overflow(a, b, &out)) throw std::overflow_error("byte count overflows 64 bits");
  return out;
}

void require_positive(std::uint64_t v, const char* name) {
  if (v < 1) throw ParameterError(std::string(name) + " must be >= 1");
}

}  // namespace

std::uint64_t baseline_download_bytes(std::uint64_t n_participants, std::uint64_t m, std::uint64_t d, std::uint64_t s_f) {
  require_positive(n_participants, "n_participants");
  require_positive(m, "m");
  require_positive(d, "d");
  require_positive(s_f, "s_f");
  return checked_mul(checked_mul(checked_mul(n_participants, m), d), s_f);
}

std::uint64_t ours_download_bytes(std::uint64_t n_participants, std::uint64_t m, std::uint64_t s_i) {
  require_positive(n_participants, "n_participants");
  require_positive(m, "m");
  require_positive(s_i, "s_i");
  return checked_mul(checked_mul(n_participants, m), s_i);
}

double reduction_rate(std::uint64_t d, std::uint64_t s_f, std::uint64_t s_i) {
  require_positive(s_i, "s_i");
  const std::uint64_t per_item = checked_mul(d, s_f);
  if (per_item <= s_i) {
    throw ParameterError("d * s_f = " + std::to_string(per_item) + " must exceed s_i = " + std::to_string(s_i));
  }
  return 1.0 - static_cast<double>(s_i) / static_cast<double>(per_item);
}

CommLedger::CommLedger(std::uint64_t s_f, std::uint64_t s_i) : s_f_(s_f), s_i_(s_i) {
  require_positive(s_f, "s_f");
  require_positive(s_i, "s_i");
}

void CommLedger::set_label_bytes(std::uint64_t s_i) {
  require_positive(s_i, "s_i");
  s_i_ = s_i;
}

void CommLedger::begin_round(std::uint64_t participants) {
  rounds_.push_back(RoundTraffic{participants, 0, 0, 0});
}

RoundTraffic& CommLedger::current() {
  if (rounds_.empty()) throw std::logic_error("ledger transfer recorded before begin_round");
  return rounds_.back();
}

void CommLedger::record_transfer(Direction dir, PayloadKind kind, std::uint64_t n_items, std::uint64_t width) {
  const std::uint64_t bytes = kind == PayloadKind::embedding_table ? checked_mul(checked_mul(n_items, width), s_f_)
                                                                   : checked_mul(n_items, s_i_);
  auto& round = current();
  if (dir == Direction::up) {
    round.upload_bytes = checked_add(round.upload_bytes, bytes);
    up_ = checked_add(up_, bytes);
  } else {
    round.download_bytes = checked_add(round.download_bytes, bytes);
    down_ = checked_add(down_, bytes);
  }
}

void CommLedger::record_framing(std::uint64_t bytes) {
  current().framing_bytes = checked_add(current().framing_bytes, bytes);
  framing_ = checked_add(framing_, bytes);
}

void CommLedger::restore(std::vector<RoundTraffic> rounds) {
  rounds_ = std::move(rounds);
  up_ = down_ = framing_ = 0;
  for (const auto& r : rounds_) {
    up_ = checked_add(up_, r.upload_bytes);
    down_ = checked_add(down_, r.download_bytes);
    framing_ = checked_add(framing_, r.framing_bytes);
  }
}

void write_ledger_csv(std::ostream& out, const CommLedger& ledger, std::string_view mode, std::uint64_t m,
                      std::uint64_t d) {
  out << "round,mode,upload_bytes,download_bytes,baseline_download_bytes,reduction\n";
  const auto old_precision = out.precision(17);
  std::size_t round = 0;
  for (const auto& r : ledger.per_round()) {
    ++round;
    const std::uint64_t base = r.participants > 0 ? baseline_download_bytes(r.participants, m, d, ledger.s_f()) : 0;
    const double reduction = base > 0 ? 1.0 - static_cast<double>(r.download_bytes) / static_cast<double>(base) : 0.0;
    out << round << ',' << mode << ',' << r.upload_bytes << ',' << r.download_bytes << ',' << base << ',' << reduction
        << '\n';
  }
  out.precision(old_precision);
}

}  // namespace cgfedrec
