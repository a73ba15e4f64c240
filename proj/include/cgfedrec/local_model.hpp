#pragma once

#include "cgfedrec/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace cgfedrec {

// m x d item representation matrix, row-major.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t m, std::size_t d) : values_(Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d))) {}
  explicit EmbeddingTable(Matrix values) : values_(std::move(values)) {}

  std::size_t m() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(values_.cols()); }

  auto row(std::size_t i) { return values_.row(static_cast<Eigen::Index>(i)); }
  auto row(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)); }

  Matrix& values() { return values_; }
  const Matrix& values() const { return values_; }

  bool all_finite() const { return values_.allFinite(); }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           (a.values_.array() == b.values_.array()).all();
  }

 private:
  Matrix values_;
};

struct ScoreHead {
  Vector w;
};

struct TrainBatch {
  std::vector<ItemId> items;
  std::vector<std::uint8_t> labels;  // 1 = positive, 0 = sampled negative
};

struct LearningRates {
  double eta = 0.05;        // score head
  double eta_prime = 0.5;   // item embeddings

  friend bool operator==(const LearningRates&, const LearningRates&) = default;
};

// Gradient restricted to a set of rows. rows is sorted and unique and
// values.row(k) belongs to item rows[k].
struct RowGradient {
  std::vector<ItemId> rows;
  Matrix values;

  bool empty() const { return rows.empty(); }
};

// One client's local model.
struct ClientModel {
  ScoreHead head;
  EmbeddingTable table;
};

inline constexpr double kProbabilityClamp = 1e-12;

double sigmoid(double x);

double predict(const ScoreHead& head, const EmbeddingTable& table, ItemId item);

// Unnormalized binary cross-entropy summed over the batch.
double bce_loss(const ScoreHead& head, const EmbeddingTable& table, const TrainBatch& batch);

struct BceGradients {
  Vector grad_w;
  RowGradient grad_e;
};

BceGradients bce_gradients(const ScoreHead& head, const EmbeddingTable& table, const TrainBatch& batch);

// Loss and gradients from a single pass over the batch.
double bce_loss_and_gradients(const ScoreHead& head, const EmbeddingTable& table, const TrainBatch& batch,
                              BceGradients& out);

// w <- w - eta * grad_w; E[i] <- E[i] - eta' * (grad_e[i] + extra[i]).
// Rows present in neither gradient are left untouched.
void sgd_step(ScoreHead& head, EmbeddingTable& table, const Vector& grad_w, const RowGradient& grad_e,
              const RowGradient& extra, const LearningRates& rates);

// Entries i.i.d. uniform in [-scale, scale].
EmbeddingTable init_table(std::size_t m, std::size_t d, double scale, std::uint64_t seed);
ScoreHead init_head(std::size_t d, double scale, std::uint64_t seed);

// Binary form: 16-byte little-endian header (4-byte magic "CGET", uint64 m,
// uint32 d) followed by m*d float64 values in row-major order.
inline constexpr std::size_t kTableHeaderBytes = 16;
void write_table_binary(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable read_table_binary(std::istream& in);
void save_table(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable load_table(const std::filesystem::path& path);

// CSV form: header "item,e0,...,e{d-1}" then one row per item. When labels
// are given a trailing "cluster" column is added.
void write_table_csv(std::ostream& out, const EmbeddingTable& table, std::span<const std::uint32_t> labels = {});
EmbeddingTable read_table_csv(std::istream& in);

}  // namespace cgfedrec
