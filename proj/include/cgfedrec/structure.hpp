#pragma once

#include "cgfedrec/common.hpp"
#include "cgfedrec/local_model.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace cgfedrec {

// ---------------------------------------------------------------------------
// Server side: aggregation and K-means structure discovery
// ---------------------------------------------------------------------------

struct ClientUpload {
  EmbeddingTable table;
  std::vector<std::uint8_t> coverage;  // per item: 1 if trained this round
};

enum class AggregateMode {
  coverage_weighted,  // mean over clients that trained the item
  plain_mean,         // mean over every uploaded table
};

// Uploads must be in a fixed order (ascending client id) for bitwise
// reproducibility. Items no client covers keep their row from previous.
EmbeddingTable aggregate(std::span<const ClientUpload> uploads, const EmbeddingTable& previous, AggregateMode mode);

struct ClusterAssignment {
  std::vector<std::uint32_t> labels;
  Matrix centroids;  // k x d; zero for random assignments
  std::size_t k = 0;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // after each assignment step
  std::vector<std::uint8_t> empty;    // per cluster: no member in the final labels
  std::size_t iterations = 0;
};

struct KMeansOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;
  std::size_t restarts = 1;  // independent seedings; lowest final inertia wins

  friend bool operator==(const KMeansOptions&, const KMeansOptions&) = default;
};

// Lloyd iterations from k-means++ seeding on squared Euclidean distance.
// With restarts > 1 the run with the lowest final inertia is kept.
// Empty clusters are re-seeded with the point farthest from its centroid.
ClusterAssignment kmeans(const EmbeddingTable& points, std::size_t k, std::uint64_t seed, const KMeansOptions& opts = {});

// Labels i.i.d. uniform over [0, k).
ClusterAssignment random_labels(std::size_t m, std::size_t k, std::uint64_t seed);

// Label broadcast payload: one byte per item when k <= 256, else two
// (little-endian).
std::size_t label_width(std::size_t k);
std::vector<std::uint8_t> encode_labels(std::span<const std::uint32_t> labels, std::size_t k);
std::vector<std::uint32_t> decode_labels(std::span<const std::uint8_t> payload, std::size_t k);

std::uint64_t hash_labels(std::span<const std::uint32_t> labels);

void write_centroids_csv(std::ostream& out, const ClusterAssignment& assign);

// ---------------------------------------------------------------------------
// Client side: cluster-guided supervised contrastive loss
// ---------------------------------------------------------------------------

struct ContrastiveConfig {
  double tau = 0.1;
  double tau_base = 0.07;
  double lambda = 0.1;
  bool use_normalized = true;

  friend bool operator==(const ContrastiveConfig&, const ContrastiveConfig&) = default;
};

// Same-cluster relation: same(i, j) iff i != j and labels agree. Stored as
// labels plus cluster sizes; dense() materializes the m x m matrix.
class PairMask {
 public:
  PairMask() = default;
  explicit PairMask(std::vector<std::uint32_t> labels);

  std::size_t m() const { return labels_.size(); }
  bool same(std::size_t i, std::size_t j) const { return i != j && labels_[i] == labels_[j]; }
  std::size_t positives(std::size_t i) const { return cluster_size_[labels_[i]] - 1; }
  const std::vector<std::uint32_t>& labels() const { return labels_; }
  std::vector<std::vector<std::uint8_t>> dense() const;

 private:
  std::vector<std::uint32_t> labels_;
  std::vector<std::size_t> cluster_size_;
};

PairMask build_mask(const ClusterAssignment& assign);

double contrastive_loss(const EmbeddingTable& table, const PairMask& mask, const ContrastiveConfig& cfg);

// Exact gradient of contrastive_loss with respect to every row.
RowGradient contrastive_gradients(const EmbeddingTable& table, const PairMask& mask, const ContrastiveConfig& cfg);

// Loss and gradient over the sub-problem formed by the given items (sorted,
// unique); positives and the softmax denominator only range over that subset.
// An empty subset means all items.
double contrastive_loss_and_gradients(const EmbeddingTable& table, const PairMask& mask, const ContrastiveConfig& cfg,
                                      std::span<const ItemId> subset, RowGradient* grad);

}  // namespace cgfedrec
