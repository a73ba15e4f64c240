#include "cgfedrec/structure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

namespace cgfedrec {

EmbeddingTable aggregate(std::span<const ClientUpload> uploads, const EmbeddingTable& previous, AggregateMode mode) {
  if (uploads.empty()) throw ParameterError("aggregate needs at least one upload");
  const std::size_t m = previous.m();
  const std::size_t d = previous.d();
  for (const auto& up : uploads) {
    if (up.table.m() != m || up.table.d() != d) throw ShapeError("uploaded table shape differs from the global table");
    if (mode == AggregateMode::coverage_weighted && up.coverage.size() != m) {
      throw ShapeError("coverage flags length differs from item count");
    }
  }

  if (mode == AggregateMode::plain_mean) {
    Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (const auto& up : uploads) sum += up.table.values();
    return EmbeddingTable(sum / static_cast<double>(uploads.size()));
  }

  Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  std::vector<std::size_t> count(m, 0);
  for (const auto& up : uploads) {
    for (std::size_t i = 0; i < m; ++i) {
      if (!up.coverage[i]) continue;
      sum.row(static_cast<Eigen::Index>(i)) += up.table.row(i);
      ++count[i];
    }
  }
  EmbeddingTable out = previous;
  for (std::size_t i = 0; i < m; ++i) {
    if (count[i] > 0) out.row(i) = sum.row(static_cast<Eigen::Index>(i)) / static_cast<double>(count[i]);
  }
  return out;
}

namespace {

double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

// Assigns every point to its nearest centroid (ties to the lowest index) and
// returns the inertia. dist2 receives each point's squared distance.
double assign_points(const Matrix& points, const Matrix& centroids, std::vector<std::uint32_t>& labels,
                     std::vector<double>& dist2) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double dd = squared_distance(points, i, centroids, c);
      if (dd < best) {
        best = dd;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
    dist2[static_cast<std::size_t>(i)] = best;
    inertia += best;
  }
  return inertia;
}

Matrix kmeans_plus_plus(const Matrix& points, std::size_t k, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(points.rows());
  Matrix centroids(static_cast<Eigen::Index>(k), points.cols());
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  centroids.row(0) = points.row(static_cast<Eigen::Index>(pick));

  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(points, static_cast<Eigen::Index>(i), centroids, 0);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (closest[i] <= 0.0) continue;
        acc += closest[i];
        pick = i;
        if (acc > target) break;
      }
    } else {
      pick = first(rng);  // every point coincides with a chosen centre
    }
    centroids.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_distance(points, static_cast<Eigen::Index>(i), centroids,
                                                         static_cast<Eigen::Index>(c)));
    }
  }
  return centroids;
}

ClusterAssignment lloyd(const Matrix& points, std::size_t k, std::uint64_t seed, const KMeansOptions& opts) {
  const auto m = static_cast<std::size_t>(points.rows());
  std::mt19937_64 rng(seed);

  ClusterAssignment out;
  out.k = k;
  out.labels.assign(m, 0);
  out.centroids = kmeans_plus_plus(points, k, rng);
  std::vector<double> dist2(m, 0.0);

  auto record = [&](double inertia) {
    if (!out.inertia_trace.empty()) {
      const double prev = out.inertia_trace.back();
      // Lloyd steps never increase inertia; the slack absorbs summation rounding.
      if (inertia > prev + 1e-12 * std::max(1.0, prev)) {
        throw NumericError("k-means inertia increased from " + std::to_string(prev) + " to " + std::to_string(inertia));
      }
    }
    out.inertia_trace.push_back(inertia);
    out.inertia = inertia;
  };

  const auto kk = static_cast<Eigen::Index>(k);
  for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
    record(assign_points(points, out.centroids, out.labels, dist2));

    Matrix next = Matrix::Zero(kk, points.cols());
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < m; ++i) {
      next.row(out.labels[i]) += points.row(static_cast<Eigen::Index>(i));
      ++count[out.labels[i]];
    }
    bool reseeded = false;
    std::vector<std::uint8_t> taken(m, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) {
        next.row(static_cast<Eigen::Index>(c)) /= static_cast<double>(count[c]);
        continue;
      }
      // farthest point from its own centroid that has not already been used
      std::size_t far = m;
      for (std::size_t i = 0; i < m; ++i) {
        if (!taken[i] && (far == m || dist2[i] > dist2[far])) far = i;
      }
      taken[far] = 1;
      next.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(far));
      reseeded = true;
    }
    double shift = 0.0;
    for (Eigen::Index c = 0; c < kk; ++c) shift = std::max(shift, (next.row(c) - out.centroids.row(c)).norm());
    out.centroids = std::move(next);
    ++out.iterations;
    if (shift < opts.tol && !reseeded) break;
  }
  // final labels are consistent with the final centroids
  record(assign_points(points, out.centroids, out.labels, dist2));

  out.empty.assign(k, 1);
  for (auto l : out.labels) out.empty[l] = 0;
  return out;
}

}  // namespace

ClusterAssignment kmeans(const EmbeddingTable& table, std::size_t k, std::uint64_t seed, const KMeansOptions& opts) {
  const std::size_t m = table.m();
  if (k < 1 || k > m) {
    throw ParameterError("k-means needs 1 <= k <= m, got k=" + std::to_string(k) + " m=" + std::to_string(m));
  }
  if (opts.max_iters < 1) throw ParameterError("k-means max_iters must be >= 1");
  if (!(opts.tol >= 0.0)) throw ParameterError("k-means tol must be >= 0");
  if (opts.restarts < 1) throw ParameterError("k-means restarts must be >= 1");
  if (!table.all_finite()) throw NumericError("k-means input contains non-finite entries");

  // restart 0 uses the caller's seed so restarts=1 is plain k-means++
  auto best = lloyd(table.values(), k, seed, opts);
  for (std::size_t r = 1; r < opts.restarts; ++r) {
    auto next = lloyd(table.values(), k, derive_seed(seed, {r}), opts);
    if (next.inertia < best.inertia) best = std::move(next);
  }
  return best;
}

ClusterAssignment random_labels(std::size_t m, std::size_t k, std::uint64_t seed) {
  if (k < 1) throw ParameterError("random labels need k >= 1");
  ClusterAssignment out;
  out.k = k;
  out.labels.resize(m);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(k - 1));
  for (auto& l : out.labels) l = pick(rng);
  out.empty.assign(k, 1);
  for (auto l : out.labels) out.empty[l] = 0;
  return out;
}

std::size_t label_width(std::size_t k) {
  if (k <= 256) return 1;
  if (k <= 65536) return 2;
  throw ParameterError("cluster count " + std::to_string(k) + " exceeds the 16-bit label payload");
}

std::vector<std::uint8_t> encode_labels(std::span<const std::uint32_t> labels, std::size_t k) {
  const std::size_t width = label_width(k);
  std::vector<std::uint8_t> out(labels.size() * width);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) throw ParameterError("label " + std::to_string(labels[i]) + " out of range for k=" + std::to_string(k));
    out[i * width] = static_cast<std::uint8_t>(labels[i] & 0xffu);
    if (width == 2) out[i * width + 1] = static_cast<std::uint8_t>(labels[i] >> 8);
  }
  return out;
}

std::vector<std::uint32_t> decode_labels(std::span<const std::uint8_t> payload, std::size_t k) {
  const std::size_t width = label_width(k);
  if (payload.size() % width != 0) throw FormatError("label payload length is not a multiple of the label width");
  std::vector<std::uint32_t> out(payload.size() / width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = payload[i * width];
    if (width == 2) out[i] |= static_cast<std::uint32_t>(payload[i * width + 1]) << 8;
    if (out[i] >= k) throw FormatError("decoded label out of range");
  }
  return out;
}

std::uint64_t hash_labels(std::span<const std::uint32_t> labels) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (std::uint32_t l : labels) {
    for (int b = 0; b < 4; ++b) {
      h ^= (l >> (8 * b)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

void write_centroids_csv(std::ostream& out, const ClusterAssignment& assign) {
  out << "cluster";
  for (Eigen::Index j = 0; j < assign.centroids.cols(); ++j) out << ",c" << j;
  out << '\n';
  const auto old_precision = out.precision(17);
  for (Eigen::Index c = 0; c < assign.centroids.rows(); ++c) {
    out << c;
    for (Eigen::Index j = 0; j < assign.centroids.cols(); ++j) out << ',' << assign.centroids(c, j);
    out << '\n';
  }
  out.precision(old_precision);
}

PairMask::PairMask(std::vector<std::uint32_t> labels) : labels_(std::move(labels)) {
  std::uint32_t max_label = 0;
  for (auto l : labels_) max_label = std::max(max_label, l);
  cluster_size_.assign(labels_.empty() ? 0 : max_label + 1, 0);
  for (auto l : labels_) ++cluster_size_[l];
}

std::vector<std::vector<std::uint8_t>> PairMask::dense() const {
  std::vector<std::vector<std::uint8_t>> out(m(), std::vector<std::uint8_t>(m(), 0));
  for (std::size_t i = 0; i < m(); ++i) {
    for (std::size_t j = 0; j < m(); ++j) out[i][j] = same(i, j) ? 1 : 0;
  }
  return out;
}

PairMask build_mask(const ClusterAssignment& assign) {
  return PairMask(assign.labels);
}

double contrastive_loss_and_gradients(const EmbeddingTable& table, const PairMask& mask, const ContrastiveConfig& cfg,
                                      std::span<const ItemId> subset, RowGradient* grad) {
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) throw ParameterError("tau must be positive and finite");
  if (!(cfg.tau_base > 0.0) || !std::isfinite(cfg.tau_base)) throw ParameterError("tau_base must be positive and finite");
  if (mask.m() != table.m()) throw ShapeError("mask size differs from item count");

  std::vector<ItemId> idx;
  if (subset.empty()) {
    idx.resize(table.m());
    std::iota(idx.begin(), idx.end(), ItemId{0});
  } else {
    idx.assign(subset.begin(), subset.end());
  }
  const std::size_t n = idx.size();
  if (n < 2) throw ParameterError("contrastive loss needs at least 2 items");
  const auto nn = static_cast<Eigen::Index>(n);
  const auto d = static_cast<Eigen::Index>(table.d());

  Matrix z(nn, d);
  Vector norms = Vector::Ones(nn);
  for (std::size_t r = 0; r < n; ++r) {
    z.row(static_cast<Eigen::Index>(r)) = table.row(idx[r]);
    if (cfg.use_normalized) {
      const double norm = table.row(idx[r]).norm();
      if (!(norm > 0.0)) throw NumericError("zero-norm embedding for item " + std::to_string(idx[r]));
      norms[static_cast<Eigen::Index>(r)] = norm;
      z.row(static_cast<Eigen::Index>(r)) /= norm;
    }
  }

  // Cluster sizes and member sums within the subset. The positive part of
  // Omega and of the gradient only needs these sums, so the m x m work is
  // the softmax alone.
  std::vector<std::uint32_t> label(n);
  for (std::size_t r = 0; r < n; ++r) label[r] = mask.labels()[idx[r]];
  const std::size_t n_labels = *std::max_element(label.begin(), label.end()) + 1;
  std::vector<std::size_t> size(n_labels, 0);
  Matrix cluster_sum = Matrix::Zero(static_cast<Eigen::Index>(n_labels), d);
  for (std::size_t r = 0; r < n; ++r) {
    ++size[label[r]];
    cluster_sum.row(label[r]) += z.row(static_cast<Eigen::Index>(r));
  }

  // Rows are processed in blocks so the similarity slab stays in cache.
  // For each row i with positives, p_il = softmax_l(a_il) over l != i and
  //   dL/dz = c/tau * [(P + P^T) Z - (T + T^T) Z],
  // where T_il = same(i,l)/pos_i, so (T + T^T) Z reduces to 2 (S_c - z_i) / pos_i.
  constexpr Eigen::Index kBlock = 64;
  const double inv_tau = 1.0 / cfg.tau;
  const double scale = (cfg.tau / cfg.tau_base) / static_cast<double>(n);
  double omega_sum = 0.0;
  Matrix dz;
  if (grad) dz = Matrix::Zero(nn, d);
  Matrix p(std::min(kBlock, nn), nn);
  for (Eigen::Index b0 = 0; b0 < nn; b0 += kBlock) {
    const Eigen::Index bn = std::min(kBlock, nn - b0);
    auto slab = p.topRows(bn);
    slab.noalias() = z.middleRows(b0, bn) * z.transpose();
    for (Eigen::Index r = 0; r < bn; ++r) {
      const Eigen::Index ii = b0 + r;
      const auto i = static_cast<std::size_t>(ii);
      auto row = slab.row(r).array();
      const std::size_t pos = size[label[i]] - 1;
      if (pos == 0) {  // no positive pair: contributes zero
        row.setZero();
        continue;
      }
      const double self = row(ii);
      const double pos_sum = (z.row(ii).dot(cluster_sum.row(label[i])) - self) * inv_tau;
      row(ii) = -std::numeric_limits<double>::infinity();
      const double max_logit = row.maxCoeff() * inv_tau;
      row = (row * inv_tau - max_logit).exp();
      const double denom = row.sum();
      row /= denom;
      omega_sum += pos_sum / static_cast<double>(pos) - (max_logit + std::log(denom));
    }
    if (grad) {
      dz.middleRows(b0, bn).noalias() += slab * z;
      dz.noalias() += slab.transpose() * z.middleRows(b0, bn);
    }
  }
  const double loss = -scale * omega_sum;

  if (grad) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t pos = size[label[i]] - 1;
      if (pos == 0) continue;
      const auto ii = static_cast<Eigen::Index>(i);
      dz.row(ii) -= (2.0 / static_cast<double>(pos)) * (cluster_sum.row(label[i]) - z.row(ii));
    }
    dz *= scale * inv_tau;
    if (cfg.use_normalized) {
      for (Eigen::Index r = 0; r < nn; ++r) {
        const double radial = dz.row(r).dot(z.row(r));
        dz.row(r) = (dz.row(r) - radial * z.row(r)) / norms[r];
      }
    }
    grad->rows = std::move(idx);
    grad->values = std::move(dz);
  }
  return loss;
}

double contrastive_loss(const EmbeddingTable& table, const PairMask& mask, const ContrastiveConfig& cfg) {
  return contrastive_loss_and_gradients(table, mask, cfg, {}, nullptr);
}

RowGradient contrastive_gradients(const EmbeddingTable& table, const PairMask& mask, const ContrastiveConfig& cfg) {
  RowGradient grad;
  contrastive_loss_and_gradients(table, mask, cfg, {}, &grad);
  return grad;
}

}  // namespace cgfedrec
