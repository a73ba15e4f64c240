#pragma once

// Test-side reference implementations. Deliberately naive and independent of
// the library code they check.

#include "cgfedrec/dataset.hpp"
#include "cgfedrec/local_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace testing {

inline std::filesystem::path ml100k_path() { return CGFEDREC_ML100K_PATH; }
inline bool have_ml100k() { return std::filesystem::exists(ml100k_path()); }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cgfedrec_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Adjusted Rand index from the pair-counting contingency table.
inline double adjusted_rand_index(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> joint;
  std::map<std::uint32_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  double index = 0, sa = 0, sb = 0;
  for (auto& [k, v] : joint) index += c2(v);
  for (auto& [k, v] : ra) sa += c2(v);
  for (auto& [k, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(a.size()));
  const double max_index = (sa + sb) / 2.0;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

// Supervised contrastive loss evaluated term by term.
inline double naive_contrastive(const cgfedrec::Matrix& e, std::span<const std::uint32_t> labels, double tau,
                                double tau_base, bool normalized) {
  const auto m = e.rows();
  cgfedrec::Matrix z = e;
  if (normalized) z.rowwise().normalize();
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    double denom = 0.0;
    for (Eigen::Index l = 0; l < m; ++l)
      if (l != i) denom += std::exp(z.row(i).dot(z.row(l)) / tau);
    double sum = 0.0;
    int pos = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i || labels[j] != labels[i]) continue;
      sum += std::log(std::exp(z.row(i).dot(z.row(j)) / tau) / denom);
      ++pos;
    }
    if (pos > 0) total += sum / pos;
  }
  return -(tau / tau_base) * total / static_cast<double>(m);
}

// Central differences of f with respect to every entry of x.
inline cgfedrec::Matrix numeric_gradient(cgfedrec::Matrix& x, const std::function<double()>& f, double h = 1e-5) {
  cgfedrec::Matrix g(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double keep = x(r, c);
      x(r, c) = keep + h;
      const double up = f();
      x(r, c) = keep - h;
      const double down = f();
      x(r, c) = keep;
      g(r, c) = (up - down) / (2 * h);
    }
  }
  return g;
}

// Worst elementwise relative error; entries where both sides are tiny are
// compared absolutely.
inline double max_rel_error(const cgfedrec::Matrix& a, const cgfedrec::Matrix& b) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double x = a(r, c), y = b(r, c);
      const double mag = std::max(std::abs(x), std::abs(y));
      const double err = mag < 1e-8 ? std::abs(x - y) : std::abs(x - y) / mag;
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline cgfedrec::Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double lo = -1.0,
                                       double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  cgfedrec::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

// Dataset built straight from per-user item lists; the last item of each
// list is the test positive.
inline cgfedrec::InteractionDataset tiny_dataset(std::size_t n_items, const std::vector<std::vector<cgfedrec::ItemId>>& users) {
  cgfedrec::InteractionDataset ds;
  ds.n_users = users.size();
  ds.n_items = n_items;
  for (const auto& items : users) {
    std::vector<cgfedrec::ItemId> train(items.begin(), items.end() - 1);
    std::sort(train.begin(), train.end());
    std::vector<cgfedrec::ItemId> all(items);
    std::sort(all.begin(), all.end());
    ds.train_positives.push_back(train);
    ds.test_positive.push_back(items.back());
    ds.interacted.push_back(all);
  }
  return ds;
}

}  // namespace testing
