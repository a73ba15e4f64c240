#include "cgfedrec/local_model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace cgfedrec {

namespace {

void check_item(const EmbeddingTable& table, ItemId item) {
  if (item >= table.m()) {
    throw ParameterError("item index " + std::to_string(item) + " out of range [0, " + std::to_string(table.m()) + ")");
  }
}

void check_batch(const ScoreHead& head, const EmbeddingTable& table, const TrainBatch& batch) {
  if (batch.items.empty()) throw ParameterError("empty training batch");
  if (batch.items.size() != batch.labels.size()) throw ShapeError("batch items and labels differ in length");
  if (static_cast<std::size_t>(head.w.size()) != table.d()) throw ShapeError("score head and table dimension differ");
  for (ItemId item : batch.items) check_item(table, item);
}

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("truncated embedding table");
  return value;
}

constexpr std::array<char, 4> kTableMagic = {'C', 'G', 'E', 'T'};

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double predict(const ScoreHead& head, const EmbeddingTable& table, ItemId item) {
  check_item(table, item);
  if (static_cast<std::size_t>(head.w.size()) != table.d()) throw ShapeError("score head and table dimension differ");
  return sigmoid(head.w.dot(table.row(item)));
}

double bce_loss(const ScoreHead& head, const EmbeddingTable& table, const TrainBatch& batch) {
  check_batch(head, table, batch);
  double loss = 0.0;
  for (std::size_t k = 0; k < batch.items.size(); ++k) {
    const double p = clamp_probability(sigmoid(head.w.dot(table.row(batch.items[k]))));
    loss -= batch.labels[k] ? std::log(p) : std::log(1.0 - p);
  }
  return loss;
}

double bce_loss_and_gradients(const ScoreHead& head, const EmbeddingTable& table, const TrainBatch& batch,
                              BceGradients& out) {
  check_batch(head, table, batch);
  const auto d = static_cast<Eigen::Index>(table.d());

  out.grad_e.rows.assign(batch.items.begin(), batch.items.end());
  std::sort(out.grad_e.rows.begin(), out.grad_e.rows.end());
  out.grad_e.rows.erase(std::unique(out.grad_e.rows.begin(), out.grad_e.rows.end()), out.grad_e.rows.end());
  out.grad_e.values = Matrix::Zero(static_cast<Eigen::Index>(out.grad_e.rows.size()), d);
  out.grad_w = Vector::Zero(d);

  double loss = 0.0;
  for (std::size_t k = 0; k < batch.items.size(); ++k) {
    const ItemId item = batch.items[k];
    const auto e = table.row(item);
    const double p = sigmoid(head.w.dot(e));
    const double pc = clamp_probability(p);
    loss -= batch.labels[k] ? std::log(pc) : std::log(1.0 - pc);
    const double residual = p - static_cast<double>(batch.labels[k]);
    const auto slot = std::lower_bound(out.grad_e.rows.begin(), out.grad_e.rows.end(), item) - out.grad_e.rows.begin();
    out.grad_e.values.row(slot) += residual * head.w.transpose();
    out.grad_w += residual * e.transpose();
  }
  return loss;
}

BceGradients bce_gradients(const ScoreHead& head, const EmbeddingTable& table, const TrainBatch& batch) {
  BceGradients out;
  bce_loss_and_gradients(head, table, batch, out);
  return out;
}

void sgd_step(ScoreHead& head, EmbeddingTable& table, const Vector& grad_w, const RowGradient& grad_e,
              const RowGradient& extra, const LearningRates& rates) {
  if (grad_w.size() != head.w.size()) throw ShapeError("grad_w dimension mismatch");
  const auto d = static_cast<Eigen::Index>(table.d());
  for (const RowGradient* g : {&grad_e, &extra}) {
    if (g->empty()) continue;
    if (g->values.cols() != d || g->values.rows() != static_cast<Eigen::Index>(g->rows.size())) {
      throw ShapeError("row gradient shape mismatch");
    }
    if (g->rows.back() >= table.m()) throw ShapeError("row gradient index out of range");
  }
  if (!grad_w.allFinite()) throw NumericError("non-finite gradient for score head w");
  for (const RowGradient* g : {&grad_e, &extra}) {
    for (Eigen::Index k = 0; k < g->values.rows(); ++k) {
      if (!g->values.row(k).allFinite()) {
        throw NumericError("non-finite gradient for embedding row " + std::to_string(g->rows[static_cast<std::size_t>(k)]));
      }
    }
  }

  head.w -= rates.eta * grad_w;

  // merge-walk the two sorted row lists
  std::size_t a = 0;
  std::size_t b = 0;
  Vector combined(d);
  while (a < grad_e.rows.size() || b < extra.rows.size()) {
    const ItemId ra = a < grad_e.rows.size() ? grad_e.rows[a] : std::numeric_limits<ItemId>::max();
    const ItemId rb = b < extra.rows.size() ? extra.rows[b] : std::numeric_limits<ItemId>::max();
    if (ra == rb) {
      combined = grad_e.values.row(static_cast<Eigen::Index>(a)).transpose() +
                 extra.values.row(static_cast<Eigen::Index>(b)).transpose();
      table.row(ra) -= rates.eta_prime * combined.transpose();
      ++a;
      ++b;
    } else if (ra < rb) {
      table.row(ra) -= rates.eta_prime * grad_e.values.row(static_cast<Eigen::Index>(a));
      ++a;
    } else {
      table.row(rb) -= rates.eta_prime * extra.values.row(static_cast<Eigen::Index>(b));
      ++b;
    }
  }
}

EmbeddingTable init_table(std::size_t m, std::size_t d, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  EmbeddingTable table(m, d);
  for (Eigen::Index i = 0; i < table.values().size(); ++i) table.values().data()[i] = dist(rng);
  return table;
}

ScoreHead init_head(std::size_t d, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  ScoreHead head{Vector(static_cast<Eigen::Index>(d))};
  for (Eigen::Index i = 0; i < head.w.size(); ++i) head.w[i] = dist(rng);
  return head;
}

void write_table_binary(std::ostream& out, const EmbeddingTable& table) {
  out.write(kTableMagic.data(), kTableMagic.size());
  put<std::uint64_t>(out, table.m());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(table.d()));
  out.write(reinterpret_cast<const char*>(table.values().data()),
            static_cast<std::streamsize>(table.values().size() * sizeof(double)));
  if (!out) throw Error("failed writing embedding table");
}

EmbeddingTable read_table_binary(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kTableMagic) throw FormatError("bad embedding table magic");
  const auto m = get<std::uint64_t>(in);
  const auto d = get<std::uint32_t>(in);
  EmbeddingTable table(m, d);
  in.read(reinterpret_cast<char*>(table.values().data()),
          static_cast<std::streamsize>(table.values().size() * sizeof(double)));
  if (!in) throw FormatError("truncated embedding table payload");
  return table;
}

void save_table(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  write_table_binary(out, table);
}

EmbeddingTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return read_table_binary(in);
}

void write_table_csv(std::ostream& out, const EmbeddingTable& table, std::span<const std::uint32_t> labels) {
  if (!labels.empty() && labels.size() != table.m()) throw ShapeError("label count differs from table rows");
  out << "item";
  for (std::size_t j = 0; j < table.d(); ++j) out << ",e" << j;
  if (!labels.empty()) out << ",cluster";
  out << '\n';
  const auto old_precision = out.precision(17);
  for (std::size_t i = 0; i < table.m(); ++i) {
    out << i;
    for (std::size_t j = 0; j < table.d(); ++j) out << ',' << table.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (!labels.empty()) out << ',' << labels[i];
    out << '\n';
  }
  out.precision(old_precision);
}

EmbeddingTable read_table_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty embedding CSV");
  std::size_t d = 0;
  {
    std::stringstream header(line);
    std::string cell;
    std::getline(header, cell, ',');
    while (std::getline(header, cell, ',')) {
      if (cell != "cluster") ++d;
    }
  }
  std::vector<double> values;
  std::size_t m = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    for (std::size_t j = 0; j < d; ++j) {
      if (!std::getline(row, cell, ',')) throw FormatError("short embedding CSV row " + std::to_string(m));
      values.push_back(std::stod(cell));
    }
    ++m;
  }
  EmbeddingTable table(m, d);
  std::copy(values.begin(), values.end(), table.values().data());
  return table;
}

}  // namespace cgfedrec
