#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace cgfedrec {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

// Error hierarchy. Every error raised by the library derives from Error so
// callers can catch one type at the top level.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a path of tags,
// e.g. derive_seed(seed, {round, client, epoch}). Order of tags matters.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(base);
  for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags, so that derived seeds for different purposes never collide.
namespace stream {
inline constexpr std::uint64_t split = 1;
inline constexpr std::uint64_t train_negatives = 2;
inline constexpr std::uint64_t eval_candidates = 3;
inline constexpr std::uint64_t participants = 4;
inline constexpr std::uint64_t shuffle = 5;
inline constexpr std::uint64_t client_init = 6;
inline constexpr std::uint64_t global_init = 7;
inline constexpr std::uint64_t kmeans = 8;
inline constexpr std::uint64_t random_labels = 9;
inline constexpr std::uint64_t ldp = 10;
inline constexpr std::uint64_t contrastive_subsample = 11;
inline constexpr std::uint64_t validation = 12;
inline constexpr std::uint64_t planted = 13;
inline constexpr std::uint64_t grid = 14;
}  // namespace stream

}  // namespace cgfedrec
