#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pcfed/constraints.hpp"
#include "pcfed/numerics.hpp"
#include "pcfed/objectives.hpp"

namespace pcfed::data {

// IDX-format image/label pair (big-endian headers, magic 0x803 / 0x801).
// Pixels are scaled to [0, 1]. Errors name the file and byte offset.
Dataset load_idx_images(const std::string& images_path, const std::string& labels_path);
void save_idx_images(const Dataset& data, const std::string& images_path,
                     const std::string& labels_path, std::size_t rows, std::size_t cols);

// CIFAR-10 binary batches: 3073-byte records, label byte then 3072 pixels.
Dataset load_cifar10(const std::vector<std::string>& batch_paths);

// Compact binary dump of a Dataset (little-endian, f32 features). Loaders and
// writers round-trip exactly at f32 precision.
void save_dump(const Dataset& data, const std::string& path);
Dataset load_dump(const std::string& path);

enum class PartitionScheme { IidShuffle, ByLabelShards };

struct PartitionPlan {
  PartitionScheme scheme = PartitionScheme::IidShuffle;
  std::size_t agents = 1;
  std::size_t shards_per_agent = 2;  // ByLabelShards only
  std::uint64_t seed = 0;
};

// Splits a dataset across agents. IidShuffle permutes rows then slices evenly
// (earlier agents take the remainder). ByLabelShards sorts by (label, index),
// cuts agents*shards_per_agent contiguous shards and deals them by a shuffled
// shard order, giving each agent a skewed label marginal.
std::vector<Dataset> partition(const Dataset& data, const PartitionPlan& plan);

// Per-class subsample keeping class proportions (largest-remainder rounding).
// Deterministic: takes the earliest rows of each class in original order.
// Requires classes <= target <= n_samples.
Dataset stratified_subset(const Dataset& data, std::size_t target);

// Gaussian-blob classification data scaled to [0, 1], labels dealt
// round-robin across classes.
Dataset make_classification(std::size_t n_samples, std::size_t n_features,
                            std::size_t n_classes, std::uint64_t seed);

struct SyntheticQuadraticSpec {
  std::size_t agents = 2;
  std::size_t dim = 10;
  double condition_number = 10.0;  // eigenvalues log-uniform in [1, kappa]
  double noise_level = 0.0;        // gradient noise second moment sqrt
  double b_scale = 1.0;
  // Either explicit radii or fractions of |v*|_1 of the unconstrained
  // minimizer v* of the summed quadratic; fractions win when both are set.
  std::vector<double> tau;
  std::vector<double> tau_fraction;
};

struct SyntheticQuadratic {
  std::vector<std::shared_ptr<const ObjectiveOracle>> oracles;
  std::vector<ConstraintSet> sets;
  std::vector<double> tau;
  ParamVector unconstrained_minimizer;
};

// Q_i = U' diag(lambda) U with U from a QR factor of a seeded gaussian matrix
// and lambda log-uniform in [1, kappa]; b_i gaussian. kappa == 1 gives
// exactly the identity.
SyntheticQuadratic make_synthetic_quadratic(const SyntheticQuadraticSpec& spec,
                                            std::uint64_t seed);

}  // namespace pcfed::data
