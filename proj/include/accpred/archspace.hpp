#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "accpred/error.hpp"
#include "accpred/rng.hpp"

namespace accpred {

enum class Padding { Same, Valid };
enum class PoolMode { Max, Avg };

struct Convolution {
  int kernel_size = 3;
  int stride = 1;
  Padding padding = Padding::Same;
  int out_channels = 16;
  bool batch_norm = false;
  bool operator==(const Convolution&) const = default;
};

/// Pooling windows use valid padding: H_out = floor((H - K) / stride) + 1.
struct Pooling {
  PoolMode mode = PoolMode::Max;
  int kernel_size = 2;
  int stride = 2;
  bool operator==(const Pooling&) const = default;
};

struct BatchNorm {
  bool operator==(const BatchNorm&) const = default;
};

struct Dropout {
  double rate = 0.5;
  bool operator==(const Dropout&) const = default;
};

/// `repeat` x (conv(k, stride) + bn, conv(k, 1) + bn, shortcut add), same padding.
/// Only the first repetition strides; it uses a 1x1 projection shortcut when
/// the channel count or the stride changes, identity otherwise.
struct ResidualBlock {
  int kernel_size = 3;
  int stride = 1;
  int out_channels = 16;
  int repeat = 1;
  bool operator==(const ResidualBlock&) const = default;
};

/// Adds the output of backbone layer `source_index` to the previous layer's
/// output. The source is resized by a strided 1x1 projection when needed.
struct SkipConnection {
  int source_index = 0;
  bool operator==(const SkipConnection&) const = default;
};

struct FullyConnected {
  int units = 10;
  bool operator==(const FullyConnected&) const = default;
};

struct GlobalPooling {
  bool operator==(const GlobalPooling&) const = default;
};

using LayerSpec = std::variant<Convolution, Pooling, BatchNorm, Dropout, ResidualBlock,
                               SkipConnection, FullyConnected, GlobalPooling>;

enum class LayerKind {
  Convolution,
  Pooling,
  BatchNorm,
  Dropout,
  ResidualBlock,
  SkipConnection,
  FullyConnected,
  GlobalPooling,
};

inline LayerKind kind_of(const LayerSpec& layer) {
  return static_cast<LayerKind>(layer.index());
}
std::string_view to_string(LayerKind kind);
std::optional<LayerKind> layer_kind_from_string(std::string_view name);

/// A CNN backbone. The effective network appends a fixed tail:
/// GlobalPooling followed by FullyConnected(num_classes).
struct ArchitectureSpec {
  std::vector<LayerSpec> layers;
  int num_classes = 10;

  std::size_t backbone_length() const { return layers.size(); }
  std::size_t effective_length() const { return layers.size() + 2; }

  /// Layer at effective index i (backbone, then the two tail layers).
  LayerSpec effective_layer(std::size_t i) const;

  bool operator==(const ArchitectureSpec&) const = default;
};

struct TensorShape {
  int height = 1;
  int width = 1;
  int channels = 1;
  bool operator==(const TensorShape&) const = default;
};

inline constexpr TensorShape kCifarInput{32, 32, 3};

struct SearchSpaceConfig {
  int max_backbone_layers = 12;
  std::vector<int> kernel_sizes{1, 3, 5};
  int min_channels = 3;
  int max_channels = 256;
  std::vector<int> strides{1, 2};
  std::vector<int> pool_kernel_sizes{2, 3};
  int max_repeat = 6;
  std::vector<LayerKind> allowed_kinds{LayerKind::Convolution, LayerKind::Pooling,
                                       LayerKind::BatchNorm,   LayerKind::Dropout,
                                       LayerKind::ResidualBlock, LayerKind::SkipConnection};
  std::vector<double> dropout_rates{0.3, 0.5};

  /// Throws Error(InvalidConfig).
  void check() const;
};

inline constexpr int kMaxResamples = 100;

/// Why an architecture is rejected, with the offending backbone index.
struct ValidationError {
  ErrorCode code;
  std::size_t layer_index;
};

/// Non-throwing validation; returns the first problem found.
std::optional<ValidationError> check_architecture(const ArchitectureSpec& arch,
                                                  TensorShape input = kCifarInput);

/// Throws Error with the ValidationError's code.
void validate(const ArchitectureSpec& arch, TensorShape input = kCifarInput);

inline bool is_valid(const ArchitectureSpec& arch, TensorShape input = kCifarInput) {
  return !check_architecture(arch, input).has_value();
}

/// Draws one layer of the given kind with hyperparameters uniform over the
/// config's sets. `position` is the backbone index the layer will occupy.
LayerSpec sample_layer(LayerKind kind, std::size_t position, const SearchSpaceConfig& config,
                       SplitMix64& rng);

/// Random architecture from the search space, deterministic in its arguments.
/// Throws Error(ExhaustedRetries) when a position admits no valid layer in
/// kMaxResamples draws.
ArchitectureSpec sample(const SearchSpaceConfig& config, int num_classes, std::uint64_t seed);

/// First k backbone layers with the tail. Skips whose source was cut are dropped.
ArchitectureSpec prefix(const ArchitectureSpec& arch, std::size_t k);

}  // namespace accpred
