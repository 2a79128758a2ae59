#include "accpred/archspace.hpp"

#include <array>
#include <string>

#include "accpred/shape.hpp"

namespace accpred {
namespace {

constexpr std::array<std::string_view, 8> kKindNames{
    "Convolution",    "Pooling",        "BatchNorm",      "Dropout",
    "ResidualBlock",  "SkipConnection", "FullyConnected", "GlobalPooling"};

template <typename T>
const T& pick(const std::vector<T>& values, SplitMix64& rng) {
  return values[rng.below(values.size())];
}

int pick_channels(const SearchSpaceConfig& c, SplitMix64& rng) {
  return c.min_channels + static_cast<int>(rng.below(
                              static_cast<std::uint64_t>(c.max_channels - c.min_channels + 1)));
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyArchitecture: return "EmptyArchitecture";
    case ErrorCode::SpatialCollapse: return "SpatialCollapse";
    case ErrorCode::BadSkipSource: return "BadSkipSource";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ExhaustedRetries: return "ExhaustedRetries";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::ModelDimensionMismatch: return "ModelDimensionMismatch";
    case ErrorCode::InvalidArchitecture: return "InvalidArchitecture";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(LayerKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<LayerKind> layer_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<LayerKind>(i);
  return std::nullopt;
}

LayerSpec ArchitectureSpec::effective_layer(std::size_t i) const {
  if (i < layers.size()) return layers[i];
  if (i == layers.size()) return GlobalPooling{};
  if (i == layers.size() + 1) return FullyConnected{num_classes};
  throw Error(ErrorCode::IndexOutOfRange, "effective layer " + std::to_string(i));
}

void SearchSpaceConfig::check() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (max_backbone_layers < 1) fail("max_backbone_layers must be >= 1");
  if (min_channels < 1 || max_channels < min_channels) fail("bad channel range");
  if (kernel_sizes.empty() || strides.empty() || pool_kernel_sizes.empty() ||
      dropout_rates.empty() || allowed_kinds.empty())
    fail("empty choice set");
  for (int k : kernel_sizes)
    if (k < 1 || k % 2 == 0) fail("kernel sizes must be odd and positive");
  for (int k : pool_kernel_sizes)
    if (k < 1) fail("pool kernel sizes must be positive");
  for (int s : strides)
    if (s != 1 && s != 2) fail("strides must be 1 or 2");
  for (double r : dropout_rates)
    if (!(r > 0.0 && r < 1.0)) fail("dropout rates must lie in (0, 1)");
  if (max_repeat < 1 || max_repeat > 6) fail("max_repeat must lie in [1, 6]");
}

std::optional<ValidationError> check_architecture(const ArchitectureSpec& arch,
                                                  TensorShape input) {
  // Hyperparameter domains first; shape inference covers the rest.
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const bool ok = std::visit(
        [](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Convolution>) {
            return l.kernel_size >= 1 && (l.stride == 1 || l.stride == 2) && l.out_channels >= 1;
          } else if constexpr (std::is_same_v<T, Pooling>) {
            return l.kernel_size >= 1 && l.stride >= 1;
          } else if constexpr (std::is_same_v<T, Dropout>) {
            return l.rate > 0.0 && l.rate < 1.0;
          } else if constexpr (std::is_same_v<T, ResidualBlock>) {
            return l.kernel_size >= 1 && (l.stride == 1 || l.stride == 2) &&
                   l.out_channels >= 1 && l.repeat >= 1 && l.repeat <= 6;
          } else if constexpr (std::is_same_v<T, FullyConnected>) {
            return l.units >= 1;
          } else {
            return true;
          }
        },
        arch.layers[i]);
    if (!ok) return ValidationError{ErrorCode::InvalidArchitecture, i};
  }
  return try_infer(arch, input, nullptr);
}

void validate(const ArchitectureSpec& arch, TensorShape input) {
  if (input.height < 1 || input.width < 1 || input.channels < 1)
    throw Error(ErrorCode::InvalidConfig, "input shape must be positive");
  if (auto err = check_architecture(arch, input)) {
    throw Error(err->code, "invalid layer at backbone index " + std::to_string(err->layer_index));
  }
}

LayerSpec sample_layer(LayerKind kind, std::size_t position, const SearchSpaceConfig& c,
                       SplitMix64& rng) {
  switch (kind) {
    case LayerKind::Convolution: {
      Convolution l;
      l.kernel_size = pick(c.kernel_sizes, rng);
      l.stride = pick(c.strides, rng);
      l.padding = rng.below(2) == 0 ? Padding::Same : Padding::Valid;
      l.out_channels = pick_channels(c, rng);
      l.batch_norm = rng.below(2) == 1;
      return l;
    }
    case LayerKind::Pooling: {
      Pooling l;
      l.mode = rng.below(2) == 0 ? PoolMode::Max : PoolMode::Avg;
      l.kernel_size = pick(c.pool_kernel_sizes, rng);
      l.stride = pick(c.strides, rng);
      return l;
    }
    case LayerKind::BatchNorm:
      return BatchNorm{};
    case LayerKind::Dropout:
      return Dropout{pick(c.dropout_rates, rng)};
    case LayerKind::ResidualBlock: {
      ResidualBlock l;
      l.kernel_size = pick(c.kernel_sizes, rng);
      l.stride = pick(c.strides, rng);
      l.out_channels = pick_channels(c, rng);
      l.repeat = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.max_repeat)));
      return l;
    }
    case LayerKind::SkipConnection:
      // Position 0 has no legal source; the caller's validity check rejects it.
      return SkipConnection{position == 0 ? 0 : static_cast<int>(rng.below(position))};
    case LayerKind::FullyConnected:
      return FullyConnected{pick_channels(c, rng)};
    case LayerKind::GlobalPooling:
      return GlobalPooling{};
  }
  throw Error(ErrorCode::InvalidConfig, "unknown layer kind");
}

ArchitectureSpec sample(const SearchSpaceConfig& config, int num_classes, std::uint64_t seed) {
  config.check();
  if (num_classes < 1) throw Error(ErrorCode::InvalidConfig, "num_classes must be positive");
  SplitMix64 rng(seed);
  ArchitectureSpec arch;
  arch.num_classes = num_classes;
  const auto length =
      1 + rng.below(static_cast<std::uint64_t>(config.max_backbone_layers));
  arch.layers.reserve(length);
  for (std::size_t pos = 0; pos < length; ++pos) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxResamples && !placed; ++attempt) {
      const LayerKind kind = pick(config.allowed_kinds, rng);
      arch.layers.push_back(sample_layer(kind, pos, config, rng));
      placed = is_valid(arch);
      if (!placed) arch.layers.pop_back();
    }
    if (!placed) {
      throw Error(ErrorCode::ExhaustedRetries,
                  "no valid layer for position " + std::to_string(pos) + " after " +
                      std::to_string(kMaxResamples) + " draws");
    }
  }
  return arch;
}

ArchitectureSpec prefix(const ArchitectureSpec& arch, std::size_t k) {
  if (k < 1 || k > arch.layers.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "prefix length " + std::to_string(k) +
                                                " outside [1, " +
                                                std::to_string(arch.layers.size()) + "]");
  }
  ArchitectureSpec out;
  out.num_classes = arch.num_classes;
  std::vector<int> new_index(k, -1);
  for (std::size_t i = 0; i < k; ++i) {
    LayerSpec layer = arch.layers[i];
    if (auto* skip = std::get_if<SkipConnection>(&layer)) {
      const int src = skip->source_index;
      if (src < 0 || static_cast<std::size_t>(src) >= i || new_index[src] < 0) continue;
      skip->source_index = new_index[src];
    }
    new_index[i] = static_cast<int>(out.layers.size());
    out.layers.push_back(layer);
  }
  return out;
}

}  // namespace accpred
