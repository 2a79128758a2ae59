#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "accpred/archspace.hpp"

namespace accpred {

/// Cost conventions: a multiply-accumulate is 2 FLOPs, bias FLOPs are ignored,
/// scalars are 4 bytes, memory = parameters + output activations.
struct LayerCost {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::int64_t memory_bytes = 0;
  bool operator==(const LayerCost&) const = default;
};

struct LayerTrace {
  TensorShape input;
  TensorShape output;
  LayerCost cost;
  // Prefix sums over effective layers 0..i.
  std::int64_t cumulative_flops = 0;
  std::int64_t cumulative_memory_bytes = 0;
  std::size_t depth = 0;
  bool operator==(const LayerTrace&) const = default;
};

/// One entry per effective layer (backbone + GlobalPooling + FullyConnected).
struct ShapeTrace {
  std::vector<LayerTrace> layers;
  bool operator==(const ShapeTrace&) const = default;
};

/// Output shape of `layer` applied to `in`, or the reason it cannot be applied.
/// `skip_source` is the output shape of the skip's source layer (skips only).
struct ShapeStep {
  std::optional<TensorShape> output;
  ErrorCode error = ErrorCode::ShapeMismatch;
};
ShapeStep output_shape(const LayerSpec& layer, TensorShape in,
                       std::optional<TensorShape> skip_source = std::nullopt);

/// Stride s >= 1 of a 1x1 same-padded projection mapping `from` onto the
/// spatial size of `to`, if one exists.
std::optional<int> projection_stride(TensorShape from, TensorShape to);

/// Non-throwing core of infer(); fills `out` when the architecture is valid.
std::optional<ValidationError> try_infer(const ArchitectureSpec& arch, TensorShape input,
                                         ShapeTrace* out);

/// Throws Error(ShapeMismatch / SpatialCollapse / BadSkipSource / EmptyArchitecture).
ShapeTrace infer(const ArchitectureSpec& arch, TensorShape input = kCifarInput);

LayerCost layer_cost(const LayerSpec& layer, TensorShape in, TensorShape out);

}  // namespace accpred
