#pragma once

#include <array>
#include <span>

#include "accpred/archspace.hpp"
#include "accpred/shape.hpp"

namespace accpred {

inline constexpr std::size_t kEncodingSize = 14;

/// Feature layout:
///   [0..6]  one-hot layer type: conv, pooling (incl. global), batch norm,
///           dropout, residual block, skip connection, fully connected
///   [7]     output height / input height
///   [8]     output channels / input channels
///   [9]     learnable parameters of the layer
///   [10]    layers from the input up to and including this one
///   [11]    cumulative inference FLOPs of the prefix sub-network
///   [12]    cumulative inference memory (bytes) of the prefix sub-network
///   [13]    accuracy field
using EncodingVector = std::array<double, kEncodingSize>;

namespace feature {
inline constexpr std::size_t kHeightRatio = 7;
inline constexpr std::size_t kDepthRatio = 8;
inline constexpr std::size_t kWeights = 9;
inline constexpr std::size_t kDepth = 10;
inline constexpr std::size_t kFlops = 11;
inline constexpr std::size_t kMemory = 12;
inline constexpr std::size_t kAccuracy = 13;
}  // namespace feature

std::size_t one_hot_slot(LayerKind kind);

/// Encodes effective layer `index` (zero-based; the two tail layers follow
/// the backbone). Throws Error(IndexOutOfRange).
EncodingVector encode_layer(const ArchitectureSpec& arch, std::size_t index,
                            const ShapeTrace& trace, double accuracy_field);

class Standardizer {
 public:
  Standardizer() { stds_.fill(0.0); means_.fill(0.0); }
  Standardizer(const EncodingVector& means, const EncodingVector& stds);

  /// Population mean and standard deviation per feature. Throws Error(EmptyInput).
  static Standardizer fit(std::span<const EncodingVector> vectors);

  /// (v - mean) / std, or v - mean where std == 0.
  EncodingVector apply(const EncodingVector& v) const;
  EncodingVector invert(const EncodingVector& z) const;

  const EncodingVector& means() const { return means_; }
  const EncodingVector& stds() const { return stds_; }

  bool operator==(const Standardizer&) const = default;

 private:
  EncodingVector means_;
  EncodingVector stds_;
};

}  // namespace accpred
