#include "accpred/encoding.hpp"

#include <cmath>
#include <string>

namespace accpred {

std::size_t one_hot_slot(LayerKind kind) {
  switch (kind) {
    case LayerKind::Convolution: return 0;
    case LayerKind::Pooling:
    case LayerKind::GlobalPooling: return 1;
    case LayerKind::BatchNorm: return 2;
    case LayerKind::Dropout: return 3;
    case LayerKind::ResidualBlock: return 4;
    case LayerKind::SkipConnection: return 5;
    case LayerKind::FullyConnected: return 6;
  }
  return 0;
}

EncodingVector encode_layer(const ArchitectureSpec& arch, std::size_t index,
                            const ShapeTrace& trace, double accuracy_field) {
  if (index >= arch.effective_length() || index >= trace.layers.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "layer index " + std::to_string(index));
  }
  const LayerTrace& t = trace.layers[index];
  EncodingVector v{};
  v[one_hot_slot(kind_of(arch.effective_layer(index)))] = 1.0;
  v[feature::kHeightRatio] = static_cast<double>(t.output.height) / t.input.height;
  v[feature::kDepthRatio] = static_cast<double>(t.output.channels) / t.input.channels;
  v[feature::kWeights] = static_cast<double>(t.cost.params);
  v[feature::kDepth] = static_cast<double>(t.depth);
  v[feature::kFlops] = static_cast<double>(t.cumulative_flops);
  v[feature::kMemory] = static_cast<double>(t.cumulative_memory_bytes);
  v[feature::kAccuracy] = accuracy_field;
  return v;
}

Standardizer::Standardizer(const EncodingVector& means, const EncodingVector& stds)
    : means_(means), stds_(stds) {
  for (double s : stds_) {
    if (!(s >= 0.0) || !std::isfinite(s))
      throw Error(ErrorCode::ModelDimensionMismatch, "standard deviations must be finite and >= 0");
  }
  for (double m : means_) {
    if (!std::isfinite(m)) throw Error(ErrorCode::ModelDimensionMismatch, "means must be finite");
  }
}

Standardizer Standardizer::fit(std::span<const EncodingVector> vectors) {
  if (vectors.empty()) throw Error(ErrorCode::EmptyInput, "cannot fit a standardizer on no data");
  const double n = static_cast<double>(vectors.size());
  EncodingVector mean{}, sd{};
  for (const auto& v : vectors)
    for (std::size_t j = 0; j < kEncodingSize; ++j) mean[j] += v[j];
  for (double& m : mean) m /= n;
  for (const auto& v : vectors)
    for (std::size_t j = 0; j < kEncodingSize; ++j) sd[j] += (v[j] - mean[j]) * (v[j] - mean[j]);
  for (std::size_t j = 0; j < kEncodingSize; ++j) {
    sd[j] = std::sqrt(sd[j] / n);
    // A constant feature has exactly zero spread; rounding in the mean must not fake one.
    bool constant = true;
    for (const auto& v : vectors) constant = constant && v[j] == vectors.front()[j];
    if (constant) {
      mean[j] = vectors.front()[j];
      sd[j] = 0.0;
    }
  }
  return Standardizer(mean, sd);
}

EncodingVector Standardizer::apply(const EncodingVector& v) const {
  EncodingVector z;
  for (std::size_t j = 0; j < kEncodingSize; ++j) {
    z[j] = v[j] - means_[j];
    if (stds_[j] > 0.0) z[j] /= stds_[j];
  }
  return z;
}

EncodingVector Standardizer::invert(const EncodingVector& z) const {
  EncodingVector v;
  for (std::size_t j = 0; j < kEncodingSize; ++j)
    v[j] = (stds_[j] > 0.0 ? z[j] * stds_[j] : z[j]) + means_[j];
  return v;
}

}  // namespace accpred
