#include "accpred/shape.hpp"

#include <algorithm>
#include <string>
#include <type_traits>

namespace accpred {
namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

std::optional<int> window_extent(int size, int kernel, int stride, Padding padding) {
  if (padding == Padding::Same) return ceil_div(size, stride);
  if (size < kernel) return std::nullopt;
  return (size - kernel) / stride + 1;
}

std::int64_t volume(TensorShape s) {
  return std::int64_t{s.height} * s.width * s.channels;
}

// Convolution with optional fused batch norm.
LayerCost conv_cost(int k, std::int64_t c_in, std::int64_t c_out, bool bn, TensorShape out) {
  const std::int64_t hw = std::int64_t{out.height} * out.width;
  LayerCost c;
  c.params = std::int64_t{k} * k * c_in * c_out + c_out;
  c.flops = 2 * std::int64_t{k} * k * c_in * c_out * hw;
  if (bn) {
    c.params += 2 * c_out;
    c.flops += 2 * hw * c_out;
  }
  return c;
}

}  // namespace

std::optional<int> projection_stride(TensorShape from, TensorShape to) {
  for (int s = 1; s <= std::max(from.height, from.width); ++s) {
    const int h = ceil_div(from.height, s);
    const int w = ceil_div(from.width, s);
    if (h == to.height && w == to.width) return s;
    if (h < to.height && w < to.width) break;
  }
  return std::nullopt;
}

ShapeStep output_shape(const LayerSpec& layer, TensorShape in,
                       std::optional<TensorShape> skip_source) {
  return std::visit(
      [&](const auto& l) -> ShapeStep {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Convolution>) {
          auto h = window_extent(in.height, l.kernel_size, l.stride, l.padding);
          auto w = window_extent(in.width, l.kernel_size, l.stride, l.padding);
          if (!h || !w) return {std::nullopt, ErrorCode::SpatialCollapse};
          return {TensorShape{*h, *w, l.out_channels}};
        } else if constexpr (std::is_same_v<T, Pooling>) {
          auto h = window_extent(in.height, l.kernel_size, l.stride, Padding::Valid);
          auto w = window_extent(in.width, l.kernel_size, l.stride, Padding::Valid);
          if (!h || !w) return {std::nullopt, ErrorCode::SpatialCollapse};
          return {TensorShape{*h, *w, in.channels}};
        } else if constexpr (std::is_same_v<T, ResidualBlock>) {
          return {TensorShape{ceil_div(in.height, l.stride), ceil_div(in.width, l.stride),
                              l.out_channels}};
        } else if constexpr (std::is_same_v<T, SkipConnection>) {
          if (!skip_source) return {std::nullopt, ErrorCode::BadSkipSource};
          if (!projection_stride(*skip_source, in)) return {std::nullopt, ErrorCode::ShapeMismatch};
          return {in};
        } else if constexpr (std::is_same_v<T, FullyConnected>) {
          return {TensorShape{1, 1, l.units}};
        } else if constexpr (std::is_same_v<T, GlobalPooling>) {
          return {TensorShape{1, 1, in.channels}};
        } else {
          return {in};  // BatchNorm, Dropout
        }
      },
      layer);
}

LayerCost layer_cost(const LayerSpec& layer, TensorShape in, TensorShape out) {
  LayerCost c = std::visit(
      [&](const auto& l) -> LayerCost {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Convolution>) {
          return conv_cost(l.kernel_size, in.channels, l.out_channels, l.batch_norm, out);
        } else if constexpr (std::is_same_v<T, BatchNorm>) {
          return {2 * std::int64_t{in.channels}, 2 * volume(in), 0};
        } else if constexpr (std::is_same_v<T, FullyConnected>) {
          const std::int64_t fan_in = volume(in);
          return {fan_in * l.units + l.units, 2 * fan_in * l.units, 0};
        } else if constexpr (std::is_same_v<T, Pooling>) {
          return {0, std::int64_t{l.kernel_size} * l.kernel_size * volume(out), 0};
        } else if constexpr (std::is_same_v<T, ResidualBlock>) {
          LayerCost total;
          const std::int64_t hw = std::int64_t{out.height} * out.width;
          for (int r = 0; r < l.repeat; ++r) {
            const int c_in = r == 0 ? in.channels : l.out_channels;
            const LayerCost a = conv_cost(l.kernel_size, c_in, l.out_channels, true, out);
            const LayerCost b = conv_cost(l.kernel_size, l.out_channels, l.out_channels, true, out);
            total.params += a.params + b.params;
            total.flops += a.flops + b.flops + hw * l.out_channels;
            if (r == 0 && (c_in != l.out_channels || l.stride != 1)) {
              const LayerCost proj = conv_cost(1, c_in, l.out_channels, false, out);
              total.params += proj.params;
              total.flops += proj.flops;
            }
          }
          return total;
        } else {
          // Dropout, SkipConnection, GlobalPooling: one op per input element.
          return {0, volume(in), 0};
        }
      },
      layer);
  c.memory_bytes = 4 * (c.params + volume(out));
  return c;
}

std::optional<ValidationError> try_infer(const ArchitectureSpec& arch, TensorShape input,
                                         ShapeTrace* out) {
  if (arch.layers.empty()) return ValidationError{ErrorCode::EmptyArchitecture, 0};
  if (input.height < 1 || input.width < 1 || input.channels < 1 || arch.num_classes < 1)
    return ValidationError{ErrorCode::ShapeMismatch, 0};

  std::vector<TensorShape> outputs;
  outputs.reserve(arch.effective_length());
  ShapeTrace trace;
  if (out) trace.layers.reserve(arch.effective_length());

  TensorShape current = input;
  for (std::size_t i = 0; i < arch.effective_length(); ++i) {
    const LayerSpec layer = arch.effective_layer(i);
    std::optional<TensorShape> skip_source;
    if (const auto* skip = std::get_if<SkipConnection>(&layer)) {
      if (skip->source_index < 0 || static_cast<std::size_t>(skip->source_index) >= i)
        return ValidationError{ErrorCode::BadSkipSource, i};
      skip_source = outputs[static_cast<std::size_t>(skip->source_index)];
    }
    const ShapeStep step = output_shape(layer, current, skip_source);
    if (!step.output) return ValidationError{step.error, i};
    if (out) {
      LayerTrace t;
      t.input = current;
      t.output = *step.output;
      t.cost = layer_cost(layer, current, *step.output);
      const LayerTrace* prev = trace.layers.empty() ? nullptr : &trace.layers.back();
      t.cumulative_flops = t.cost.flops + (prev ? prev->cumulative_flops : 0);
      t.cumulative_memory_bytes = t.cost.memory_bytes + (prev ? prev->cumulative_memory_bytes : 0);
      t.depth = i + 1;
      trace.layers.push_back(t);
    }
    outputs.push_back(*step.output);
    current = *step.output;
  }
  if (out) *out = std::move(trace);
  return std::nullopt;
}

ShapeTrace infer(const ArchitectureSpec& arch, TensorShape input) {
  ShapeTrace trace;
  if (auto err = try_infer(arch, input, &trace)) {
    throw Error(err->code, "architecture rejected at layer " + std::to_string(err->layer_index));
  }
  return trace;
}

}  // namespace accpred
