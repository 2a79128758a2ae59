#include "accpred/evolve.hpp"

#include <algorithm>
#include <string>

namespace accpred {
namespace {

struct Tunable {
  bool stride = false, channels = false, kernel = false;
};

Tunable tunable(const LayerSpec& l) {
  switch (kind_of(l)) {
    case LayerKind::Convolution:
    case LayerKind::ResidualBlock: return {true, true, true};
    case LayerKind::Pooling: return {true, false, true};
    default: return {};
  }
}

template <typename Pred>
std::vector<std::size_t> positions_where(const ArchitectureSpec& a, Pred pred) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (pred(a.layers[i])) out.push_back(i);
  return out;
}

// Shifts skip sources after inserting at `pos`.
void reindex_after_insert(ArchitectureSpec& a, std::size_t pos) {
  for (std::size_t i = pos + 1; i < a.layers.size(); ++i)
    if (auto* s = std::get_if<SkipConnection>(&a.layers[i]))
      if (s->source_index >= static_cast<int>(pos)) ++s->source_index;
}

// Removes layer `pos`, every skip that (transitively) reads from it, and
// renumbers the remaining skip sources.
void remove_at(ArchitectureSpec& a, std::size_t pos) {
  const std::size_t L = a.layers.size();
  std::vector<bool> removed(L, false);
  removed[pos] = true;
  for (std::size_t i = pos + 1; i < L; ++i) {
    const auto* s = std::get_if<SkipConnection>(&a.layers[i]);
    if (s && s->source_index >= 0 && static_cast<std::size_t>(s->source_index) < L &&
        removed[static_cast<std::size_t>(s->source_index)])
      removed[i] = true;
  }
  std::vector<int> new_index(L, -1);
  std::vector<LayerSpec> kept;
  for (std::size_t i = 0; i < L; ++i) {
    if (removed[i]) continue;
    LayerSpec l = a.layers[i];
    if (auto* s = std::get_if<SkipConnection>(&l)) s->source_index = new_index[static_cast<std::size_t>(s->source_index)];
    new_index[i] = static_cast<int>(kept.size());
    kept.push_back(std::move(l));
  }
  a.layers = std::move(kept);
}

std::optional<ArchitectureSpec> try_mutate(const ArchitectureSpec& arch, MutationKind kind,
                                           const SearchSpaceConfig& space, SplitMix64& rng) {
  ArchitectureSpec a = arch;
  const std::size_t L = a.layers.size();
  switch (kind) {
    case MutationKind::Identity:
      return a;
    case MutationKind::InsertConvolution: {
      if (L >= static_cast<std::size_t>(space.max_backbone_layers)) return std::nullopt;
      const std::size_t pos = rng.below(L + 1);
      a.layers.insert(a.layers.begin() + static_cast<std::ptrdiff_t>(pos),
                      sample_layer(LayerKind::Convolution, pos, space, rng));
      reindex_after_insert(a, pos);
      return a;
    }
    case MutationKind::RemoveLayer: {
      if (L <= 1) return std::nullopt;
      remove_at(a, rng.below(L));
      if (a.layers.empty()) return std::nullopt;
      return a;
    }
    case MutationKind::AlterStride:
    case MutationKind::AlterChannels:
    case MutationKind::AlterKernelSize: {
      const auto candidates = positions_where(a, [kind](const LayerSpec& l) {
        const Tunable t = tunable(l);
        return kind == MutationKind::AlterStride     ? t.stride
               : kind == MutationKind::AlterChannels ? t.channels
                                                     : t.kernel;
      });
      if (candidates.empty()) return std::nullopt;
      LayerSpec& l = a.layers[candidates[rng.below(candidates.size())]];
      const int stride = space.strides[rng.below(space.strides.size())];
      const int channels = space.min_channels + static_cast<int>(rng.below(
                               static_cast<std::uint64_t>(space.max_channels - space.min_channels + 1)));
      const bool pool = std::holds_alternative<Pooling>(l);
      const auto& kernels = pool ? space.pool_kernel_sizes : space.kernel_sizes;
      const int kernel = kernels[rng.below(kernels.size())];
      std::visit(
          [&](auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<T, Convolution> || std::is_same_v<T, ResidualBlock> ||
                          std::is_same_v<T, Pooling>) {
              if (kind == MutationKind::AlterStride) layer.stride = stride;
              if (kind == MutationKind::AlterKernelSize) layer.kernel_size = kernel;
              if constexpr (!std::is_same_v<T, Pooling>) {
                if (kind == MutationKind::AlterChannels) layer.out_channels = channels;
              }
            }
          },
          l);
      return a;
    }
    case MutationKind::AddSkipConnection: {
      if (L < 1 || L >= static_cast<std::size_t>(space.max_backbone_layers)) return std::nullopt;
      const std::size_t pos = 1 + rng.below(L);  // a skip needs at least one earlier layer
      const int source = static_cast<int>(rng.below(pos));
      a.layers.insert(a.layers.begin() + static_cast<std::ptrdiff_t>(pos), SkipConnection{source});
      reindex_after_insert(a, pos);
      return a;
    }
    case MutationKind::RemoveSkipConnection: {
      const auto skips = positions_where(
          a, [](const LayerSpec& l) { return std::holds_alternative<SkipConnection>(l); });
      if (skips.empty() || L <= 1) return std::nullopt;
      remove_at(a, skips[rng.below(skips.size())]);
      if (a.layers.empty()) return std::nullopt;
      return a;
    }
  }
  return std::nullopt;
}

}  // namespace

std::string_view to_string(MutationKind kind) {
  switch (kind) {
    case MutationKind::InsertConvolution: return "InsertConvolution";
    case MutationKind::RemoveLayer: return "RemoveLayer";
    case MutationKind::AlterStride: return "AlterStride";
    case MutationKind::AlterChannels: return "AlterChannels";
    case MutationKind::AlterKernelSize: return "AlterKernelSize";
    case MutationKind::AddSkipConnection: return "AddSkipConnection";
    case MutationKind::RemoveSkipConnection: return "RemoveSkipConnection";
    case MutationKind::Identity: return "Identity";
  }
  return "Unknown";
}

void EvolutionConfig::check() const {
  if (population_size < 2) throw Error(ErrorCode::InvalidConfig, "population_size must be >= 2");
  double total = 0.0;
  for (double w : mutation_weights) {
    if (!(w >= 0.0)) throw Error(ErrorCode::InvalidConfig, "mutation weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidConfig, "mutation weights sum to zero");
}

ArchitectureSpec mutate(const ArchitectureSpec& arch, MutationKind kind,
                        const SearchSpaceConfig& space, SplitMix64& rng) {
  for (int attempt = 0; attempt < kMutationAttempts; ++attempt) {
    auto candidate = try_mutate(arch, kind, space, rng);
    if (!candidate) break;  // inapplicable
    if (is_valid(*candidate)) return std::move(*candidate);
  }
  return arch;
}

MutationKind draw_mutation(const std::array<double, kMutationKinds>& weights, SplitMix64& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = rng.uniform() * total;
  for (std::size_t k = 0; k < kMutationKinds; ++k) {
    if (u < weights[k]) return static_cast<MutationKind>(k);
    u -= weights[k];
  }
  // Rounding left u at the upper edge: the last kind with positive weight.
  for (std::size_t k = kMutationKinds; k-- > 0;)
    if (weights[k] > 0.0) return static_cast<MutationKind>(k);
  return MutationKind::Identity;
}

Population init_population(const EvolutionConfig& cfg, const SearchSpaceConfig& space,
                           int num_classes, const PredictorModel& model, double dcn) {
  cfg.check();
  SearchSpaceConfig single = space;
  single.max_backbone_layers = 1;
  Population pop;
  pop.reserve(cfg.population_size);
  const std::uint64_t init_seed = derive_seed(cfg.seed, 0);
  for (std::size_t k = 0; k < cfg.population_size; ++k) {
    Individual ind;
    ind.id = k;
    ind.arch = sample(single, num_classes, derive_seed(init_seed, k));
    ind.predicted_accuracy = predict(ind.arch, dcn, num_classes, model);
    pop.push_back(std::move(ind));
  }
  return pop;
}

EvolutionResult run_evolution(const EvolutionConfig& cfg, const SearchSpaceConfig& space,
                              int num_classes, const PredictorModel& model, double dcn,
                              const StepObserver& observer) {
  EvolutionResult result;
  result.population = init_population(cfg, space, num_classes, model, dcn);
  Population& pop = result.population;
  auto better = [](const Individual& a, const Individual& b) {
    return a.predicted_accuracy > b.predicted_accuracy ||
           (a.predicted_accuracy == b.predicted_accuracy && a.id > b.id);
  };
  std::size_t best = 0;
  for (std::size_t k = 1; k < pop.size(); ++k)
    if (better(pop[k], pop[best])) best = k;

  SplitMix64 rng(derive_seed(cfg.seed, 1));
  std::uint64_t next_id = pop.size();
  result.history.reserve(cfg.steps);
  const std::size_t n = pop.size();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const std::size_t a = rng.below(n);
    std::size_t b = rng.below(n - 1);
    if (b >= a) ++b;
    // The loser has strictly lower accuracy, or equal accuracy and the smaller id.
    const std::size_t winner = better(pop[a], pop[b]) ? a : b;
    const std::size_t loser = winner == a ? b : a;

    const MutationKind kind = draw_mutation(cfg.mutation_weights, rng);
    Individual child;
    child.id = next_id++;
    child.arch = mutate(pop[winner].arch, kind, space, rng);
    child.predicted_accuracy = predict(child.arch, dcn, num_classes, model);
    pop[loser] = std::move(child);

    if (loser == best) {
      // Unreachable: the argmax wins every tournament.
      best = 0;
      for (std::size_t k = 1; k < n; ++k)
        if (better(pop[k], pop[best])) best = k;
    } else if (better(pop[loser], pop[best])) {
      best = loser;
    }
    result.history.push_back(pop[best].predicted_accuracy);
    if (observer) observer(step, pop);
  }
  result.best = pop[best];
  return result;
}

std::vector<Individual> top_k(const Population& population, std::size_t k) {
  std::vector<Individual> sorted = population;
  std::sort(sorted.begin(), sorted.end(), [](const Individual& a, const Individual& b) {
    return a.predicted_accuracy > b.predicted_accuracy ||
           (a.predicted_accuracy == b.predicted_accuracy && a.id < b.id);
  });
  sorted.resize(std::min(k, sorted.size()));
  return sorted;
}

}  // namespace accpred
