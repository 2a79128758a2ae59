#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "accpred/archspace.hpp"
#include "accpred/predictor.hpp"
#include "accpred/rng.hpp"

namespace accpred {

/// Architecture mutations; training-related mutations (learning rate,
/// weight resets) have no meaning without training and are absent.
enum class MutationKind {
  InsertConvolution,
  RemoveLayer,
  AlterStride,
  AlterChannels,
  AlterKernelSize,
  AddSkipConnection,
  RemoveSkipConnection,
  Identity,
};
inline constexpr std::size_t kMutationKinds = 8;

std::string_view to_string(MutationKind kind);

struct Individual {
  std::uint64_t id = 0;
  ArchitectureSpec arch;
  double predicted_accuracy = 0.0;
  bool operator==(const Individual&) const = default;
};

using Population = std::vector<Individual>;

struct EvolutionConfig {
  std::size_t population_size = 1000;
  std::size_t steps = 20000;
  std::uint64_t seed = 0;
  std::array<double, kMutationKinds> mutation_weights{1, 1, 1, 1, 1, 1, 1, 1};

  /// Throws Error(InvalidConfig).
  void check() const;
};

/// Applies `kind` to a copy of `arch`. Results always validate: a kind that
/// cannot apply, or whose every attempt (kMutationAttempts) is invalid,
/// degrades to Identity. Insertions stop at space.max_backbone_layers.
ArchitectureSpec mutate(const ArchitectureSpec& arch, MutationKind kind,
                        const SearchSpaceConfig& space, SplitMix64& rng);
inline constexpr int kMutationAttempts = 10;

/// Weighted draw over MutationKind.
MutationKind draw_mutation(const std::array<double, kMutationKinds>& weights, SplitMix64& rng);

/// population_size one-layer networks scored by the predictor.
Population init_population(const EvolutionConfig& cfg, const SearchSpaceConfig& space,
                           int num_classes, const PredictorModel& model, double dcn);

struct EvolutionResult {
  Population population;
  Individual best;
  std::vector<double> history;  // best predicted accuracy after each step
};

using StepObserver = std::function<void(std::size_t step, const Population&)>;

/// Pairwise tournaments: the strictly less accurate of two distinct uniform
/// draws is removed (on a tie, the smaller id); the winner's mutant takes the
/// freed slot.
EvolutionResult run_evolution(const EvolutionConfig& cfg, const SearchSpaceConfig& space,
                              int num_classes, const PredictorModel& model, double dcn,
                              const StepObserver& observer = {});

/// The k most accurate individuals, descending (ties by ascending id).
std::vector<Individual> top_k(const Population& population, std::size_t k);

}  // namespace accpred
