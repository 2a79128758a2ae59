#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "accpred/archspace.hpp"

namespace accpred {

struct DatasetMeta {
  std::string id;
  std::string name;
  double dcn = 0.5;  // difficulty characterization number in [0, 1]
  int num_classes = 10;
  bool operator==(const DatasetMeta&) const = default;
};

class DatasetRegistry {
 public:
  DatasetRegistry() = default;
  explicit DatasetRegistry(std::vector<DatasetMeta> datasets);

  /// Throws Error(InvalidConfig) on a duplicate id or out-of-range metadata.
  void add(DatasetMeta meta);
  const DatasetMeta* find(std::string_view id) const;
  /// Throws Error(UnknownDataset).
  const DatasetMeta& at(std::string_view id) const;
  const std::vector<DatasetMeta>& datasets() const { return datasets_; }

  /// {"v": 1, "datasets": [{"id", "name", "dcn", "num_classes"}, ...]}
  static DatasetRegistry load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;
  static DatasetRegistry from_json(const nlohmann::json& j);

 private:
  std::vector<DatasetMeta> datasets_;
};

enum class RecordSource { Synthetic, External };

struct ExperimentRecord {
  std::string dataset_id;
  std::vector<LayerSpec> layers;
  /// Entry k is the accuracy of the prefix with k + 1 backbone layers.
  std::vector<double> prefix_accuracies;
  RecordSource source = RecordSource::Synthetic;
  std::string created_at;  // ISO-8601, UTC
  bool operator==(const ExperimentRecord&) const = default;
};

/// Full architecture of a record, with the tail sized by the dataset's class count.
ArchitectureSpec architecture_of(const ExperimentRecord& record, const DatasetRegistry& registry);

/// Throws Error(UnknownDataset) or Error(InvalidRecord).
void check_record(const ExperimentRecord& record, const DatasetRegistry& registry);

/// One store line (without the newline); keys: v, dataset_id, layers,
/// prefix_accuracies, source, created_at.
std::string record_to_line(const ExperimentRecord& record);
ExperimentRecord record_from_line(std::string_view line);

/// Returns an ISO-8601 timestamp for new records.
using Clock = std::function<std::string()>;
Clock system_clock();
Clock fixed_clock(std::string timestamp);

/// Append-only newline-delimited record file. Each append is one write(2) of
/// complete lines under an exclusive advisory lock, followed by fsync; a torn
/// final line left by a crash is truncated away when the store is opened.
class ExperimentStore {
 public:
  /// Creates the file if missing, then loads and checks every record.
  static ExperimentStore open(const std::filesystem::path& path, DatasetRegistry registry);

  void append(const ExperimentRecord& record);
  void append_all(std::span<const ExperimentRecord> records);

  const std::vector<ExperimentRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const DatasetRegistry& registry() const { return registry_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  ExperimentStore(std::filesystem::path path, DatasetRegistry registry)
      : path_(std::move(path)), registry_(std::move(registry)) {}

  std::filesystem::path path_;
  DatasetRegistry registry_;
  std::vector<ExperimentRecord> records_;
};

struct FilterConfig {
  double tau = 0.05;
};

/// Records whose dataset satisfies |query_dcn - dcn| <= tau, in store order.
std::vector<ExperimentRecord> filter_by_dcn(std::span<const ExperimentRecord> records,
                                            const DatasetRegistry& registry, double query_dcn,
                                            const FilterConfig& cfg = {});

/// Holdout mask over n store positions: exactly floor(fraction * n) positions,
/// the first ones of a seeded Fisher-Yates permutation, are marked true.
std::vector<bool> holdout_mask(std::size_t n, double fraction, std::uint64_t seed);

/// Deterministic stand-in for trained accuracy:
///   acc = 1/Nc + (1 - 1/Nc) (1 - dcn) logistic(z)
///   z   = 0.4 n_conv + 0.6 n_res + 0.2 bn_frac - 0.05 n_layers - 1.5
double pseudo_accuracy(const ArchitectureSpec& arch, double dcn, int num_classes);

/// nets_per_dataset sampled architectures per dataset, labelled with
/// pseudo_accuracy on every prefix. Architecture seed of network n of
/// dataset d: derive_seed(derive_seed(seed, d), n).
std::vector<ExperimentRecord> generate_synthetic_corpus(std::span<const DatasetMeta> datasets,
                                                        std::size_t nets_per_dataset,
                                                        const SearchSpaceConfig& space,
                                                        std::uint64_t seed,
                                                        const Clock& clock = system_clock());

}  // namespace accpred
