#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "accpred/encoding.hpp"
#include "accpred/expdb.hpp"
#include "accpred/nn.hpp"

namespace accpred {

struct PredictorConfig {
  int input_dim = static_cast<int>(kEncodingSize);
  int lstm1_hidden = 50;
  int lstm2_hidden = 100;
  int head_input_dim() const { return lstm2_hidden + 1; }
  bool operator==(const PredictorConfig&) const = default;
};

struct TrainingConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 512;
  int epochs = 50;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  double validation_fraction = 0.1;
};

/// Two consecutive layers: `first` carries the accuracy reached by the prefix
/// ending at it, `second` carries 0. The target is the next prefix's accuracy.
struct TrainingSample {
  EncodingVector first;
  EncodingVector second;
  double dcn = 0.0;
  double target = 0.0;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  std::size_t train_samples = 0;
  std::size_t validation_samples = 0;
  double final_train_loss = 0.0;
  double final_validation_loss = 0.0;  // NaN when no validation split
  std::vector<double> train_loss_history;
  bool operator==(const TrainingMetadata&) const;
};

class PredictorModel {
 public:
  PredictorModel(nn::StackedLstmRegressor network, Standardizer standardizer,
                 PredictorConfig config, TrainingMetadata metadata = {});

  /// One evaluation on raw (unstandardized) encodings; fresh recurrent state.
  double predict_pair(const EncodingVector& first, const EncodingVector& second,
                      double dcn) const;

  const nn::StackedLstmRegressor& network() const { return network_; }
  const Standardizer& standardizer() const { return standardizer_; }
  const PredictorConfig& config() const { return config_; }
  const TrainingMetadata& metadata() const { return metadata_; }

  nlohmann::json to_json() const;
  /// Throws Error(ModelDimensionMismatch) on any dimension or value invariant
  /// violation and Error(ParseError) on malformed documents.
  static PredictorModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static PredictorModel load(const std::filesystem::path& path);

 private:
  nn::StackedLstmRegressor network_;
  Standardizer standardizer_;
  PredictorConfig config_;
  TrainingMetadata metadata_;
};

/// L - 1 samples per record of backbone length L. The first pair's accuracy
/// field is chance level (1 / num_classes); later pairs use recorded accuracies.
std::vector<TrainingSample> build_training_samples(std::span<const ExperimentRecord> records,
                                                   const DatasetRegistry& registry);

using EpochCallback = std::function<void(int epoch, double train_loss, double validation_loss)>;

/// Minimizes mean squared error with RMSprop over seeded shuffled mini-batches.
/// Throws Error(EmptyInput), or Error(DegenerateInput) if the loss diverges.
PredictorModel train(std::span<const TrainingSample> samples, const TrainingConfig& tcfg,
                     const PredictorConfig& pcfg = {}, const EpochCallback& on_epoch = {});

/// Mean squared error of single-pair predictions over `samples`.
double sample_mse(const PredictorModel& model, std::span<const TrainingSample> samples);

/// Layer-by-layer prediction: starting from chance accuracy, each consecutive
/// backbone pair's output becomes the next pair's accuracy field. A one-layer
/// backbone is paired with the tail's fully connected layer.
/// Throws Error(InvalidArchitecture) or Error(ModelDimensionMismatch).
double predict(const ArchitectureSpec& arch, double dcn, int num_classes,
               const PredictorModel& model);

struct BatchPrediction {
  std::vector<std::optional<double>> values;
  std::vector<std::string> errors;  // empty string where the value is present
  double seconds = 0.0;
  double networks_per_second = 0.0;
};

/// predict() over many architectures. With threads > 1 the list is split into
/// contiguous chunks; results keep the input order.
BatchPrediction predict_batch(std::span<const ArchitectureSpec> archs, double dcn,
                              int num_classes, const PredictorModel& model,
                              unsigned threads = 1);

}  // namespace accpred
