#include "accpred/predictor.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "accpred/arch_json.hpp"
#include "accpred/shape.hpp"

namespace accpred {

using nlohmann::json;
using nn::Matrix;
using nn::RowVector;

namespace {

constexpr const char* kGateNames[4] = {"input", "forget", "cell", "output"};

[[noreturn]] void bad_model(const std::string& what) {
  throw Error(ErrorCode::ModelDimensionMismatch, what);
}

json matrix_to_json(const Eigen::Ref<const Matrix>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Eigen::Ref<const nn::Vector>& v) {
  json arr = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) arr.push_back(v(k));
  return arr;
}

double finite_number(const json& v, const char* what) {
  if (!v.is_number()) throw Error(ErrorCode::ParseError, std::string(what) + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) bad_model(std::string(what) + ": non-finite value");
  return d;
}

Matrix matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    bad_model(what + ": expected " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      bad_model(what + ": row " + std::to_string(r) + " must have " + std::to_string(cols) + " columns");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = finite_number(row[static_cast<std::size_t>(c)], what.c_str());
  }
  return m;
}

nn::Vector vector_from_json(const json& j, Eigen::Index size, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size)
    bad_model(what + ": expected " + std::to_string(size) + " values");
  nn::Vector v(size);
  for (Eigen::Index k = 0; k < size; ++k) v(k) = finite_number(j[static_cast<std::size_t>(k)], what.c_str());
  return v;
}

EncodingVector encoding_from_json(const json& j, const char* what) {
  const nn::Vector v = vector_from_json(j, kEncodingSize, what);
  EncodingVector e;
  for (std::size_t k = 0; k < kEncodingSize; ++k) e[k] = v(static_cast<Eigen::Index>(k));
  return e;
}

json lstm_to_json(const nn::LstmParams& p) {
  const auto H = p.hidden();
  json j = json::object();
  for (int gate = 0; gate < 4; ++gate) {
    j[kGateNames[gate]] = {{"W", matrix_to_json(p.W.middleRows(gate * H, H))},
                           {"U", matrix_to_json(p.U.middleRows(gate * H, H))},
                           {"b", vector_to_json(p.b.segment(gate * H, H))}};
  }
  return j;
}

nn::LstmParams lstm_from_json(const json& j, Eigen::Index input_dim, Eigen::Index hidden,
                              const std::string& name) {
  json_field::expect_keys(j, {"input", "forget", "cell", "output"});
  nn::LstmParams p = nn::LstmParams::zeros(input_dim, hidden);
  for (int gate = 0; gate < 4; ++gate) {
    const json& g = j[kGateNames[gate]];
    json_field::expect_keys(g, {"W", "U", "b"});
    const std::string where = name + "." + kGateNames[gate];
    p.W.middleRows(gate * hidden, hidden) = matrix_from_json(g["W"], hidden, input_dim, where + ".W");
    p.U.middleRows(gate * hidden, hidden) = matrix_from_json(g["U"], hidden, hidden, where + ".U");
    p.b.segment(gate * hidden, hidden) = vector_from_json(g["b"], hidden, where + ".b");
  }
  return p;
}

Matrix column(const EncodingVector& v) {
  Matrix m(static_cast<Eigen::Index>(kEncodingSize), 1);
  for (std::size_t k = 0; k < kEncodingSize; ++k) m(static_cast<Eigen::Index>(k), 0) = v[k];
  return m;
}

// Standardized sample matrices, one column per sample.
struct SampleMatrices {
  Matrix first, second;
  RowVector dcn, target;
};

SampleMatrices to_matrices(const Standardizer& s, std::span<const TrainingSample> samples) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto d = static_cast<Eigen::Index>(kEncodingSize);
  SampleMatrices m{Matrix(d, n), Matrix(d, n), RowVector(n), RowVector(n)};
  for (Eigen::Index c = 0; c < n; ++c) {
    const TrainingSample& ts = samples[static_cast<std::size_t>(c)];
    const EncodingVector a = s.apply(ts.first), b = s.apply(ts.second);
    for (Eigen::Index k = 0; k < d; ++k) {
      m.first(k, c) = a[static_cast<std::size_t>(k)];
      m.second(k, c) = b[static_cast<std::size_t>(k)];
    }
    m.dcn(c) = ts.dcn;
    m.target(c) = ts.target;
  }
  return m;
}

double mse_of(const nn::StackedLstmRegressor& net, const SampleMatrices& m) {
  if (m.target.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const Matrix steps[2] = {m.first, m.second};
  const RowVector y = net.predict(steps, m.dcn);
  return (y - m.target).squaredNorm() / static_cast<double>(m.target.size());
}

void shuffle(std::vector<std::size_t>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

bool TrainingMetadata::operator==(const TrainingMetadata& o) const {
  auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
  return seed == o.seed && epochs_run == o.epochs_run && train_samples == o.train_samples &&
         validation_samples == o.validation_samples && same(final_train_loss, o.final_train_loss) &&
         same(final_validation_loss, o.final_validation_loss) &&
         train_loss_history == o.train_loss_history;
}

PredictorModel::PredictorModel(nn::StackedLstmRegressor network, Standardizer standardizer,
                               PredictorConfig config, TrainingMetadata metadata)
    : network_(std::move(network)),
      standardizer_(std::move(standardizer)),
      config_(config),
      metadata_(std::move(metadata)) {
  if (config_.input_dim != static_cast<int>(kEncodingSize))
    bad_model("input_dim must be " + std::to_string(kEncodingSize));
  if (network_.input_dim() != config_.input_dim || network_.hidden1() != config_.lstm1_hidden ||
      network_.hidden2() != config_.lstm2_hidden)
    bad_model("network dimensions disagree with the predictor config");
}

double PredictorModel::predict_pair(const EncodingVector& first, const EncodingVector& second,
                                    double dcn) const {
  const Matrix steps[2] = {column(standardizer_.apply(first)), column(standardizer_.apply(second))};
  RowVector side(1);
  side(0) = dcn;
  return network_.predict(steps, side)(0);
}

json PredictorModel::to_json() const {
  const auto& p = network_.params();
  json j;
  j["v"] = kSchemaVersion;
  j["config"] = {{"input_dim", config_.input_dim},
                 {"lstm1_hidden", config_.lstm1_hidden},
                 {"lstm2_hidden", config_.lstm2_hidden}};
  j["standardizer"] = {{"means", standardizer_.means()}, {"stds", standardizer_.stds()}};
  j["parameters"] = {{"lstm1", lstm_to_json(p.lstm1)},
                     {"lstm2", lstm_to_json(p.lstm2)},
                     {"head", {{"w", vector_to_json(p.head.w.transpose())}, {"b", p.head.b}}}};
  json history = json::array();
  for (double l : metadata_.train_loss_history) history.push_back(l);
  auto nullable = [](double d) { return std::isnan(d) ? json(nullptr) : json(d); };
  j["training"] = {{"seed", metadata_.seed},
                   {"epochs_run", metadata_.epochs_run},
                   {"train_samples", metadata_.train_samples},
                   {"validation_samples", metadata_.validation_samples},
                   {"final_train_loss", nullable(metadata_.final_train_loss)},
                   {"final_validation_loss", nullable(metadata_.final_validation_loss)},
                   {"train_loss_history", history}};
  return j;
}

PredictorModel PredictorModel::from_json(const json& j) {
  using namespace json_field;
  expect_keys(j, {"v", "config", "standardizer", "parameters", "training"});
  expect_version(j);

  const json& c = j["config"];
  expect_keys(c, {"input_dim", "lstm1_hidden", "lstm2_hidden"});
  PredictorConfig cfg;
  auto dim = [&](const char* key) {
    const auto v = integer(c, key);
    if (v < 1 || v > 100000) bad_model(std::string("config.") + key + " out of range");
    return static_cast<int>(v);
  };
  cfg.input_dim = dim("input_dim");
  cfg.lstm1_hidden = dim("lstm1_hidden");
  cfg.lstm2_hidden = dim("lstm2_hidden");
  if (cfg.input_dim != static_cast<int>(kEncodingSize))
    bad_model("config.input_dim must be " + std::to_string(kEncodingSize));

  const json& s = j["standardizer"];
  expect_keys(s, {"means", "stds"});
  const EncodingVector means = encoding_from_json(s["means"], "standardizer.means");
  const EncodingVector stds = encoding_from_json(s["stds"], "standardizer.stds");
  for (double sd : stds)
    if (sd < 0.0) bad_model("standardizer.stds must be >= 0");
  Standardizer standardizer(means, stds);

  const json& p = j["parameters"];
  expect_keys(p, {"lstm1", "lstm2", "head"});
  nn::StackedParams params;
  params.lstm1 = lstm_from_json(p["lstm1"], cfg.input_dim, cfg.lstm1_hidden, "lstm1");
  params.lstm2 = lstm_from_json(p["lstm2"], cfg.lstm1_hidden, cfg.lstm2_hidden, "lstm2");
  const json& head = p["head"];
  expect_keys(head, {"w", "b"});
  params.head.w = vector_from_json(head["w"], cfg.head_input_dim(), "head.w").transpose();
  params.head.b = finite_number(head["b"], "head.b");

  const json& t = j["training"];
  expect_keys(t, {"seed", "epochs_run", "train_samples", "validation_samples", "final_train_loss",
                  "final_validation_loss", "train_loss_history"});
  TrainingMetadata meta;
  if (!t["seed"].is_number_unsigned() && !t["seed"].is_number_integer())
    throw Error(ErrorCode::ParseError, "training.seed must be an integer");
  meta.seed = t["seed"].get<std::uint64_t>();
  meta.epochs_run = static_cast<int>(integer(t, "epochs_run"));
  meta.train_samples = static_cast<std::size_t>(integer(t, "train_samples"));
  meta.validation_samples = static_cast<std::size_t>(integer(t, "validation_samples"));
  auto nullable = [&](const char* key) {
    const json& v = t[key];
    if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return number(t, key);
  };
  meta.final_train_loss = nullable("final_train_loss");
  meta.final_validation_loss = nullable("final_validation_loss");
  if (!t["train_loss_history"].is_array()) throw Error(ErrorCode::ParseError, "train_loss_history must be an array");
  for (const auto& l : t["train_loss_history"]) meta.train_loss_history.push_back(finite_number(l, "train_loss_history"));

  return PredictorModel(nn::StackedLstmRegressor(std::move(params)), standardizer, cfg,
                        std::move(meta));
}

void PredictorModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write model " + path.string());
  out << to_json().dump() << '\n';
}

PredictorModel PredictorModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open model " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::vector<TrainingSample> build_training_samples(std::span<const ExperimentRecord> records,
                                                   const DatasetRegistry& registry) {
  std::vector<TrainingSample> out;
  for (const auto& r : records) {
    const DatasetMeta& meta = registry.at(r.dataset_id);
    check_record(r, registry);
    const ArchitectureSpec arch = architecture_of(r, registry);
    const ShapeTrace trace = infer(arch);
    const double chance = 1.0 / meta.num_classes;
    for (std::size_t i = 0; i + 1 < arch.layers.size(); ++i) {
      TrainingSample s;
      s.first = encode_layer(arch, i, trace, i == 0 ? chance : r.prefix_accuracies[i]);
      s.second = encode_layer(arch, i + 1, trace, 0.0);
      s.dcn = meta.dcn;
      s.target = r.prefix_accuracies[i + 1];
      out.push_back(s);
    }
  }
  return out;
}

PredictorModel train(std::span<const TrainingSample> samples, const TrainingConfig& tcfg,
                     const PredictorConfig& pcfg, const EpochCallback& on_epoch) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no training samples");
  if (tcfg.batch_size < 1 || !(tcfg.learning_rate > 0.0) || tcfg.epochs < 0 ||
      !(tcfg.validation_fraction >= 0.0 && tcfg.validation_fraction < 1.0))
    throw Error(ErrorCode::InvalidConfig, "invalid training configuration");

  SplitMix64 rng(derive_seed(tcfg.seed, 0));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  std::size_t n_val = static_cast<std::size_t>(
      std::floor(tcfg.validation_fraction * static_cast<double>(samples.size())));
  n_val = std::min(n_val, samples.size() - 1);
  std::vector<TrainingSample> val_set, train_set;
  for (std::size_t k = 0; k < order.size(); ++k)
    (k < n_val ? val_set : train_set).push_back(samples[order[k]]);

  std::vector<EncodingVector> encodings;
  encodings.reserve(2 * samples.size());
  for (const auto& s : samples) {
    encodings.push_back(s.first);
    encodings.push_back(s.second);
  }
  const Standardizer standardizer = Standardizer::fit(encodings);
  const SampleMatrices tr = to_matrices(standardizer, train_set);
  const SampleMatrices va = to_matrices(standardizer, val_set);

  auto net = nn::StackedLstmRegressor::he_normal(pcfg.input_dim, pcfg.lstm1_hidden,
                                                 pcfg.lstm2_hidden, derive_seed(tcfg.seed, 1));
  nn::RmspropState opt({tcfg.learning_rate, 0.9, 1e-8, tcfg.weight_decay}, net.params());

  TrainingMetadata meta;
  meta.seed = tcfg.seed;
  meta.train_samples = train_set.size();
  meta.validation_samples = val_set.size();

  const auto d = static_cast<Eigen::Index>(kEncodingSize);
  std::vector<std::size_t> idx(train_set.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    shuffle(idx, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += tcfg.batch_size) {
      const auto b = static_cast<Eigen::Index>(std::min(tcfg.batch_size, idx.size() - start));
      Matrix steps[2] = {Matrix(d, b), Matrix(d, b)};
      RowVector dcn(b), target(b);
      for (Eigen::Index c = 0; c < b; ++c) {
        const auto col = static_cast<Eigen::Index>(idx[start + static_cast<std::size_t>(c)]);
        steps[0].col(c) = tr.first.col(col);
        steps[1].col(c) = tr.second.col(col);
        dcn(c) = tr.dcn(col);
        target(c) = tr.target(col);
      }
      const auto cache = net.forward(steps, dcn);
      const RowVector err = cache.output - target;
      loss_sum += err.squaredNorm();
      const RowVector d_out = (2.0 / static_cast<double>(b)) * err;
      const nn::StackedParams grads = net.backward(cache, d_out);
      nn::rmsprop_step(net.mutable_params(), grads, opt);
    }
    const double train_loss = loss_sum / static_cast<double>(idx.size());
    const double val_loss = mse_of(net, va);
    if (!std::isfinite(train_loss) || !net.params().consistent())
      throw Error(ErrorCode::DegenerateInput, "training diverged at epoch " + std::to_string(epoch + 1));
    meta.train_loss_history.push_back(train_loss);
    meta.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(epoch + 1, train_loss, val_loss);
  }
  meta.final_train_loss = mse_of(net, tr);
  meta.final_validation_loss = mse_of(net, va);
  return PredictorModel(std::move(net), standardizer, pcfg, std::move(meta));
}

double sample_mse(const PredictorModel& model, std::span<const TrainingSample> samples) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no samples");
  return mse_of(model.network(), to_matrices(model.standardizer(), samples));
}

double predict(const ArchitectureSpec& arch, double dcn, int num_classes,
               const PredictorModel& model) {
  if (num_classes < 1) throw Error(ErrorCode::InvalidArchitecture, "num_classes must be positive");
  ArchitectureSpec a = arch;
  a.num_classes = num_classes;
  ShapeTrace trace;
  if (auto err = try_infer(a, kCifarInput, &trace); err || !is_valid(a)) {
    throw Error(ErrorCode::InvalidArchitecture,
                "architecture rejected" +
                    (err ? " (" + std::string(to_string(err->code)) + ")" : std::string()));
  }
  double acc = 1.0 / num_classes;
  const std::size_t L = a.layers.size();
  if (L == 1) {
    return model.predict_pair(encode_layer(a, 0, trace, acc),
                              encode_layer(a, a.effective_length() - 1, trace, 0.0), dcn);
  }
  for (std::size_t i = 0; i + 1 < L; ++i) {
    acc = model.predict_pair(encode_layer(a, i, trace, acc), encode_layer(a, i + 1, trace, 0.0), dcn);
  }
  return acc;
}

BatchPrediction predict_batch(std::span<const ArchitectureSpec> archs, double dcn,
                              int num_classes, const PredictorModel& model, unsigned threads) {
  BatchPrediction out;
  out.values.resize(archs.size());
  out.errors.resize(archs.size());
  const auto t0 = std::chrono::steady_clock::now();
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      try {
        out.values[k] = predict(archs[k], dcn, num_classes, model);
      } catch (const Error& e) {
        out.errors[k] = e.what();
      }
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(archs.size(), 1))));
  if (threads == 1) {
    work(0, archs.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (archs.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = std::min(archs.size(), t * chunk);
      const std::size_t end = std::min(archs.size(), begin + chunk);
      pool.emplace_back(work, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.networks_per_second =
      out.seconds > 0.0 ? static_cast<double>(archs.size()) / out.seconds
                        : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace accpred
