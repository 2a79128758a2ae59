// accpred: corpus generation, predictor training, prediction, simulated
// evolution and evaluation from the command line.
//
// Exit codes: 0 success, 2 input error, 3 empty selection, 4 internal error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "accpred/arch_json.hpp"
#include "accpred/evolve.hpp"
#include "accpred/expdb.hpp"
#include "accpred/metrics.hpp"
#include "accpred/predictor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace accpred;

namespace {

constexpr const char* kToolVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitEmpty = 3;
constexpr int kExitInternal = 4;

struct EmptySelection : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt6(double v) {
  std::ostringstream ss;
  ss << std::setprecision(6) << v;
  return ss.str();
}

std::string full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CommonOptions {
  std::string fixed_clock;
  std::string manifest;
  bool json_output = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--fixed-clock", o.fixed_clock,
                  "Freeze every emitted timestamp to this ISO-8601 value");
  cmd->add_option("--manifest", o.manifest, "Where to write the run manifest");
  cmd->add_flag("--json", o.json_output, "Print reports as JSON");
}

Clock clock_for(const CommonOptions& o) {
  return o.fixed_clock.empty() ? system_clock() : fixed_clock(o.fixed_clock);
}

/// Records what ran, with which resolved settings, and how long it took.
class Manifest {
 public:
  Manifest(std::string command, const CommonOptions& o)
      : command_(std::move(command)),
        started_at_(clock_for(o)()),
        fixed_(!o.fixed_clock.empty()),
        t0_(std::chrono::steady_clock::now()) {}

  json& config() { return config_; }
  void input(const std::string& p) { inputs_.push_back(p); }
  void output(const std::string& p) { outputs_.push_back(p); }
  void seed(const std::string& name, std::uint64_t s) { seeds_[name] = s; }

  void emit(const std::string& path) const {
    json j = {{"command", command_},
              {"tool_version", kToolVersion},
              {"config", config_},
              {"seeds", seeds_},
              {"inputs", inputs_},
              {"outputs", outputs_},
              {"started_at", started_at_},
              {"fixed_clock", fixed_},
              // A frozen clock freezes the duration too, so reruns are byte-identical.
              {"duration_seconds",
               fixed_ ? 0.0 : std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count()}};
    if (path.empty()) {
      std::cerr << "manifest: " << j.dump() << '\n';
      return;
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write manifest " + path);
    out << j.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::string started_at_;
  bool fixed_;
  std::chrono::steady_clock::time_point t0_;
  json config_ = json::object();
  json seeds_ = json::object();
  std::vector<std::string> inputs_, outputs_;
};

SearchSpaceConfig space_with(int max_layers) {
  SearchSpaceConfig s;
  s.max_backbone_layers = max_layers;
  s.check();
  return s;
}

// ---------------------------------------------------------------- commands

struct GenerateArgs {
  std::string registry, out;
  std::size_t nets = 200;
  std::uint64_t seed = 0;
  int max_layers = 12;
  CommonOptions common;
};

int cmd_generate(const GenerateArgs& a) {
  Manifest m("generate-corpus", a.common);
  m.config() = {{"registry", a.registry}, {"out", a.out}, {"nets_per_dataset", a.nets},
                {"max_backbone_layers", a.max_layers}};
  m.seed("corpus", a.seed);
  m.input(a.registry);
  m.output(a.out);

  const DatasetRegistry registry = DatasetRegistry::load(a.registry);
  const auto records = generate_synthetic_corpus(registry.datasets(), a.nets,
                                                 space_with(a.max_layers), a.seed, clock_for(a.common));
  if (fs::exists(a.out)) fs::remove(a.out);
  auto store = ExperimentStore::open(a.out, registry);
  store.append_all(records);
  if (a.common.json_output) {
    std::cout << json{{"records", store.size()}, {"store", a.out}}.dump() << '\n';
  } else {
    std::cout << "records\t" << store.size() << '\n';
  }
  m.emit(a.common.manifest.empty() ? a.out + ".manifest.json" : a.common.manifest);
  return kExitOk;
}

struct SelectArgs {
  std::string store, registry;
  double dcn = 0.5;
  double tau = 0.05;
  double holdout_fraction = 0.0;
  std::uint64_t split_seed = 0;
};

void add_select(CLI::App* cmd, SelectArgs& s) {
  cmd->add_option("--store", s.store, "Experiment store (newline-delimited JSON)")->required();
  cmd->add_option("--registry", s.registry, "Dataset registry JSON")->required();
  cmd->add_option("--dcn", s.dcn, "Query dataset difficulty in [0, 1]")->required();
  cmd->add_option("--tau", s.tau, "Difficulty tolerance")->capture_default_str();
  cmd->add_option("--holdout-fraction", s.holdout_fraction,
                  "Fraction of store records reserved for evaluation")
      ->capture_default_str();
  cmd->add_option("--split-seed", s.split_seed, "Seed of the holdout split")->capture_default_str();
}

json select_config(const SelectArgs& s) {
  return {{"store", s.store},           {"registry", s.registry},
          {"dcn", s.dcn},               {"tau", s.tau},
          {"holdout_fraction", s.holdout_fraction}, {"split_seed", s.split_seed}};
}

enum class Split { All, Train, Holdout };

/// Store records inside the tau window, restricted to one side of the split.
std::vector<ExperimentRecord> select_records(const SelectArgs& s, Split split,
                                             DatasetRegistry& registry_out) {
  registry_out = DatasetRegistry::load(s.registry);
  const auto store = ExperimentStore::open(s.store, registry_out);
  const auto mask = holdout_mask(store.size(), s.holdout_fraction, s.split_seed);
  std::vector<ExperimentRecord> side;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (split == Split::Train && mask[i]) continue;
    if (split == Split::Holdout && !mask[i]) continue;
    side.push_back(store.records()[i]);
  }
  auto selected = filter_by_dcn(side, registry_out, s.dcn, FilterConfig{s.tau});
  if (selected.empty()) throw EmptySelection("no experiments within tau of the query DCN");
  return selected;
}

struct TrainArgs {
  SelectArgs select;
  std::string out;
  TrainingConfig training;
  CommonOptions common;
};

int cmd_train(TrainArgs a) {
  Manifest m("train", a.common);
  m.config() = select_config(a.select);
  m.config()["out"] = a.out;
  m.config()["epochs"] = a.training.epochs;
  m.config()["batch_size"] = a.training.batch_size;
  m.config()["learning_rate"] = a.training.learning_rate;
  m.config()["weight_decay"] = a.training.weight_decay;
  m.config()["validation_fraction"] = a.training.validation_fraction;
  m.seed("training", a.training.seed);
  m.seed("split", a.select.split_seed);
  m.input(a.select.store);
  m.input(a.select.registry);
  m.output(a.out);

  DatasetRegistry registry;
  const auto records = select_records(a.select, Split::Train, registry);
  const auto samples = build_training_samples(records, registry);
  if (samples.empty()) throw EmptySelection("selected experiments yield no layer pairs");
  const PredictorModel model = train(samples, a.training, PredictorConfig{});
  model.save(a.out);

  const auto& meta = model.metadata();
  if (a.common.json_output) {
    std::cout << json{{"records", records.size()},
                      {"samples", samples.size()},
                      {"train_loss", meta.final_train_loss},
                      {"validation_loss", std::isnan(meta.final_validation_loss)
                                              ? json(nullptr)
                                              : json(meta.final_validation_loss)}}
                     .dump()
              << '\n';
  } else {
    std::cout << "records\t" << records.size() << '\n'
              << "samples\t" << samples.size() << '\n'
              << "train_loss\t" << fmt6(meta.final_train_loss) << '\n'
              << "validation_loss\t" << fmt6(meta.final_validation_loss) << '\n';
  }
  m.emit(a.common.manifest.empty() ? a.out + ".manifest.json" : a.common.manifest);
  return kExitOk;
}

struct PredictArgs {
  std::string model;
  std::vector<std::string> files;
  double dcn = 0.5;
  int num_classes = 10;
  unsigned threads = 1;
  CommonOptions common;
};

int cmd_predict(const PredictArgs& a) {
  Manifest m("predict", a.common);
  m.config() = {{"model", a.model}, {"dcn", a.dcn}, {"num_classes", a.num_classes},
                {"threads", a.threads}, {"files", a.files.size()}};
  m.input(a.model);
  const PredictorModel model = PredictorModel::load(a.model);

  std::vector<ArchitectureSpec> archs;
  std::vector<std::string> names, load_errors(a.files.size());
  std::vector<std::size_t> slot(a.files.size(), SIZE_MAX);
  for (std::size_t k = 0; k < a.files.size(); ++k) {
    try {
      archs.push_back(read_architecture_file(a.files[k]));
      slot[k] = archs.size() - 1;
    } catch (const Error& e) {
      load_errors[k] = e.what();
    }
  }
  const BatchPrediction batch = predict_batch(archs, a.dcn, a.num_classes, model, a.threads);

  bool failed = false;
  json rows = json::array();
  for (std::size_t k = 0; k < a.files.size(); ++k) {
    std::string error = load_errors[k];
    std::optional<double> value;
    if (slot[k] != SIZE_MAX) {
      value = batch.values[slot[k]];
      if (!value) error = batch.errors[slot[k]];
    }
    if (!value) {
      failed = true;
      std::cerr << a.files[k] << "\terror: " << error << '\n';
      rows.push_back({{"file", a.files[k]}, {"error", error}});
      continue;
    }
    if (a.common.json_output) {
      rows.push_back({{"file", a.files[k]}, {"predicted_accuracy", *value}});
    } else {
      std::cout << a.files[k] << '\t' << fmt6(*value) << '\n';
    }
  }
  if (a.common.json_output) {
    std::cout << json{{"predictions", rows},
                      {"networks", archs.size()},
                      {"seconds", batch.seconds},
                      {"networks_per_second", batch.networks_per_second}}
                     .dump()
              << '\n';
  } else {
    std::cout << "throughput\t" << archs.size() << " networks in " << fmt6(batch.seconds)
              << " s\t" << fmt6(batch.networks_per_second) << " networks/s\n";
  }
  m.emit(a.common.manifest);
  return failed ? kExitInput : kExitOk;
}

struct EvolveArgs {
  std::string model, out_dir;
  double dcn = 0.5;
  int num_classes = 10;
  int max_layers = 12;
  EvolutionConfig evolution;
  CommonOptions common;
};

int cmd_evolve(const EvolveArgs& a) {
  Manifest m("evolve", a.common);
  m.config() = {{"model", a.model},
                {"dcn", a.dcn},
                {"num_classes", a.num_classes},
                {"steps", a.evolution.steps},
                {"population", a.evolution.population_size},
                {"max_backbone_layers", a.max_layers},
                {"mutation_weights", a.evolution.mutation_weights},
                {"out_dir", a.out_dir}};
  m.seed("evolution", a.evolution.seed);
  m.input(a.model);
  const PredictorModel model = PredictorModel::load(a.model);
  fs::create_directories(a.out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  const EvolutionResult result =
      run_evolution(a.evolution, space_with(a.max_layers), a.num_classes, model, a.dcn);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir(a.out_dir);
  {
    std::ofstream hist(dir / "history.tsv");
    hist << "step\tbest_predicted_accuracy\n";
    for (std::size_t s = 0; s < result.history.size(); ++s)
      hist << s + 1 << '\t' << full(result.history[s]) << '\n';
  }
  m.output((dir / "history.tsv").string());
  const auto top = top_k(result.population, 3);
  json top_json = json::array();
  {
    std::ofstream table(dir / "top.tsv");
    table << "rank\tid\tpredicted_accuracy\tbackbone_layers\tfile\n";
    for (std::size_t r = 0; r < top.size(); ++r) {
      const std::string name = "top" + std::to_string(r + 1) + ".json";
      write_architecture_file(dir / name, top[r].arch);
      table << r + 1 << '\t' << top[r].id << '\t' << full(top[r].predicted_accuracy) << '\t'
            << top[r].arch.layers.size() << '\t' << name << '\n';
      top_json.push_back({{"rank", r + 1},
                          {"id", top[r].id},
                          {"predicted_accuracy", top[r].predicted_accuracy},
                          {"file", name}});
      m.output((dir / name).string());
    }
  }
  m.output((dir / "top.tsv").string());

  if (a.common.json_output) {
    std::cout << json{{"steps", result.history.size()},
                      {"population", result.population.size()},
                      {"best_id", result.best.id},
                      {"best_predicted_accuracy", result.best.predicted_accuracy},
                      {"seconds", seconds},
                      {"top", top_json}}
                     .dump()
              << '\n';
  } else {
    std::cout << "steps\t" << result.history.size() << '\n'
              << "population\t" << result.population.size() << '\n'
              << "best_id\t" << result.best.id << '\n'
              << "best_predicted_accuracy\t" << fmt6(result.best.predicted_accuracy) << '\n'
              << "seconds\t" << fmt6(seconds) << '\n';
    for (const auto& t : top_json)
      std::cout << "top" << t["rank"].get<int>() << '\t' << fmt6(t["predicted_accuracy"].get<double>())
                << '\t' << t["file"].get<std::string>() << '\n';
  }
  m.emit(a.common.manifest.empty() ? (dir / "manifest.json").string() : a.common.manifest);
  return kExitOk;
}

struct EvaluateArgs {
  std::string model;
  SelectArgs select;
  std::string split = "all";
  std::string dump_csv;
  CommonOptions common;
};

int cmd_evaluate(const EvaluateArgs& a) {
  Manifest m("evaluate", a.common);
  m.config() = select_config(a.select);
  m.config()["model"] = a.model;
  m.config()["split"] = a.split;
  m.config()["dump_csv"] = a.dump_csv;
  m.seed("split", a.select.split_seed);
  m.input(a.model);
  m.input(a.select.store);

  const Split split = a.split == "train" ? Split::Train : a.split == "holdout" ? Split::Holdout : Split::All;
  const PredictorModel model = PredictorModel::load(a.model);
  DatasetRegistry registry;
  const auto records = select_records(a.select, split, registry);

  std::vector<double> predicted, truth;
  for (const auto& r : records) {
    const DatasetMeta& d = registry.at(r.dataset_id);
    predicted.push_back(predict(architecture_of(r, registry), d.dcn, d.num_classes, model));
    truth.push_back(r.prefix_accuracies.back());
  }
  if (!a.dump_csv.empty()) {
    std::ofstream csv(a.dump_csv);
    if (!csv) throw Error(ErrorCode::IoError, "cannot write " + a.dump_csv);
    csv << "dataset_id,predicted,recorded\n";
    for (std::size_t k = 0; k < records.size(); ++k)
      csv << records[k].dataset_id << ',' << full(predicted[k]) << ',' << full(truth[k]) << '\n';
    m.output(a.dump_csv);
  }
  const metrics::PairedSeries series{predicted, truth};
  const double mse = metrics::mse(series);
  const double tau = metrics::kendall_tau(series);
  const double r2 = metrics::r_squared(series);
  if (a.common.json_output) {
    std::cout << json{{"records", records.size()}, {"mse", mse}, {"kendall_tau", tau}, {"r_squared", r2}}.dump()
              << '\n';
  } else {
    std::cout << "records\t" << records.size() << '\n'
              << "mse\t" << fmt6(mse) << '\n'
              << "kendall_tau\t" << fmt6(tau) << '\n'
              << "r_squared\t" << fmt6(r2) << '\n';
  }
  m.emit(a.common.manifest);
  return kExitOk;
}

struct SampleArgs {
  std::string out_dir;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  int num_classes = 10;
  int max_layers = 12;
  CommonOptions common;
};

int cmd_sample(const SampleArgs& a) {
  Manifest m("sample", a.common);
  m.config() = {{"out_dir", a.out_dir}, {"count", a.count}, {"num_classes", a.num_classes},
                {"max_backbone_layers", a.max_layers}};
  m.seed("sample", a.seed);
  fs::create_directories(a.out_dir);
  const SearchSpaceConfig space = space_with(a.max_layers);
  for (std::size_t k = 0; k < a.count; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "arch_%05zu.json", k);
    write_architecture_file(fs::path(a.out_dir) / name,
                            sample(space, a.num_classes, derive_seed(a.seed, k)));
  }
  std::cout << "architectures\t" << a.count << '\n';
  m.emit(a.common.manifest.empty() ? (fs::path(a.out_dir) / "manifest.json").string()
                                   : a.common.manifest);
  return kExitOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch:
    case ErrorCode::StaleCache:
    case ErrorCode::DegenerateInput:
    case ErrorCode::ExhaustedRetries:
      return kExitInternal;
    default:
      return kExitInput;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train-free accuracy prediction and simulated architecture search"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate-corpus", "Write a synthetic experiment store");
  c_gen->add_option("--registry", gen.registry, "Dataset registry JSON")->required();
  c_gen->add_option("--out", gen.out, "Output store path (overwritten)")->required();
  c_gen->add_option("--nets-per-dataset", gen.nets)->capture_default_str();
  c_gen->add_option("--seed", gen.seed)->capture_default_str();
  c_gen->add_option("--max-layers", gen.max_layers, "Maximum backbone length")->capture_default_str();
  add_common(c_gen, gen.common);

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Filter the store by difficulty and fit the predictor");
  add_select(c_train, tr.select);
  c_train->add_option("--out", tr.out, "Model output path")->required();
  c_train->add_option("--epochs", tr.training.epochs)->capture_default_str();
  c_train->add_option("--seed", tr.training.seed)->capture_default_str();
  c_train->add_option("--batch-size", tr.training.batch_size)->capture_default_str();
  c_train->add_option("--learning-rate", tr.training.learning_rate)->capture_default_str();
  c_train->add_option("--weight-decay", tr.training.weight_decay)->capture_default_str();
  c_train->add_option("--validation-fraction", tr.training.validation_fraction)->capture_default_str();
  add_common(c_train, tr.common);

  PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "Predict accuracies of architecture files");
  c_pred->add_option("--model", pr.model)->required();
  c_pred->add_option("--dcn", pr.dcn)->required();
  c_pred->add_option("--num-classes", pr.num_classes)->required();
  c_pred->add_option("--threads", pr.threads)->capture_default_str();
  c_pred->add_option("files", pr.files, "Architecture JSON files")->required();
  add_common(c_pred, pr.common);

  EvolveArgs ev;
  auto* c_evo = app.add_subcommand("evolve", "Simulated evolutionary search scored by the predictor");
  c_evo->add_option("--model", ev.model)->required();
  c_evo->add_option("--dcn", ev.dcn)->required();
  c_evo->add_option("--num-classes", ev.num_classes)->required();
  c_evo->add_option("--steps", ev.evolution.steps)->capture_default_str();
  c_evo->add_option("--population", ev.evolution.population_size)->capture_default_str();
  c_evo->add_option("--seed", ev.evolution.seed)->capture_default_str();
  c_evo->add_option("--max-layers", ev.max_layers)->capture_default_str();
  c_evo->add_option("--out-dir", ev.out_dir)->required();
  add_common(c_evo, ev.common);

  EvaluateArgs eva;
  auto* c_eval = app.add_subcommand("evaluate", "MSE, Kendall tau and R^2 against recorded accuracies");
  c_eval->add_option("--model", eva.model)->required();
  add_select(c_eval, eva.select);
  c_eval->add_option("--split", eva.split, "all | train | holdout")
      ->check(CLI::IsMember({"all", "train", "holdout"}))
      ->capture_default_str();
  c_eval->add_option("--dump-csv", eva.dump_csv, "Write per-record predictions here");
  add_common(c_eval, eva.common);

  SampleArgs sa;
  auto* c_sample = app.add_subcommand("sample", "Write random architectures from the search space");
  c_sample->add_option("--out-dir", sa.out_dir)->required();
  c_sample->add_option("--count", sa.count)->capture_default_str();
  c_sample->add_option("--seed", sa.seed)->capture_default_str();
  c_sample->add_option("--num-classes", sa.num_classes)->capture_default_str();
  c_sample->add_option("--max-layers", sa.max_layers)->capture_default_str();
  add_common(c_sample, sa.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*c_gen) return cmd_generate(gen);
    if (*c_train) return cmd_train(tr);
    if (*c_pred) return cmd_predict(pr);
    if (*c_evo) return cmd_evolve(ev);
    if (*c_eval) return cmd_evaluate(eva);
    if (*c_sample) return cmd_sample(sa);
  } catch (const EmptySelection& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitEmpty;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}
