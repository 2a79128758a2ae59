#include "accpred/expdb.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "accpred/arch_json.hpp"

namespace accpred {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_meta(const DatasetMeta& m) {
  if (m.id.empty()) throw Error(ErrorCode::InvalidConfig, "dataset id must be non-empty");
  if (!(m.dcn >= 0.0 && m.dcn <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "dataset '" + m.id + "': dcn outside [0, 1]");
  if (m.num_classes < 2)
    throw Error(ErrorCode::InvalidConfig, "dataset '" + m.id + "': num_classes must be >= 2");
}

// RAII file descriptor holding an exclusive flock.
class LockedFile {
 public:
  LockedFile(const fs::path& path, int flags) : fd_(::open(path.c_str(), flags, 0644)) {
    if (fd_ < 0) throw Error(ErrorCode::IoError, "cannot open " + path.string() + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error(ErrorCode::IoError, "cannot lock " + path.string());
    }
  }
  ~LockedFile() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  LockedFile(const LockedFile&) = delete;
  LockedFile& operator=(const LockedFile&) = delete;
  int fd() const { return fd_; }

 private:
  int fd_;
};

void write_fully(int fd, std::string_view data, const fs::path& path) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, "write to " + path.string() + " failed: " + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string iso8601(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

DatasetRegistry::DatasetRegistry(std::vector<DatasetMeta> datasets) {
  for (auto& d : datasets) add(std::move(d));
}

void DatasetRegistry::add(DatasetMeta meta) {
  check_meta(meta);
  if (find(meta.id)) throw Error(ErrorCode::InvalidConfig, "duplicate dataset id '" + meta.id + "'");
  datasets_.push_back(std::move(meta));
}

const DatasetMeta* DatasetRegistry::find(std::string_view id) const {
  for (const auto& d : datasets_)
    if (d.id == id) return &d;
  return nullptr;
}

const DatasetMeta& DatasetRegistry::at(std::string_view id) const {
  if (const auto* d = find(id)) return *d;
  throw Error(ErrorCode::UnknownDataset, "dataset '" + std::string(id) + "' is not registered");
}

json DatasetRegistry::to_json() const {
  json arr = json::array();
  for (const auto& d : datasets_)
    arr.push_back({{"id", d.id}, {"name", d.name}, {"dcn", d.dcn}, {"num_classes", d.num_classes}});
  return {{"v", kSchemaVersion}, {"datasets", arr}};
}

DatasetRegistry DatasetRegistry::from_json(const json& j) {
  using namespace json_field;
  expect_keys(j, {"v", "datasets"});
  expect_version(j);
  const json& arr = j["datasets"];
  if (!arr.is_array()) throw Error(ErrorCode::ParseError, "'datasets' must be an array");
  DatasetRegistry reg;
  for (const auto& d : arr) {
    expect_keys(d, {"id", "name", "dcn", "num_classes"});
    const auto nc = integer(d, "num_classes");
    if (nc < 2 || nc > 1'000'000) throw Error(ErrorCode::InvalidConfig, "num_classes out of range");
    reg.add({string(d, "id"), string(d, "name"), number(d, "dcn"), static_cast<int>(nc)});
  }
  return reg;
}

DatasetRegistry DatasetRegistry::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open registry " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void DatasetRegistry::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write registry " + path.string());
  out << to_json().dump(2) << '\n';
}

ArchitectureSpec architecture_of(const ExperimentRecord& record, const DatasetRegistry& registry) {
  return ArchitectureSpec{record.layers, registry.at(record.dataset_id).num_classes};
}

void check_record(const ExperimentRecord& record, const DatasetRegistry& registry) {
  const ArchitectureSpec arch = architecture_of(record, registry);
  if (auto err = check_architecture(arch)) {
    throw Error(ErrorCode::InvalidRecord, "architecture rejected (" +
                                              std::string(to_string(err->code)) + " at layer " +
                                              std::to_string(err->layer_index) + ")");
  }
  if (record.prefix_accuracies.size() != record.layers.size()) {
    throw Error(ErrorCode::InvalidRecord,
                "prefix_accuracies has " + std::to_string(record.prefix_accuracies.size()) +
                    " entries for a backbone of " + std::to_string(record.layers.size()));
  }
  for (double a : record.prefix_accuracies) {
    if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorCode::InvalidRecord, "accuracy outside [0, 1]");
  }
}

std::string record_to_line(const ExperimentRecord& r) {
  json j;
  j["v"] = kSchemaVersion;
  j["dataset_id"] = r.dataset_id;
  j["layers"] = layers_to_json(r.layers);
  j["prefix_accuracies"] = r.prefix_accuracies;
  j["source"] = r.source == RecordSource::Synthetic ? "synthetic" : "external";
  j["created_at"] = r.created_at;
  return j.dump();
}

ExperimentRecord record_from_line(std::string_view line) {
  using namespace json_field;
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  expect_keys(j, {"v", "dataset_id", "layers", "prefix_accuracies", "source", "created_at"});
  expect_version(j);
  ExperimentRecord r;
  r.dataset_id = string(j, "dataset_id");
  r.layers = layers_from_json(j["layers"]);
  const json& accs = j["prefix_accuracies"];
  if (!accs.is_array()) throw Error(ErrorCode::ParseError, "'prefix_accuracies' must be an array");
  for (const auto& a : accs) {
    if (!a.is_number()) throw Error(ErrorCode::ParseError, "accuracy must be a number");
    r.prefix_accuracies.push_back(a.get<double>());
  }
  const std::string source = string(j, "source");
  if (source == "synthetic") {
    r.source = RecordSource::Synthetic;
  } else if (source == "external") {
    r.source = RecordSource::External;
  } else {
    throw Error(ErrorCode::ParseError, "unknown source '" + source + "'");
  }
  r.created_at = string(j, "created_at");
  return r;
}

Clock system_clock() {
  return [] { return iso8601(std::chrono::system_clock::now()); };
}

Clock fixed_clock(std::string timestamp) {
  return [ts = std::move(timestamp)] { return ts; };
}

ExperimentStore ExperimentStore::open(const fs::path& path, DatasetRegistry registry) {
  ExperimentStore store(path, std::move(registry));
  LockedFile file(path, O_RDWR | O_CREAT);

  std::string content;
  {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }
  const std::size_t complete = content.rfind('\n') == std::string::npos ? 0 : content.rfind('\n') + 1;
  if (complete < content.size()) {
    // Torn tail from an interrupted append.
    if (::ftruncate(file.fd(), static_cast<off_t>(complete)) != 0)
      throw Error(ErrorCode::IoError, "cannot repair torn tail of " + path.string());
    content.resize(complete);
  }

  std::size_t line_no = 0, pos = 0;
  while (pos < content.size()) {
    const std::size_t end = content.find('\n', pos);
    const std::string_view line(content.data() + pos, end - pos);
    ++line_no;
    try {
      ExperimentRecord r = record_from_line(line);
      check_record(r, store.registry_);
      store.records_.push_back(std::move(r));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    pos = end + 1;
  }
  return store;
}

void ExperimentStore::append(const ExperimentRecord& record) {
  append_all(std::span<const ExperimentRecord>(&record, 1));
}

void ExperimentStore::append_all(std::span<const ExperimentRecord> records) {
  std::string payload;
  for (const auto& r : records) {
    check_record(r, registry_);
    payload += record_to_line(r);
    payload += '\n';
  }
  if (payload.empty()) return;
  LockedFile file(path_, O_WRONLY | O_APPEND | O_CREAT);
  write_fully(file.fd(), payload, path_);
  if (::fsync(file.fd()) != 0) throw Error(ErrorCode::IoError, "fsync failed for " + path_.string());
  records_.insert(records_.end(), records.begin(), records.end());
}

std::vector<ExperimentRecord> filter_by_dcn(std::span<const ExperimentRecord> records,
                                            const DatasetRegistry& registry, double query_dcn,
                                            const FilterConfig& cfg) {
  if (!(cfg.tau >= 0.0)) throw Error(ErrorCode::InvalidConfig, "tau must be >= 0");
  std::vector<ExperimentRecord> out;
  for (const auto& r : records) {
    const DatasetMeta& d = registry.at(r.dataset_id);
    if (std::abs(query_dcn - d.dcn) <= cfg.tau) out.push_back(r);
  }
  return out;
}

std::vector<bool> holdout_mask(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "holdout fraction must lie in [0, 1]");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<bool> mask(n, false);
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  for (std::size_t k = 0; k < count; ++k) mask[order[k]] = true;
  return mask;
}

double pseudo_accuracy(const ArchitectureSpec& arch, double dcn, int num_classes) {
  int n_conv = 0, n_res = 0, n_bn = 0;
  for (const auto& l : arch.layers) {
    if (const auto* c = std::get_if<Convolution>(&l)) {
      ++n_conv;
      n_bn += c->batch_norm ? 1 : 0;
    } else if (std::holds_alternative<ResidualBlock>(l)) {
      ++n_res;
    }
  }
  const double bn_frac = n_conv > 0 ? static_cast<double>(n_bn) / n_conv : 0.0;
  const double z = 0.4 * n_conv + 0.6 * n_res + 0.2 * bn_frac -
                   0.05 * static_cast<double>(arch.layers.size()) - 1.5;
  const double q = 1.0 / (1.0 + std::exp(-z));
  const double chance = 1.0 / num_classes;
  return chance + (1.0 - chance) * (1.0 - dcn) * q;
}

std::vector<ExperimentRecord> generate_synthetic_corpus(std::span<const DatasetMeta> datasets,
                                                        std::size_t nets_per_dataset,
                                                        const SearchSpaceConfig& space,
                                                        std::uint64_t seed, const Clock& clock) {
  if (datasets.empty()) throw Error(ErrorCode::EmptyInput, "no datasets to generate for");
  std::vector<ExperimentRecord> out;
  out.reserve(datasets.size() * nets_per_dataset);
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const DatasetMeta& meta = datasets[d];
    check_meta(meta);
    const std::uint64_t dataset_seed = derive_seed(seed, d);
    for (std::size_t n = 0; n < nets_per_dataset; ++n) {
      const ArchitectureSpec arch = sample(space, meta.num_classes, derive_seed(dataset_seed, n));
      ExperimentRecord r;
      r.dataset_id = meta.id;
      r.layers = arch.layers;
      r.prefix_accuracies.reserve(arch.layers.size());
      for (std::size_t k = 1; k <= arch.layers.size(); ++k)
        r.prefix_accuracies.push_back(pseudo_accuracy(prefix(arch, k), meta.dcn, meta.num_classes));
      r.source = RecordSource::Synthetic;
      r.created_at = clock();
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace accpred
