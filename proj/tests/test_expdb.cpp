#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "accpred/expdb.hpp"
#include "oracles.hpp"

using namespace accpred;

namespace {

ExperimentRecord small_record(const std::string& dataset, int num_classes = 10, double dcn = 0.5) {
  const ArchitectureSpec a{{Convolution{3, 1, Padding::Same, 8, true}, Pooling{}}, num_classes};
  ExperimentRecord r;
  r.dataset_id = dataset;
  r.layers = a.layers;
  for (std::size_t k = 1; k <= a.layers.size(); ++k)
    r.prefix_accuracies.push_back(pseudo_accuracy(prefix(a, k), dcn, num_classes));
  r.created_at = "2026-01-01T00:00:00Z";
  return r;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

}  // namespace

TEST(Registry, RejectsDuplicatesAndRanges) {
  DatasetRegistry reg;
  reg.add({"a", "A", 0.2, 10});
  EXPECT_EQ(code_of([&] { reg.add({"a", "again", 0.3, 10}); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { reg.add({"b", "B", 1.5, 10}); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { reg.add({"c", "C", 0.5, 1}); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { reg.at("zzz"); }), ErrorCode::UnknownDataset);
  EXPECT_EQ(reg.find("a")->dcn, 0.2);
}

TEST(Registry, FileRoundTrip) {
  oracle::TempDir dir;
  const DatasetRegistry reg(oracle::five_datasets());
  reg.save(dir / "reg.json");
  const auto back = DatasetRegistry::load(dir / "reg.json");
  EXPECT_EQ(back.datasets(), reg.datasets());
  EXPECT_EQ(code_of([&] { DatasetRegistry::load(dir / "missing.json"); }), ErrorCode::IoError);
}

TEST(Store, AppendIncrementsAndChecks) {
  oracle::TempDir dir;
  auto store = ExperimentStore::open(dir / "s.jsonl", DatasetRegistry(oracle::five_datasets()));
  EXPECT_EQ(store.size(), 0u);
  store.append(small_record("ds0"));
  EXPECT_EQ(store.size(), 1u);
  EXPECT_EQ(code_of([&] { store.append(small_record("nope")); }), ErrorCode::UnknownDataset);
  auto bad = small_record("ds0");
  bad.prefix_accuracies.pop_back();
  EXPECT_EQ(code_of([&] { store.append(bad); }), ErrorCode::InvalidRecord);
  bad = small_record("ds0");
  bad.prefix_accuracies[0] = 1.5;
  EXPECT_EQ(code_of([&] { store.append(bad); }), ErrorCode::InvalidRecord);
  bad = small_record("ds0");
  bad.layers.push_back(SkipConnection{9});
  bad.prefix_accuracies.push_back(0.5);
  EXPECT_EQ(code_of([&] { store.append(bad); }), ErrorCode::InvalidRecord);
  EXPECT_EQ(store.size(), 1u);
  EXPECT_EQ(ExperimentStore::open(dir / "s.jsonl", store.registry()).size(), 1u);
}

TEST(Store, ThousandRecordsSurviveReopenInOrder) {
  oracle::TempDir dir;
  const auto ds = oracle::five_datasets();
  const auto corpus =
      generate_synthetic_corpus(ds, 200, SearchSpaceConfig{}, 11, fixed_clock("2026-01-01T00:00:00Z"));
  ASSERT_EQ(corpus.size(), 1000u);
  {
    auto store = ExperimentStore::open(dir / "s.jsonl", DatasetRegistry(ds));
    for (std::size_t i = 0; i < 500; ++i) store.append(corpus[i]);
    store.append_all(std::span(corpus).subspan(500));
  }
  const auto back = ExperimentStore::open(dir / "s.jsonl", DatasetRegistry(ds));
  ASSERT_EQ(back.size(), 1000u);
  EXPECT_TRUE(std::equal(corpus.begin(), corpus.end(), back.records().begin()));
}

TEST(Store, TornTailIsTruncated) {
  oracle::TempDir dir;
  const auto ds = oracle::five_datasets();
  {
    auto store = ExperimentStore::open(dir / "s.jsonl", DatasetRegistry(ds));
    store.append(small_record("ds1"));
    store.append(small_record("ds2"));
  }
  const std::string good = oracle::slurp(dir / "s.jsonl");
  oracle::spit(dir / "s.jsonl", good + record_to_line(small_record("ds3")).substr(0, 40));
  const auto store = ExperimentStore::open(dir / "s.jsonl", DatasetRegistry(ds));
  EXPECT_EQ(store.size(), 2u);
  EXPECT_EQ(oracle::slurp(dir / "s.jsonl"), good);
}

TEST(Store, CorruptLineReportsPosition) {
  oracle::TempDir dir;
  const auto ds = oracle::five_datasets();
  oracle::spit(dir / "s.jsonl", record_to_line(small_record("ds1")) + "\n{\"v\":1}\n");
  try {
    ExperimentStore::open(dir / "s.jsonl", DatasetRegistry(ds));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("s.jsonl:2"), std::string::npos) << e.what();
  }
}

TEST(Record, LineRoundTripIsExact) {
  auto r = small_record("ds4");
  r.prefix_accuracies = {0.1 + 1e-17, 1.0 / 3.0};
  r.source = RecordSource::External;
  const std::string line = record_to_line(r);
  EXPECT_EQ(record_from_line(line), r);
  EXPECT_EQ(record_to_line(record_from_line(line)), line);
  EXPECT_EQ(line.find('\n'), std::string::npos);
}

TEST(Filter, HandCases) {
  DatasetRegistry reg;
  reg.add({"near", "near", 0.63, 10});
  reg.add({"far", "far", 0.70, 10});
  const std::vector<ExperimentRecord> recs{small_record("far"), small_record("near"),
                                           small_record("far")};
  const auto got = filter_by_dcn(recs, reg, 0.60, {0.05});
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0].dataset_id, "near");
  EXPECT_EQ(filter_by_dcn(recs, reg, 0.60, {1.0}).size(), 3u);
  EXPECT_TRUE(filter_by_dcn(recs, reg, 0.60, {0.0}).empty());
  EXPECT_THROW(filter_by_dcn(recs, reg, 0.6, {-0.1}), Error);
}

TEST(Filter, MatchesScanOnFiftyDatasets) {
  SplitMix64 rng(77);
  std::vector<DatasetMeta> ds;
  for (int k = 0; k < 50; ++k) ds.push_back({"d" + std::to_string(k), "", rng.uniform(), 10});
  const DatasetRegistry reg(ds);
  std::vector<ExperimentRecord> recs;
  for (int i = 0; i < 400; ++i) recs.push_back(small_record(ds[rng.below(50)].id));
  for (int q = 0; q < 200; ++q) {
    const double query = rng.uniform();
    const double tau = q % 4 == 0 ? 0.05 : 0.3 * rng.uniform();
    const auto got = filter_by_dcn(recs, reg, query, {tau});
    const auto want = oracle::filter_scan(recs, ds, query, tau);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_EQ(got[i], recs[want[i]]);
  }
}

TEST(Holdout, ExactCountAndDeterminism) {
  for (std::size_t n : {0u, 1u, 5u, 1000u}) {
    const auto m = holdout_mask(n, 0.2, 9);
    EXPECT_EQ(static_cast<std::size_t>(std::count(m.begin(), m.end(), true)), n / 5);
    EXPECT_EQ(m, holdout_mask(n, 0.2, 9));
  }
  EXPECT_NE(holdout_mask(100, 0.5, 1), holdout_mask(100, 0.5, 2));
  EXPECT_THROW(holdout_mask(10, 1.5, 0), Error);
}

// Independent evaluation of the closed form.
double expected_accuracy(int n_conv, int n_res, double bn_frac, int n_layers, double dcn, int nc) {
  const double z = 0.4 * n_conv + 0.6 * n_res + 0.2 * bn_frac - 0.05 * n_layers - 1.5;
  return 1.0 / nc + (1.0 - 1.0 / nc) * (1.0 - dcn) / (1.0 + std::exp(-z));
}

TEST(PseudoAccuracy, ClosedForm) {
  const ArchitectureSpec a{{Convolution{}, Pooling{}, Convolution{}}, 10};
  EXPECT_NEAR(pseudo_accuracy(a, 0.3, 10), expected_accuracy(2, 0, 0.0, 3, 0.3, 10), 1e-15);
  EXPECT_NEAR(pseudo_accuracy(a, 0.3, 10), 0.288643, 1e-5);
  EXPECT_EQ(pseudo_accuracy(a, 1.0, 10), 0.1);
  EXPECT_EQ(pseudo_accuracy(a, 1.0, 7), 1.0 / 7);

  const ArchitectureSpec b{{Convolution{3, 1, Padding::Same, 8, true}, ResidualBlock{},
                            Convolution{}, Dropout{0.3}, SkipConnection{0}},
                           100};
  EXPECT_NEAR(pseudo_accuracy(b, 0.45, 100), expected_accuracy(2, 1, 0.5, 5, 0.45, 100), 1e-15);

  auto c = a;
  c.layers.push_back(Convolution{});
  EXPECT_GT(pseudo_accuracy(c, 0.3, 10), pseudo_accuracy(a, 0.3, 10));
}

TEST(PseudoAccuracy, NonIncreasingInDifficulty) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto a = sample(SearchSpaceConfig{}, 10, s);
    double prev = 2.0;
    for (int k = 0; k <= 20; ++k) {
      const double v = pseudo_accuracy(a, k / 20.0, 10);
      EXPECT_LE(v, prev);
      prev = v;
    }
  }
}

TEST(Corpus, CountsDeterminismAndRange) {
  std::vector<DatasetMeta> ds{{"x", "x", 0.2, 10}, {"y", "y", 0.8, 100}};
  const auto clock = fixed_clock("2026-01-01T00:00:00Z");
  const auto a = generate_synthetic_corpus(ds, 3, SearchSpaceConfig{}, 5, clock);
  ASSERT_EQ(a.size(), 6u);
  EXPECT_EQ(a, generate_synthetic_corpus(ds, 3, SearchSpaceConfig{}, 5, clock));
  const DatasetRegistry reg(ds);
  for (const auto& r : generate_synthetic_corpus(ds, 200, SearchSpaceConfig{}, 5, clock)) {
    ASSERT_EQ(r.prefix_accuracies.size(), r.layers.size());
    const int nc = reg.at(r.dataset_id).num_classes;
    for (std::size_t k = 0; k < r.layers.size(); ++k) {
      const double acc = r.prefix_accuracies[k];
      ASSERT_GE(acc, 1.0 / nc);
      ASSERT_LT(acc, 1.0);
      ASSERT_EQ(acc, pseudo_accuracy(prefix(architecture_of(r, reg), k + 1), reg.at(r.dataset_id).dcn, nc));
    }
  }
}

TEST(Corpus, NetworkSeedsFollowDerivation) {
  const auto ds = oracle::five_datasets();
  const auto corpus = generate_synthetic_corpus(ds, 4, SearchSpaceConfig{}, 7, fixed_clock("t"));
  for (std::size_t d = 0; d < 5; ++d)
    for (std::size_t n = 0; n < 4; ++n)
      EXPECT_EQ(corpus[d * 4 + n].layers,
                sample(SearchSpaceConfig{}, 10, derive_seed(derive_seed(7, d), n)).layers);
}
