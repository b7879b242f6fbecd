#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "pah/errors.hpp"
#include "pah/retrieval.hpp"

using namespace pah;

namespace {

Descriptor make(std::vector<double> f, int identity, int clothes = 0, int sample = 0) {
  Descriptor d;
  d.f_final = std::move(f);
  d.identity = identity;
  d.clothes_id = clothes;
  d.sample_id = sample;
  return d;
}

}  // namespace

TEST(Cosine, BasicValues) {
  const std::vector<double> a{1, 0}, b{0, 3}, c{-2, 0}, d{2, 2};
  EXPECT_EQ(cosine_similarity(a, a), 1.0);
  EXPECT_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_EQ(cosine_similarity(a, c), -1.0);
  EXPECT_NEAR(cosine_similarity(a, d), std::sqrt(0.5), 1e-15);
  const std::vector<double> zero{0, 0};
  EXPECT_THROW(cosine_similarity(a, zero), DegenerateDescriptorError);
  const std::vector<double> longer{1, 2, 3};
  EXPECT_THROW(cosine_similarity(a, longer), DimensionError);
}

TEST(Ranking, DescendingWithIndexTieBreak) {
  const std::vector<double> s{0.2, 0.9, 0.2, 0.5, 0.9};
  const auto r = rank_by_similarity(s);
  const std::vector<std::size_t> expect{1, 4, 3, 0, 2};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r[i].index, expect[i]);
  EXPECT_THROW(rank_gallery(make({1.0}, 0), {}), ContractError);
}

TEST(Cmc, FirstHitAtRankThree) {
  const RankingTable t{{2, 3, 1, 1}};
  const std::vector<int> ids{1};
  EXPECT_EQ(cmc_rank_k(t, ids, 1), 0.0);
  EXPECT_EQ(cmc_rank_k(t, ids, 2), 0.0);
  EXPECT_EQ(cmc_rank_k(t, ids, 3), 1.0);
  EXPECT_EQ(cmc_rank_k(t, ids, 50), 1.0);
  EXPECT_THROW(cmc_rank_k(t, ids, 0), ContractError);
}

TEST(Cmc, IsNonDecreasingInK) {
  std::mt19937_64 rng(1);
  auto q = test::random_descriptors(rng, 20, 4, 5, 2, 0);
  auto g = test::random_descriptors(rng, 40, 4, 5, 2, 100);
  EvalOptions o;
  o.k_max = 40;
  const EvalReport r = evaluate(q, g, o);
  for (const auto& s : r.scenarios)
    for (std::size_t k = 1; k < s.cmc.size(); ++k) EXPECT_GE(s.cmc[k], s.cmc[k - 1]);
}

TEST(Map, AveragePrecisionOfOneQuery) {
  const RankingTable t{{1, 0, 1}};
  const std::vector<int> ids{1};
  EXPECT_DOUBLE_EQ(mean_average_precision(t, ids).value, 5.0 / 6.0);
}

TEST(Map, QueriesWithoutMatchesAreExcluded) {
  const RankingTable t{{1, 1}, {2, 2}};
  const std::vector<int> ids{1, 3};
  const MapResult r = mean_average_precision(t, ids);
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.valid_queries, 1u);
  EXPECT_EQ(r.excluded_queries, 1u);
  const std::vector<int> none{4, 5};
  EXPECT_THROW(mean_average_precision(t, none), UndefinedMetricError);
}

TEST(Scenarios, KeepRules) {
  const Descriptor q = make({1}, 1, 0, 5);
  const Descriptor same = make({1}, 1, 0, 6), cross = make({1}, 1, 1, 7), other = make({1}, 2, 0, 8);
  EXPECT_TRUE(scenario_keeps(Scenario::kSame, q, same, false));
  EXPECT_FALSE(scenario_keeps(Scenario::kSame, q, cross, false));
  EXPECT_FALSE(scenario_keeps(Scenario::kCross, q, same, false));
  EXPECT_TRUE(scenario_keeps(Scenario::kCross, q, cross, false));
  for (Scenario s : {Scenario::kGeneral, Scenario::kSame, Scenario::kCross})
    EXPECT_TRUE(scenario_keeps(s, q, other, false));
  EXPECT_FALSE(scenario_keeps(Scenario::kGeneral, q, q, true));
  EXPECT_EQ(parse_scenario("cross"), Scenario::kCross);
  EXPECT_THROW(parse_scenario("mixed"), ConfigError);
}

TEST(Evaluate, CrossClothesIgnoresSameOutfitMatch) {
  // The same-outfit image is the nearest; cross-clothes must look past it.
  std::vector<Descriptor> q{make({1, 0}, 1, 0)};
  std::vector<Descriptor> g{make({1, 0.01}, 1, 0), make({1, 0.3}, 2, 0), make({1, 0.5}, 1, 1)};
  const EvalReport r = evaluate(q, g);
  EXPECT_EQ(r.at(Scenario::kGeneral).cmc[0], 1.0);
  EXPECT_EQ(r.at(Scenario::kSame).cmc[0], 1.0);
  EXPECT_EQ(r.at(Scenario::kCross).cmc[0], 0.0);
  EXPECT_EQ(r.at(Scenario::kCross).cmc[1], 1.0);
  EXPECT_DOUBLE_EQ(r.at(Scenario::kCross).map, 0.5);
}

TEST(Evaluate, SelfMatchCanBeExcluded) {
  std::vector<Descriptor> q{make({1, 0}, 1, 0, 3)};
  std::vector<Descriptor> g{make({1, 0}, 1, 0, 3), make({0, 1}, 2, 0, 4), make({1, 1}, 1, 0, 5)};
  EvalOptions o;
  o.scenarios = {Scenario::kGeneral};
  EXPECT_EQ(evaluate(q, g, o).at(Scenario::kGeneral).map, 1.0);
  o.exclude_same_sample = true;
  const EvalReport r = evaluate(q, g, o);
  EXPECT_EQ(r.at(Scenario::kGeneral).cmc[0], 1.0);
  EXPECT_EQ(r.at(Scenario::kGeneral).valid_queries, 1u);
}

TEST(Evaluate, MetricsIgnoreDescriptorScale) {
  std::mt19937_64 rng(2);
  auto q = test::random_descriptors(rng, 10, 5, 4, 2, 0);
  auto g = test::random_descriptors(rng, 30, 5, 4, 2, 100);
  const EvalReport a = evaluate(q, g);
  for (auto& d : g)
    for (double& v : d.f_final) v *= 4.0;  // power of two keeps cosine bit-identical
  const EvalReport b = evaluate(q, g);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_EQ(a.scenarios[s].cmc, b.scenarios[s].cmc);
    EXPECT_EQ(a.scenarios[s].map, b.scenarios[s].map);
  }
}

TEST(Evaluate, EmptyInputs) {
  std::vector<Descriptor> one{make({1}, 0)};
  EXPECT_THROW(evaluate(one, {}), ContractError);
  EXPECT_THROW(evaluate({}, one), UndefinedMetricError);
}

class RetrievalOracle : public ::testing::TestWithParam<int> {};

TEST_P(RetrievalOracle, BitEqualToBruteForce) {
  std::mt19937_64 rng(500 + GetParam());
  const std::size_t nq = 1 + rng() % 20, ng = 1 + rng() % 40;
  auto q = test::random_descriptors(rng, nq, 3, 6, 2, 0);
  auto g = test::random_descriptors(rng, ng, 3, 6, 2, 1000);
  EvalOptions o;
  o.k_max = 10;
  for (Scenario s : {Scenario::kGeneral, Scenario::kSame, Scenario::kCross}) {
    const auto oracle = test::metrics_oracle(q, g, s, o.k_max);
    if (oracle.valid == 0) continue;
    o.scenarios = {s};
    const EvalReport report = evaluate(q, g, o);
    const ScenarioReport& r = report.at(s);
    EXPECT_EQ(r.valid_queries, oracle.valid);
    EXPECT_EQ(r.cmc, oracle.cmc);
    EXPECT_EQ(r.map, oracle.map);
  }
}

INSTANTIATE_TEST_SUITE_P(Random, RetrievalOracle, ::testing::Range(0, 30));

TEST(Report, CsvRows) {
  std::vector<Descriptor> q{make({1, 0}, 1, 0)};
  std::vector<Descriptor> g{make({1, 0}, 1, 0), make({0, 1}, 2, 0)};
  EvalOptions o;
  o.k_max = 2;
  const auto path = std::filesystem::temp_directory_path() / "pah_report_test.csv";
  write_report_csv(path, evaluate(q, g, o));
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  std::filesystem::remove(path);
  ASSERT_FALSE(lines.empty());
  EXPECT_EQ(lines.front(), "split,metric,value");
  EXPECT_NE(std::find(lines.begin(), lines.end(), "general,rank1,1"), lines.end());
  EXPECT_NE(std::find(lines.begin(), lines.end(), "cross,excluded_queries,1"), lines.end());
  EXPECT_EQ(lines.back(), "all,num_gallery,2");
}
