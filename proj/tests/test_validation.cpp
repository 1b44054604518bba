#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "annot/errors.hpp"
#include "annot/rng.hpp"
#include "annot/validation.hpp"

using namespace annot;
using namespace annot::validation;

namespace {

SampleSizeParams params_for(std::int64_t population, double p = 0.96, double me = 0.01,
                            double z = 1.959963984540054) {
  SampleSizeParams s;
  s.population = population;
  s.expected_accuracy = p;
  s.margin_error = me;
  s.z = z;
  return s;
}

}  // namespace

TEST_SUITE("validation") {

TEST_CASE("sample size frozen values") {
  CHECK(required_sample_size(params_for(99406)) == 1454);
  CHECK(required_sample_size(params_for(44527)) == 1428);
  // Infinite-population classic: p=0.5, ME=0.01 -> 9604.
  CHECK(required_sample_size(params_for(1000000000, 0.5)) == 9604);
  CHECK(required_sample_size(params_for(600)) == 427);
}

TEST_CASE("sample size caps at the population") {
  CHECK(required_sample_size(params_for(10)) == 10);
  CHECK(required_sample_size(params_for(1)) == 1);
}

TEST_CASE("sample size shrinks with population and grows with confidence") {
  auto n_small = required_sample_size(params_for(5000));
  auto n_big = required_sample_size(params_for(500000));
  CHECK(n_small < n_big);
  auto wide = required_sample_size(params_for(99406, 0.96, 0.02));
  CHECK(wide < 1454);
  auto z99 = required_sample_size(params_for(99406, 0.96, 0.01, 2.5758293035489004));
  CHECK(z99 > 1454);
}

TEST_CASE("sample size input validation") {
  CHECK_THROWS_AS(required_sample_size(params_for(0)), ParameterError);
  CHECK_THROWS_AS(required_sample_size(params_for(100, 0.0)), ParameterError);
  CHECK_THROWS_AS(required_sample_size(params_for(100, 1.0)), ParameterError);
  CHECK_THROWS_AS(required_sample_size(params_for(100, 0.96, 0.0)), ParameterError);
  auto bad_z = params_for(100);
  bad_z.z = 0.0;
  CHECK_THROWS_AS(required_sample_size(bad_z), ParameterError);
}

TEST_CASE("stratum weights from counts") {
  std::vector<StratumItem> items{{"a", "s1"}, {"b", "s1"}, {"c", "s1"}, {"d", "s2"}};
  auto w = stratum_weights(items);
  REQUIRE(w.size() == 2);
  CHECK(w[0].first == "s1");
  CHECK(w[0].second == doctest::Approx(0.75));
  CHECK(w[1].second == doctest::Approx(0.25));
}

TEST_CASE("external weights must cover exactly the observed strata") {
  std::vector<StratumItem> items{{"a", "s1"}, {"b", "s2"}};
  std::map<std::string, double> good{{"s1", 30.0}, {"s2", 10.0}};
  auto w = stratum_weights(items, &good);
  CHECK(w[0].second == doctest::Approx(0.75));

  std::map<std::string, double> missing{{"s1", 30.0}};
  CHECK_THROWS_AS(stratum_weights(items, &missing), ParameterError);
  std::map<std::string, double> extraneous{{"s1", 1.0}, {"s2", 1.0}, {"s3", 1.0}};
  CHECK_THROWS_AS(stratum_weights(items, &extraneous), ParameterError);
}

TEST_CASE("largest remainder hand cases") {
  std::map<std::string, std::int64_t> pops{{"A", 100}, {"B", 100}, {"C", 100}};
  std::vector<std::pair<std::string, double>> w{{"A", 0.5}, {"B", 0.3}, {"C", 0.2}};

  auto exact = allocate_strata(w, 10, pops);
  CHECK(exact[0].allocated == 5);
  CHECK(exact[1].allocated == 3);
  CHECK(exact[2].allocated == 2);

  // quotas 3.5 / 2.1 / 1.4: floors 3/2/1, extra unit to the .5 remainder.
  auto seven = allocate_strata(w, 7, pops);
  CHECK(seven[0].allocated == 4);
  CHECK(seven[1].allocated == 2);
  CHECK(seven[2].allocated == 1);
}

TEST_CASE("remainder ties break on stratum key") {
  std::map<std::string, std::int64_t> pops{{"A", 10}, {"B", 10}, {"C", 10}};
  std::vector<std::pair<std::string, double>> w{
      {"A", 1.0 / 3}, {"B", 1.0 / 3}, {"C", 1.0 / 3}};
  auto got = allocate_strata(w, 4, pops);
  CHECK(got[0].allocated == 2);  // tie -> key order
  CHECK(got[1].allocated == 1);
  CHECK(got[2].allocated == 1);
}

TEST_CASE("population caps redistribute the shortfall") {
  std::map<std::string, std::int64_t> pops{{"A", 5}, {"B", 100}};
  std::vector<std::pair<std::string, double>> w{{"A", 0.9}, {"B", 0.1}};
  auto got = allocate_strata(w, 10, pops);
  CHECK(got[0].allocated == 5);
  CHECK(got[1].allocated == 5);
}

TEST_CASE("infeasible totals are rejected") {
  std::map<std::string, std::int64_t> pops{{"A", 3}, {"B", 2}};
  std::vector<std::pair<std::string, double>> w{{"A", 0.5}, {"B", 0.5}};
  CHECK_THROWS_AS(allocate_strata(w, 6, pops), ParameterError);
  CHECK_THROWS_AS(allocate_strata(w, 0, pops), ParameterError);
  auto full = allocate_strata(w, 5, pops);
  CHECK(full[0].allocated + full[1].allocated == 5);
}

TEST_CASE("allocation properties over random vectors") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t K = 1 + uniform_index(rng, 8);
    std::vector<std::pair<std::string, double>> w;
    std::map<std::string, std::int64_t> pops;
    double total_w = 0.0;
    std::int64_t total_pop = 0;
    for (std::size_t k = 0; k < K; ++k) {
      std::string key = "s" + std::to_string(k);
      double weight = 1.0 + static_cast<double>(uniform_index(rng, 1000));
      std::int64_t pop = 1 + static_cast<std::int64_t>(uniform_index(rng, 40));
      w.emplace_back(key, weight);
      pops[key] = pop;
      total_w += weight;
      total_pop += pop;
    }
    for (auto& [_, weight] : w) weight /= total_w;
    std::int64_t n = 1 + static_cast<std::int64_t>(uniform_index(rng, total_pop));

    auto got = allocate_strata(w, n, pops);
    std::int64_t sum = 0;
    for (std::size_t k = 0; k < K; ++k) {
      sum += got[k].allocated;
      CHECK(got[k].allocated >= 0);
      CHECK(got[k].allocated <= pops.at(got[k].stratum));
      // Never below the floor of the quota unless capped.
      auto floor_quota =
          static_cast<std::int64_t>(std::floor(w[k].second * static_cast<double>(n)));
      if (got[k].allocated < floor_quota) CHECK(got[k].allocated == pops.at(got[k].stratum));
    }
    CHECK(sum == n);
  }
}

TEST_CASE("uncapped allocation stays within one of its quota") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t K = 2 + uniform_index(rng, 6);
    std::vector<std::pair<std::string, double>> w;
    std::map<std::string, std::int64_t> pops;
    double total_w = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      std::string key = "s" + std::to_string(k);
      double weight = 1.0 + static_cast<double>(uniform_index(rng, 1000));
      w.emplace_back(key, weight);
      pops[key] = 1000000;  // effectively uncapped
      total_w += weight;
    }
    for (auto& [_, weight] : w) weight /= total_w;
    std::int64_t n = 1 + static_cast<std::int64_t>(uniform_index(rng, 5000));
    auto got = allocate_strata(w, n, pops);
    for (std::size_t k = 0; k < K; ++k) {
      double quota = w[k].second * static_cast<double>(n);
      CHECK(got[k].allocated >= static_cast<std::int64_t>(std::floor(quota)));
      CHECK(got[k].allocated <= static_cast<std::int64_t>(std::ceil(quota)));
    }
  }
}

TEST_CASE("stratified draw is deterministic and respects the allocation") {
  std::vector<StratumItem> items;
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 20; ++i)
      items.push_back({"id" + std::to_string(s) + "_" + std::to_string(i),
                       "s" + std::to_string(s)});
  auto weights = stratum_weights(items);
  std::map<std::string, std::int64_t> pops{{"s0", 20}, {"s1", 20}, {"s2", 20}};
  auto alloc = allocate_strata(weights, 12, pops);

  auto a = draw_stratified(items, alloc, 99);
  auto b = draw_stratified(items, alloc, 99);
  auto c = draw_stratified(items, alloc, 100);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.size() == 12);
  std::set<std::string> uniq(a.begin(), a.end());
  CHECK(uniq.size() == a.size());

  std::map<std::string, std::string> stratum_of;
  for (const auto& it : items) stratum_of[it.id] = it.stratum;
  std::map<std::string, std::int64_t> drawn;
  for (const auto& id : a) ++drawn[stratum_of.at(id)];
  for (const auto& al : alloc) CHECK(drawn[al.stratum] == al.allocated);
}

TEST_CASE("stratified draw ignores allocation vector order") {
  std::vector<StratumItem> items;
  for (int s = 0; s < 2; ++s)
    for (int i = 0; i < 10; ++i)
      items.push_back({"x" + std::to_string(s) + "_" + std::to_string(i),
                       "s" + std::to_string(s)});
  std::vector<StratumAllocation> fwd{{"s0", 0.5, 3}, {"s1", 0.5, 3}};
  std::vector<StratumAllocation> rev{{"s1", 0.5, 3}, {"s0", 0.5, 3}};
  CHECK(draw_stratified(items, fwd, 5) == draw_stratified(items, rev, 5));
}

TEST_CASE("plain draw determinism and bounds") {
  std::vector<std::string> ids;
  for (int i = 0; i < 50; ++i) ids.push_back("id" + std::to_string(i));
  auto a = draw_plain(ids, 10, 7);
  auto b = draw_plain(ids, 10, 7);
  CHECK(a == b);
  CHECK(a.size() == 10);
  std::set<std::string> uniq(a.begin(), a.end());
  CHECK(uniq.size() == 10);
  CHECK(draw_plain(ids, 50, 1).size() == 50);
  CHECK_THROWS_AS(draw_plain(ids, 51, 1), ParameterError);
}

TEST_CASE("compare_gold worked example") {
  std::vector<std::string> ids;
  std::map<std::string, std::string> gold, pred, strata;
  for (int i = 0; i < 1453; ++i) {
    std::string id = "i" + std::to_string(i);
    ids.push_back(id);
    gold[id] = "evaluative";
    pred[id] = i < 11 ? "non_evaluative" : "evaluative";  // 11 disagreements
    strata[id] = i % 2 ? "odd" : "even";
  }
  auto r = compare_gold(ids, gold, pred, strata);
  CHECK(r.total_sampled == 1453);
  CHECK(r.total_correct == 1442);
  CHECK(r.accuracy == doctest::Approx(0.9924294563).epsilon(1e-9));
  CHECK(r.disagreements.size() == 11);
  CHECK(r.wilson.first == doctest::Approx(0.9864944926).epsilon(1e-8));
  CHECK(r.wilson.second == doctest::Approx(0.9957675040).epsilon(1e-8));
  REQUIRE(r.per_stratum.size() == 2);
  CHECK(r.per_stratum[0].sampled + r.per_stratum[1].sampled == 1453);
}

TEST_CASE("compare_gold matches labels case-insensitively") {
  std::map<std::string, std::string> gold{{"a", "Non-Evaluative"}};
  std::map<std::string, std::string> pred{{"a", "non_evaluative"}};
  auto r = compare_gold({"a"}, gold, pred);
  CHECK(r.total_correct == 1);
  CHECK(r.per_stratum[0].stratum == "(unstratified)");
}

TEST_CASE("compare_gold reports missing inputs") {
  std::map<std::string, std::string> gold{{"a", "x"}};
  std::map<std::string, std::string> pred{{"a", "x"}};
  CHECK_THROWS_AS(compare_gold({"a", "b"}, gold, pred), ValidationError);
  CHECK_THROWS_AS(compare_gold({}, gold, pred), ValidationError);
}

}  // TEST_SUITE
