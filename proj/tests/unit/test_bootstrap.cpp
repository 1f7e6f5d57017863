#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "mrct/asymptotics.hpp"
#include "mrct/bootstrap.hpp"
#include "mrct/error.hpp"
#include "mrct/simharness.hpp"

using namespace mrct;
using Catch::Approx;

namespace {

struct CaseStudy {
  StudyDesign design{{0, 1, 2, 3, 4},
                     {{12, 12, 12, 11, 11}, {29, 28, 28, 28, 28}, {34, 34, 34, 34, 34}},
                     {1.0 / 7, 3.0 / 7, 3.0 / 7},
                     {"J", "A", "E"}};
  std::vector<ModelSpec> specs = std::vector<ModelSpec>(3, ModelSpec::defaults(Family::EmaxFixedHill, 4));
  std::vector<CellSummary> cells =
      summarize(load_csv(std::filesystem::path(MRCT_SOURCE_DIR) / "data/case_study.csv", design), design);
};

const CaseStudy& case_study() {
  static const CaseStudy cs;
  return cs;
}

struct Sim {
  StudyDesign design = standard_design(SubgroupSizes::Balanced, DoseAllocation::Equal);
  std::vector<ModelSpec> specs = std::vector<ModelSpec>(3, ModelSpec::defaults(Family::EmaxFixedHill, 150));
  std::vector<CellSummary> cells;

  explicit Sim(double ed50, double emax = 0.42, std::uint64_t seed = 3) {
    std::vector<DoseResponseModel> truth{DoseResponseModel::emax({0, emax, ed50, 1}, 150),
                                         DoseResponseModel::emax({0, 0.46, 26, 1}, 150),
                                         DoseResponseModel::emax({0, 0.46, 25.5, 1}, 150)};
    cells = generate_summary(design, truth, std::vector<double>(3, 0.01), seed);
  }
};

TestConfig config(Target t, int B = 200, double delta = 0.1) {
  TestConfig c;
  c.delta = delta;
  c.alphas = {0.05, 0.1};
  c.B = B;
  c.seed = 77;
  c.target = std::move(t);
  return c;
}

}  // namespace

TEST_CASE("quantile is the order statistic at rank ceil(alpha B)") {
  BootstrapDistribution dist({5, 1, 4, 2, 3, 10, 9, 8, 7, 6});
  CHECK(dist.quantile(0.1) == 1);
  CHECK(dist.quantile(0.11) == 2);
  CHECK(dist.quantile(0.3) == 3);
  CHECK(dist.quantile(0.7) == 7);  // 0.7 * 10 rounds above 7 in floating point
  CHECK(dist.quantile(0.999) == 10);
  CHECK(dist.quantile(0.001) == 1);
  CHECK(dist.p_value(0.5) == 0.0);
  CHECK(dist.p_value(3) == 0.3);  // ties count
  CHECK(dist.p_value(3.5) == 0.3);
  CHECK(dist.p_value(11) == 1.0);
}

TEST_CASE("rejection by quantile and by p-value agree") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> bsize(1, 60), level(0, 1000);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 2000; ++rep) {
    std::vector<double> v(bsize(rng));
    // coarse values force ties
    for (auto& x : v) x = std::round(u(rng) * 20) / 20;
    BootstrapDistribution dist(v);
    const double stat = std::round(u(rng) * 20) / 20;
    const double alpha = std::max(1, level(rng)) / 1001.0;
    CHECK((stat < dist.quantile(alpha)) == (dist.p_value(stat) < alpha));
  }
}

TEST_CASE("single replicate gives a p-value of 0 or 1") {
  const auto& cs = case_study();
  auto r = test_one(cs.cells, cs.design, cs.specs, config(Target::one(2), 1, 0.4));
  CHECK((r.p_value == 0.0 || r.p_value == 1.0));
  CHECK(r.distribution.values.size() == 1);
}

TEST_CASE("test result invariants") {
  Sim sim(7);
  auto r = test_one(sim.cells, sim.design, sim.specs, config(Target::one(0)));
  REQUIRE(r.distribution.values.size() == 200);
  CHECK(r.p_value == r.distribution.p_value(r.statistic));
  for (const auto& l : r.levels) {
    CHECK(l.quantile == r.distribution.quantile(l.alpha));
    CHECK(l.reject == (r.statistic < l.quantile));
    CHECK(l.reject == (r.p_value < l.alpha));
  }
  CHECK(r.reject == r.levels.front().reject);
  CHECK(r.constrained.active == (r.statistic < 0.1));
}

TEST_CASE("one-element MANY target reproduces the ONE test") {
  Sim sim(10, 0.42, 5);
  auto one = test_one(sim.cells, sim.design, sim.specs, config(Target::one(0)));
  auto many = test_many(sim.cells, sim.design, sim.specs, config(Target::many({0})));
  CHECK(one.statistic == many.statistic);
  CHECK(one.distribution.values == many.distribution.values);
  CHECK(one.p_value == many.p_value);
}

TEST_CASE("MANY statistic is the largest ONE statistic") {
  const auto& cs = case_study();
  auto many = test_many(cs.cells, cs.design, cs.specs, config(Target::many({0, 1, 2}), 20, 0.4));
  double best = 0.0;
  for (int i = 0; i < 3; ++i) {
    best = std::max(best, test_one(cs.cells, cs.design, cs.specs, config(Target::one(i), 20, 0.4)).statistic);
  }
  CHECK(many.statistic == best);
}

TEST_CASE("results do not depend on the worker count") {
  Sim sim(8, 0.42, 11);
  auto c1 = config(Target::many({0, 1, 2}));
  auto c4 = c1;
  c4.workers = 4;
  auto a = test_many(sim.cells, sim.design, sim.specs, c1);
  auto b = test_many(sim.cells, sim.design, sim.specs, c4);
  CHECK(a.distribution.values == b.distribution.values);
  CHECK(a.p_value == b.p_value);
}

TEST_CASE("intersection-union summary") {
  const auto& cs = case_study();
  auto iu = test_many_iu(cs.cells, cs.design, cs.specs, config(Target::intersection_union({0, 1, 2}), 100, 0.4));
  REQUIRE(iu.components.size() == 3);
  double pmax = 0.0;
  bool all = true;
  for (const auto& c : iu.components) {
    pmax = std::max(pmax, c.p_value);
    all = all && c.reject;
  }
  CHECK(iu.p_value == pmax);
  CHECK(iu.reject == all);
  for (std::size_t a = 0; a < iu.levels.size(); ++a) {
    bool every = true;
    for (const auto& c : iu.components) every = every && c.levels[a].reject;
    CHECK(iu.levels[a].reject == every);
  }

  auto single = test_many_iu(cs.cells, cs.design, cs.specs, config(Target::intersection_union({2}), 100, 0.4));
  auto one = test_one(cs.cells, cs.design, cs.specs, config(Target::one(2), 100, 0.4));
  CHECK(single.reject == one.reject);
  CHECK(single.p_value == one.p_value);
}

TEST_CASE("intersection-union rejection implies every component rejects on boundary data") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Sim sim(25, 0.47, 40 + seed);
    auto iu = test_many_iu(sim.cells, sim.design, sim.specs, config(Target::intersection_union({0, 1, 2}), 100));
    if (iu.reject) {
      for (const auto& c : iu.components) CHECK(c.reject);
    }
  }
}

TEST_CASE("threshold calibration with common random numbers") {
  const auto& cs = case_study();
  std::vector<double> grid;
  for (int i = 1; i <= 16; ++i) grid.push_back(0.05 * i);
  auto cfg = config(Target::many({0, 1, 2}), 200);
  cfg.alphas = {0.05};
  auto r = calibrate_delta(cs.cells, cs.design, cs.specs, cfg, grid);
  REQUIRE(r.curve.size() == grid.size());
  CHECK(r.quantile_violations == 0);
  CHECK(r.decision_violations == 0);
  // below the statistic the bootstrap is drawn from the same unconstrained fit
  for (const auto& p : r.curve) {
    if (p.delta <= r.statistic) {
      CHECK_FALSE(p.constrained);
      CHECK(p.p_value == r.curve.front().p_value);
    }
  }
  REQUIRE(r.delta_hat);
  for (const auto& p : r.curve) CHECK(p.reject == (p.delta >= *r.delta_hat));
  // large thresholds reject
  CHECK(r.curve.back().reject);
}

TEST_CASE("calibration without any rejection reports none") {
  const auto& cs = case_study();
  std::vector<double> grid{0.01, 0.02};
  auto r = calibrate_delta(cs.cells, cs.design, cs.specs, config(Target::one(0), 50), grid);
  CHECK_FALSE(r.delta_hat);
  std::vector<double> bad{0.2, 0.1};
  CHECK_THROWS_AS(calibrate_delta(cs.cells, cs.design, cs.specs, config(Target::one(0), 50), bad), ConfigError);
}

TEST_CASE("failed refits are counted and abort the test past the limit") {
  // Without the quasi-Newton finish, plain Levenberg-Marquardt crawls on one
  // of these replicates and runs out of iterations.
  const auto& cs = case_study();
  auto cfg = config(Target::one(0), 50, 0.01);
  cfg.fit.lm.quasi_newton_fallback = false;
  cfg.max_failure_fraction = 0.05;
  auto r = test_one(cs.cells, cs.design, cs.specs, cfg);
  CHECK(r.failed_replicates == 1);
  CHECK(r.distribution.values.size() == 50);
  cfg.max_failure_fraction = 0.0;
  CHECK_THROWS_AS(test_one(cs.cells, cs.design, cs.specs, cfg), BootstrapError);
  cfg.fit.lm.quasi_newton_fallback = true;
  CHECK(test_one(cs.cells, cs.design, cs.specs, cfg).failed_replicates == 0);
}

TEST_CASE("bootstrap quantiles sit where the limit law puts them") {
  // At the constrained fit the statistic is d = delta at one extremal point,
  // so q_alpha is close to delta + q_T(alpha) / sqrt(n).
  const auto& cs = case_study();
  for (int i : {1, 2}) {
    auto r = test_one(cs.cells, cs.design, cs.specs, config(Target::one(i), 1000, 0.4));
    REQUIRE(r.constrained.active);
    auto asym = AsymptoticModel::from_design(cs.design, r.constrained.beta_hathat, r.fit.sigma2);
    auto t = sample_T(asym, i, 200000, 5);
    BootstrapDistribution limit(t.values);
    const double sqrt_n = std::sqrt(369.0);
    for (const auto& l : r.levels) {
      INFO("subgroup " << i << " alpha " << l.alpha);
      CHECK(l.quantile == Approx(0.4 + limit.quantile(l.alpha) / sqrt_n).margin(0.03));
    }
  }
}

TEST_CASE("configuration errors") {
  const auto& cs = case_study();
  auto bad = [&](auto mutate) {
    auto c = config(Target::one(0), 10, 0.4);
    mutate(c);
    CHECK_THROWS_AS(test_many(cs.cells, cs.design, cs.specs, c), ConfigError);
  };
  bad([](TestConfig& c) { c.delta = 0; });
  bad([](TestConfig& c) { c.alphas = {}; });
  bad([](TestConfig& c) { c.alphas = {1.0}; });
  bad([](TestConfig& c) { c.B = 0; });
  bad([](TestConfig& c) { c.target = Target::many({0, 0}); });
  bad([](TestConfig& c) { c.target = Target::many({3}); });
  bad([](TestConfig& c) { c.target = Target::intersection_union({0}); });
}
