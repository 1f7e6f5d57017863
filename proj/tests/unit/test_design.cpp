#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "mrct/error.hpp"
#include "mrct/design.hpp"
#include "mrct/simharness.hpp"

using namespace mrct;
using Catch::Matchers::ContainsSubstring;

namespace {

StudyDesign case_study_design() {
  return StudyDesign({0, 1, 2, 3, 4}, {{12, 12, 12, 11, 11}, {29, 28, 28, 28, 28}, {34, 34, 34, 34, 34}},
                     {1.0 / 7, 3.0 / 7, 3.0 / 7}, {"J", "A", "E"});
}

}  // namespace

TEST_CASE("three-row file loads against a one-subgroup design") {
  StudyDesign d({0, 1, 2}, {{1, 1, 1}}, {1.0});
  auto data = parse_csv("subgroup,dose,response\n1,0,0.5\n1,1,0.7\n1,2,0.9\n", d);
  REQUIRE(data.size() == 3);
  CHECK(data.records()[2].dose_index == 2);
  CHECK(data.records()[2].response == 0.9);
}

TEST_CASE("unknown dose is reported with its value and line") {
  StudyDesign d({0, 1, 2}, {{1, 1, 1}}, {1.0});
  CHECK_THROWS_WITH(parse_csv("subgroup,dose,response\n1,0,0.5\n1,5,0.7\n1,2,0.9\n", d),
                    ContainsSubstring("unknown dose level 5") && ContainsSubstring(":3:"));
}

TEST_CASE("csv parser errors") {
  StudyDesign d({0, 1}, {{1, 1}, {1, 1}}, {0.5, 0.5});
  CHECK_THROWS_AS(parse_csv("", d), DataError);
  CHECK_THROWS_WITH(parse_csv("group,dose,response\n", d), ContainsSubstring("header"));
  CHECK_THROWS_WITH(parse_csv("subgroup,dose,response\n1,0,abc\n", d), ContainsSubstring(":2: cannot parse"));
  CHECK_THROWS_WITH(parse_csv("subgroup,dose,response\n3,0,1\n", d), ContainsSubstring("subgroup 3 outside 1..2"));
  // Count mismatch lists every offending cell.
  CHECK_THROWS_WITH(parse_csv("subgroup,dose,response\n1,0,1\n1,0,1\n1,1,1\n", d),
                    ContainsSubstring("subgroup 1 dose 0: 2 observations") &&
                        ContainsSubstring("subgroup 2 dose 0: 0 observations") &&
                        ContainsSubstring("subgroup 2 dose 1: 0 observations"));
}

TEST_CASE("csv accepts BOM, CRLF, blank lines and equivalent decimal spellings") {
  StudyDesign d({0, 1.5}, {{1, 1}}, {1.0});
  auto data = parse_csv("\xEF\xBB\xBFsubgroup,dose,response\r\n1,0.0,1\r\n\r\n1,1.50,-2e-1\r\n", d);
  REQUIRE(data.size() == 2);
  CHECK(data.records()[1].dose_index == 1);
  CHECK(data.records()[1].response == -0.2);
}

TEST_CASE("shipped case-study file validates against the three-region design") {
  auto design = case_study_design();
  auto data = load_csv(std::filesystem::path(MRCT_SOURCE_DIR) / "data/case_study.csv", design);
  CHECK(data.size() == 369);
  CHECK(design.subgroup_size(0) == 58);
  CHECK(design.subgroup_size(1) == 141);
  CHECK(design.subgroup_size(2) == 170);
  auto cells = summarize(data, design);
  CHECK(cells[2].n == 170);
}

TEST_CASE("design invariants are enforced") {
  CHECK_THROWS_AS(StudyDesign({1, 2}, {{1, 1}}, {1.0}), DataError);             // no placebo
  CHECK_THROWS_AS(StudyDesign({0, 2, 2}, {{1, 1, 1}}, {1.0}), DataError);        // not increasing
  CHECK_THROWS_AS(StudyDesign({0, 2}, {{1, 0}}, {1.0}), DataError);              // empty cell
  CHECK_THROWS_AS(StudyDesign({0, 2}, {{1, 1}, {1, 1}}, {0.5, 0.6}), DataError);  // weights
  CHECK_THROWS_AS(StudyDesign({0, 2}, {{1, 1}, {1, 1}}, {1.0, 0.0}), DataError);
  CHECK_THROWS_AS(StudyDesign({0, 2}, {{1, 1}}, {1.0}, {"a", "b"}), DataError);
  StudyDesign ok({0, 2}, {{1, 2}, {3, 4}}, {0.25, 0.75}, {"x", "y"});
  CHECK(ok.total_size() == 10);
  CHECK(ok.find_subgroup("y") == 1);
  CHECK(ok.find_subgroup("1") == 0);
  CHECK_FALSE(ok.find_subgroup("3"));
  CHECK(ok.scaled(3).count(1, 1) == 12);
}

TEST_CASE("noiseless generation reproduces the curves exactly") {
  StudyDesign d({0, 10, 25, 50, 100, 150}, {std::vector<int>(6, 3), std::vector<int>(6, 2)}, {0.4, 0.6});
  std::vector<DoseResponseModel> models{DoseResponseModel::emax({0.1, 0.42, 7.0, 1.0}, 150),
                                        DoseResponseModel::emax({0.0, 0.46, 26.0, 2.5}, 150)};
  auto data = generate(d, models, {{0.0, 0.0}}, 11);
  REQUIRE(data.size() == 30);
  for (const auto& r : data.records()) CHECK(r.response == models[r.subgroup].evaluate(d.doses()[r.dose_index]));
}

TEST_CASE("generation is deterministic and round-trips through csv bit-exactly") {
  auto design = case_study_design();
  std::vector<DoseResponseModel> models{DoseResponseModel::emax_fixed_hill(0.38, 0.66, 3.94, 4),
                                        DoseResponseModel::emax_fixed_hill(0.0, 0.68, 1.41, 4),
                                        DoseResponseModel::emax_fixed_hill(-0.03, 0.9, 0.85, 4)};
  GroupVariances var{{0.58, 0.67, 0.72}};
  auto a = generate(design, models, var, 99);
  auto b = generate(design, models, var, 99);
  auto c = generate(design, models, var, 100);
  REQUIRE(a.size() == b.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.records()[i].response == b.records()[i].response);
    any_diff = any_diff || a.records()[i].response != c.records()[i].response;
  }
  CHECK(any_diff);

  auto path = std::filesystem::temp_directory_path() / "mrct_roundtrip.csv";
  save_csv(path, a, design);
  auto back = load_csv(path, design);
  std::filesystem::remove(path);
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back.records()[i].subgroup == a.records()[i].subgroup);
    CHECK(back.records()[i].dose_index == a.records()[i].dose_index);
    CHECK(back.records()[i].response == a.records()[i].response);
  }
}

TEST_CASE("summary generation matches summarizing generated records") {
  auto design = standard_design(SubgroupSizes::Unbalanced, DoseAllocation::Unequal);
  std::vector<DoseResponseModel> models{DoseResponseModel::emax({0, 0.42, 7, 1}, 150),
                                        DoseResponseModel::emax({0, 0.46, 26, 1}, 150),
                                        DoseResponseModel::emax({0, 0.46, 25.5, 1}, 150)};
  std::vector<double> s2{0.01, 0.02, 0.03};
  auto direct = generate_summary(design, models, s2, 5);
  auto via = summarize(generate(design, models, {s2}, 5), design);
  for (int l = 0; l < 3; ++l) {
    CHECK(direct[l].n == via[l].n);
    CHECK(direct[l].within_ss == via[l].within_ss);
    for (int j = 0; j < 6; ++j) CHECK(direct[l].mean[j] == via[l].mean[j]);
  }
}

TEST_CASE("cell means converge to the curve") {
  const int n = 100000;
  StudyDesign d({0, 50}, {{n, n}}, {1.0});
  std::vector<DoseResponseModel> m{DoseResponseModel::emax({0.2, 0.46, 25, 1}, 50)};
  const double sigma = 0.3;
  auto cells = summarize(generate(d, m, {{sigma * sigma}}, 3), d);
  for (int j = 0; j < 2; ++j) {
    CHECK(std::abs(cells[0].mean[j] - m[0].evaluate(d.doses()[j])) < 5 * sigma / std::sqrt(double(n)));
  }
  // within-cell variance estimate, a by-product of the same summary
  CHECK(cells[0].within_ss / (2.0 * n) == Catch::Approx(sigma * sigma).epsilon(0.02));
}

TEST_CASE("standard designs") {
  auto a = standard_design(SubgroupSizes::Balanced, DoseAllocation::Equal);
  CHECK(a.total_size() == 450);
  for (int l = 0; l < 3; ++l) {
    CHECK(a.subgroup_size(l) == 150);
    for (int j = 0; j < 6; ++j) CHECK(a.count(l, j) == 25);
  }
  auto b = standard_design(SubgroupSizes::Balanced, DoseAllocation::Unequal);
  CHECK(b.allocations()[1] == std::vector<int>{35, 20, 20, 20, 20, 35});
  auto c = standard_design(SubgroupSizes::Unbalanced, DoseAllocation::Equal);
  CHECK(c.subgroup_size(0) == 66);
  CHECK(c.subgroup_size(1) == 192);
  CHECK(c.total_size() == 450);
  auto e = standard_design(SubgroupSizes::Unbalanced, DoseAllocation::Unequal);
  CHECK(e.allocations()[0] == std::vector<int>{15, 9, 9, 9, 9, 15});
  CHECK(e.allocations()[2] == std::vector<int>{46, 25, 25, 25, 25, 46});
  CHECK(e.total_size() == 450);
}
