#include <catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kSource = MRCT_SOURCE_DIR;

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run run(const std::string& args) {
  const std::string cmd = std::string("\"") + MRCT_CLI_PATH + "\" " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch() {
  auto dir = fs::temp_directory_path() / "mrct_cli_test";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

json config(const std::string& name) { return json::parse(slurp(kSource / "configs" / name)); }

// Writes a config next to the shipped ones' data by making the data path absolute.
fs::path write_config(const std::string& file, json cfg) {
  if (cfg.contains("data")) cfg["data"] = (kSource / "data/case_study.csv").string();
  auto p = scratch() / file;
  write(p, cfg.dump(2));
  return p;
}

std::string without_timestamp(std::string s) {
  return std::regex_replace(s, std::regex("\"timestamp\": *\"[^\"]*\""), "\"timestamp\": \"\"");
}

}  // namespace

TEST_CASE("fit writes one curve per subgroup plus the population") {
  auto out = scratch() / "fit.json";
  auto r = run("fit --config " + q(kSource / "configs/case_study_fit.json") + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.code == 0);
  auto j = json::parse(slurp(out));
  CHECK(j["schema_version"] == 1);
  CHECK(j["command"] == "fit");
  CHECK(j["models"].size() == 3);
  CHECK(j["curves"].contains("J"));
  CHECK(j["curves"].contains("A"));
  CHECK(j["curves"].contains("E"));
  CHECK(j["curves"].contains("population"));
  CHECK(j["curve_grid"].size() == 101);
  CHECK(j["curves"]["E"].size() == 101);
}

TEST_CASE("single-replicate test runs end to end") {
  auto cfg = config("case_study_test_E.json");
  cfg["test"]["B"] = 1;
  auto path = write_config("b1.json", cfg);
  auto out = scratch() / "b1_out.json";
  auto r = run("test --config " + q(path) + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.code == 0);
  auto j = json::parse(slurp(out));
  CHECK(j["bootstrap"]["B"] == 1);
  const double p = j["p_value"];
  CHECK((p == 0.0 || p == 1.0));
  CHECK(j["levels"].size() == 2);
}

TEST_CASE("outputs do not depend on the worker count") {
  auto cfg = config("case_study_test_many.json");
  cfg["test"]["B"] = 200;
  auto path = write_config("workers.json", cfg);
  auto a = scratch() / "w1.json";
  auto b = scratch() / "w3.json";
  REQUIRE(run("test --config " + q(path) + " --out " + q(a) + " --workers 1").code == 0);
  REQUIRE(run("test --config " + q(path) + " --out " + q(b) + " --workers 3").code == 0);
  CHECK(without_timestamp(slurp(a)) == without_timestamp(slurp(b)));
}

TEST_CASE("seed override changes the bootstrap but not the statistic") {
  auto cfg = config("case_study_test_E.json");
  cfg["test"]["B"] = 50;
  auto path = write_config("seed.json", cfg);
  auto a = scratch() / "s1.json";
  auto b = scratch() / "s2.json";
  REQUIRE(run("test --config " + q(path) + " --out " + q(a)).code == 0);
  REQUIRE(run("test --config " + q(path) + " --out " + q(b) + " --seed 99").code == 0);
  auto ja = json::parse(slurp(a));
  auto jb = json::parse(slurp(b));
  CHECK(ja["statistic"] == jb["statistic"]);
  CHECK(jb["bootstrap"]["seed"] == 99);
  CHECK(ja["bootstrap"]["replicates"] != jb["bootstrap"]["replicates"]);
}

TEST_CASE("malformed JSON exits with a configuration error and a position") {
  auto path = scratch() / "broken.json";
  write(path, "{\n  \"schema_version\": 1,\n  \"design\": [\n}\n");
  auto r = run("fit --config " + q(path) + " --out " + q(scratch() / "x.json"));
  CHECK(r.code == 2);
  CHECK(std::regex_search(r.output, std::regex("line 4")));
}

TEST_CASE("unknown keys and bad values exit with a configuration error") {
  auto cfg = config("case_study_test_E.json");
  cfg["test"]["colour"] = "blue";
  auto r = run("test --config " + q(write_config("unknown.json", cfg)) + " --out " + q(scratch() / "x.json"));
  CHECK(r.code == 2);
  CHECK(r.output.find("colour") != std::string::npos);

  auto neg = config("case_study_test_E.json");
  neg["test"]["delta"] = -1;
  CHECK(run("test --config " + q(write_config("neg.json", neg)) + " --out " + q(scratch() / "x.json")).code == 2);

  auto label = config("case_study_test_E.json");
  label["test"]["target"]["subgroups"] = {"Q"};
  CHECK(run("test --config " + q(write_config("label.json", label)) + " --out " + q(scratch() / "x.json")).code == 2);

  CHECK(run("test --out " + q(scratch() / "x.json")).code == 2);
  CHECK(run("bogus").code == 2);
}

TEST_CASE("bad data exits with a data error") {
  auto csv = scratch() / "bad.csv";
  write(csv, "subgroup,dose,response\nJ,0,0.1\nJ,7,0.2\n");
  auto r = run("fit --config " + q(kSource / "configs/case_study_fit.json") + " --data " + q(csv) + " --out " +
               q(scratch() / "x.json"));
  CHECK(r.code == 3);

  write(csv, "subgroup,dose,response\nJ,0,abc\n");
  CHECK(run("fit --config " + q(kSource / "configs/case_study_fit.json") + " --data " + q(csv) + " --out " +
            q(scratch() / "x.json"))
            .code == 3);
  CHECK(run("fit --config " + q(kSource / "configs/case_study_fit.json") + " --data " + q(scratch() / "none.csv") +
            " --out " + q(scratch() / "x.json"))
            .code == 3);
}

TEST_CASE("calibrate writes the curve and a summary") {
  auto cfg = config("case_study_calibrate_E.json");
  cfg["test"]["B"] = 50;
  cfg["calibrate"]["grid"] = {0.1, 0.2, 0.3};
  auto out = scratch() / "cal.csv";
  auto r = run("calibrate --config " + q(write_config("cal.json", cfg)) + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.code == 0);
  auto text = slurp(out);
  CHECK(text.rfind("delta,p_value,quantile,reject,constrained\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  auto summary = json::parse(slurp(scratch() / "cal.json"));
  CHECK(summary["command"] == "calibrate");
}

TEST_CASE("asymp reports quantiles of the limit law") {
  auto out = scratch() / "asymp.json";
  auto r = run("asymp --config " + q(kSource / "configs/asymp_scenario_A_boundary.json") + " --out " + q(out));
  INFO(r.output);
  REQUIRE(r.code == 0);
  auto j = json::parse(slurp(out));
  CHECK(j["extremal_points"].size() == 1);
  CHECK(j["multi_point_extremal_set"] == false);
  CHECK(j["quantiles"].size() == 3);
}

TEST_CASE("simulate writes csv, text and metadata") {
  auto out = scratch() / "sim.csv";
  auto r = run("simulate --config " + q(kSource / "scenarios/scenario_A_one.json") + " --out " + q(out) +
               " --nsim 4 --B 20 --rows 1 --columns 1");
  INFO(r.output);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(scratch() / "sim.txt"));
  CHECK(fs::exists(scratch() / "sim.meta.json"));
  auto text = slurp(out);
  CHECK(std::count(text.begin(), text.end(), '\n') >= 2);
}
