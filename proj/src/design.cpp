#include "mrct/design.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "mrct/error.hpp"
#include "mrct/rng.hpp"

namespace mrct {

StudyDesign::StudyDesign(std::vector<double> doses, std::vector<std::vector<int>> allocations,
                         std::vector<double> weights, std::vector<std::string> labels)
    : doses_(std::move(doses)),
      allocations_(std::move(allocations)),
      weights_(std::move(weights)),
      labels_(std::move(labels)) {
  if (doses_.size() < 2) throw DataError("a design needs at least two dose levels");
  if (doses_.front() != 0.0) throw DataError("the first dose level must be 0 (placebo)");
  for (std::size_t j = 1; j < doses_.size(); ++j) {
    if (!(doses_[j] > doses_[j - 1]) || !std::isfinite(doses_[j])) {
      throw DataError("dose levels must be finite and strictly increasing");
    }
  }
  if (allocations_.empty()) throw DataError("a design needs at least one subgroup");
  if (weights_.size() != allocations_.size()) {
    throw DataError(fmt::format("{} weights given for {} subgroups", weights_.size(), allocations_.size()));
  }
  for (std::size_t l = 0; l < allocations_.size(); ++l) {
    if (allocations_[l].size() != doses_.size()) {
      throw DataError(fmt::format("allocation row {} has {} entries, expected {}", l + 1, allocations_[l].size(),
                                  doses_.size()));
    }
    for (int c : allocations_[l]) {
      if (c < 1) throw DataError(fmt::format("subgroup {} has an empty dose cell", l + 1));
    }
  }
  double total = 0.0;
  for (double p : weights_) {
    if (!(p > 0.0)) throw DataError("subgroup weights must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError(fmt::format("subgroup weights sum to {}, not 1", total));
  if (!labels_.empty() && labels_.size() != allocations_.size()) {
    throw DataError("one label per subgroup is required when labels are given");
  }
}

int StudyDesign::subgroup_size(int subgroup) const {
  const auto& row = allocations_[subgroup];
  return std::accumulate(row.begin(), row.end(), 0);
}

int StudyDesign::total_size() const {
  int n = 0;
  for (int l = 0; l < num_subgroups(); ++l) n += subgroup_size(l);
  return n;
}

std::string StudyDesign::label(int subgroup) const {
  if (!labels_.empty()) return labels_[subgroup];
  return std::to_string(subgroup + 1);
}

std::optional<int> StudyDesign::find_subgroup(const std::string& key) const {
  for (int l = 0; l < static_cast<int>(labels_.size()); ++l) {
    if (labels_[l] == key) return l;
  }
  int idx = 0;
  auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
  if (ec == std::errc() && ptr == key.data() + key.size() && idx >= 1 && idx <= num_subgroups()) return idx - 1;
  return std::nullopt;
}

std::optional<int> StudyDesign::find_dose(double dose) const {
  for (int j = 0; j < num_doses(); ++j) {
    if (doses_[j] == dose) return j;
  }
  return std::nullopt;
}

StudyDesign StudyDesign::scaled(int factor) const {
  auto alloc = allocations_;
  for (auto& row : alloc) {
    for (int& c : row) c *= factor;
  }
  return StudyDesign(doses_, std::move(alloc), weights_, labels_);
}

Dataset::Dataset(std::vector<Record> records) : records_(std::move(records)) {
  for (const auto& r : records_) {
    if (!std::isfinite(r.response)) throw DataError("responses must be finite");
  }
}

void Dataset::validate(const StudyDesign& design) const {
  const int k = design.num_subgroups();
  const int r = design.num_doses();
  std::vector<std::vector<int>> seen(k, std::vector<int>(r, 0));
  for (const auto& rec : records_) {
    if (rec.subgroup < 0 || rec.subgroup >= k) {
      throw DataError(fmt::format("subgroup index {} outside 1..{}", rec.subgroup + 1, k));
    }
    if (rec.dose_index < 0 || rec.dose_index >= r) throw DataError("dose index outside the design");
    ++seen[rec.subgroup][rec.dose_index];
  }
  std::string problems;
  for (int l = 0; l < k; ++l) {
    for (int j = 0; j < r; ++j) {
      if (seen[l][j] != design.count(l, j)) {
        problems += fmt::format("\n  subgroup {} dose {}: {} observations, design expects {}", design.label(l),
                                format_number(design.doses()[j]), seen[l][j], design.count(l, j));
      }
    }
  }
  if (!problems.empty()) throw DataError("cell counts do not match the design:" + problems);
}

namespace {

struct CellMoments {
  double mean;
  double ss;
};

CellMoments cell_moments(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, ss};
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_value(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

double CellSummary::sse(const ModelSpec& spec, std::span<const double> params) const {
  double s = within_ss;
  for (std::size_t j = 0; j < doses.size(); ++j) {
    const double r = mean[j] - evaluate(spec, params, doses[j]);
    s += count[j] * r * r;
  }
  return s;
}

std::vector<CellSummary> summarize(const Dataset& data, const StudyDesign& design) {
  const int k = design.num_subgroups();
  const int r = design.num_doses();
  std::vector<std::vector<std::vector<double>>> cells(k, std::vector<std::vector<double>>(r));
  for (const auto& rec : data.records()) cells[rec.subgroup][rec.dose_index].push_back(rec.response);
  std::vector<CellSummary> out(k);
  for (int l = 0; l < k; ++l) {
    auto& s = out[l];
    s.doses.assign(design.doses().begin(), design.doses().end());
    s.count.resize(r);
    s.mean.resize(r);
    for (int j = 0; j < r; ++j) {
      if (cells[l][j].empty()) throw DataError(fmt::format("subgroup {} has no data at dose {}", l + 1, j + 1));
      auto m = cell_moments(cells[l][j]);
      s.count[j] = static_cast<int>(cells[l][j].size());
      s.mean[j] = m.mean;
      s.within_ss += m.ss;
      s.n += s.count[j];
    }
  }
  return out;
}

Dataset parse_csv(const std::string& text, const StudyDesign& design, const std::string& source) {
  std::vector<Record> records;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = trim(line);
    if (lineno == 1 && view.size() >= 3 && static_cast<unsigned char>(view[0]) == 0xEF) view.remove_prefix(3);
    if (view.empty()) continue;
    if (!header_seen) {
      if (view != "subgroup,dose,response") {
        throw DataError(fmt::format("{}:{}: expected header 'subgroup,dose,response'", source, lineno));
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
      auto comma = view.find(',', start);
      fields.push_back(view.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    int subgroup = 0;
    double dose = 0.0;
    double response = 0.0;
    if (fields.size() != 3 || !parse_value(fields[0], subgroup) || !parse_value(fields[1], dose) ||
        !parse_value(fields[2], response) || !std::isfinite(response)) {
      throw DataError(fmt::format("{}:{}: cannot parse row '{}'", source, lineno, view));
    }
    if (subgroup < 1 || subgroup > design.num_subgroups()) {
      throw DataError(fmt::format("{}:{}: subgroup {} outside 1..{}", source, lineno, subgroup,
                                  design.num_subgroups()));
    }
    auto j = design.find_dose(dose);
    if (!j) {
      throw DataError(fmt::format("{}:{}: unknown dose level {}", source, lineno, trim(fields[1])));
    }
    records.push_back({subgroup - 1, *j, response});
  }
  if (!header_seen) throw DataError(source + ": empty file");
  Dataset data(std::move(records));
  data.validate(design);
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const StudyDesign& design) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), design, path.string());
}

std::string format_number(double v) { return fmt::format("{}", v); }

std::string to_csv(const Dataset& data, const StudyDesign& design) {
  std::string out = "subgroup,dose,response\n";
  for (const auto& rec : data.records()) {
    out += fmt::format("{},{},{}\n", rec.subgroup + 1, format_number(design.doses()[rec.dose_index]),
                       format_number(rec.response));
  }
  return out;
}

void save_csv(const std::filesystem::path& path, const Dataset& data, const StudyDesign& design) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_csv(data, design);
}

namespace {

void check_generate_inputs(const StudyDesign& design, std::span<const DoseResponseModel> models,
                           std::span<const double> sigma2) {
  if (static_cast<int>(models.size()) != design.num_subgroups()) {
    throw std::invalid_argument("one model per subgroup is required");
  }
  if (static_cast<int>(sigma2.size()) != design.num_subgroups()) {
    throw std::invalid_argument("one variance per subgroup is required");
  }
  for (double s : sigma2) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("variances must be finite and >= 0");
  }
}

}  // namespace

Dataset generate(const StudyDesign& design, std::span<const DoseResponseModel> models,
                 const GroupVariances& variances, std::uint64_t seed) {
  check_generate_inputs(design, models, variances.sigma2);
  NormalStream z(seed);
  std::vector<Record> records;
  records.reserve(design.total_size());
  for (int l = 0; l < design.num_subgroups(); ++l) {
    const double sd = std::sqrt(variances.sigma2[l]);
    for (int j = 0; j < design.num_doses(); ++j) {
      const double mu = models[l].evaluate(design.doses()[j]);
      for (int i = 0; i < design.count(l, j); ++i) records.push_back({l, j, mu + sd * z()});
    }
  }
  return Dataset(std::move(records));
}

std::vector<CellSummary> generate_summary(const StudyDesign& design, std::span<const DoseResponseModel> models,
                                          std::span<const double> sigma2, std::uint64_t seed) {
  check_generate_inputs(design, models, sigma2);
  NormalStream z(seed);
  std::vector<CellSummary> out(design.num_subgroups());
  std::vector<double> buf;
  for (int l = 0; l < design.num_subgroups(); ++l) {
    auto& s = out[l];
    s.doses.assign(design.doses().begin(), design.doses().end());
    s.count.resize(design.num_doses());
    s.mean.resize(design.num_doses());
    const double sd = std::sqrt(sigma2[l]);
    for (int j = 0; j < design.num_doses(); ++j) {
      const double mu = models[l].evaluate(design.doses()[j]);
      buf.resize(design.count(l, j));
      for (double& v : buf) v = mu + sd * z();
      auto m = cell_moments(buf);
      s.count[j] = static_cast<int>(buf.size());
      s.mean[j] = m.mean;
      s.within_ss += m.ss;
      s.n += s.count[j];
    }
  }
  return out;
}

}  // namespace mrct
