#include "ctsel/eval/evaluate.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ctsel/common/error.hpp"

namespace ctsel::eval {

namespace {

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("invalid number '" + s + "'", line);
  return v;
}

std::size_t parse_size(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("invalid integer '" + s + "'", line);
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<double> counterfactual_outcomes(const sim::PatientTrajectory& patient, sim::System system,
                                            const sim::SimParams& params, const sim::TimeGrid& grid,
                                            std::span<const double> doses) {
  const std::size_t t = grid.t_index();
  if (patient.state.size() <= t || patient.state[t].size() != 4)
    throw ValidationError("patient " + std::to_string(patient.seed) + " carries no ground-truth state at t = " +
                          std::to_string(t));
  if (t + doses.size() > grid.n_steps())
    throw ShapeError("counterfactual doses extend past the simulation grid");
  sim::StateVector s{};
  std::copy(patient.state[t].begin(), patient.state[t].end(), s.begin());
  const auto states = sim::simulate_window(system, s, t, doses, grid, params);
  std::vector<double> y;
  y.reserve(states.size());
  for (const auto& st : states) y.push_back(st[sim::outcome_channel(system)]);
  return y;
}

double rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("rmse: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

EvalRecord evaluate_selection(const selection::SelectionResult& result, const sim::PatientTrajectory& patient,
                              sim::System system, const sim::SimParams& params, const sim::TimeGrid& grid,
                              std::span<const double> target) {
  const auto truth = counterfactual_outcomes(patient, system, params, grid, result.a_star);
  EvalRecord r;
  r.rmse_selection = rmse(result.final_estimate.mu, truth);
  r.rmse_target = rmse(truth, target);
  r.mean_variance = result.final_estimate.mean_variance();
  return r;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string record_line(const EvalRecord& r) {
  std::string s = r.dataset + "," + r.method + "," + r.constraint + "," + format_number(r.lambda) + ",";
  s += std::to_string(r.replicate) + "," + std::to_string(r.patient) + ",";
  s += format_number(r.rmse_selection) + "," + format_number(r.rmse_target) + "," + format_number(r.mean_variance);
  return s;
}

void write_records_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kRecordsHeader << '\n';
  for (const auto& r : records) out << record_line(r) << '\n';
}

void append_records_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot write " + path.string());
  if (fresh) out << kRecordsHeader << '\n';
  for (const auto& r : records) out << record_line(r) << '\n';
}

std::vector<EvalRecord> read_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open records file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("records file is empty", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordsHeader) throw ParseError("unexpected records header '" + line + "'", 1);
  std::vector<EvalRecord> records;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw ParseError("expected 9 fields, got " + std::to_string(f.size()), n);
    EvalRecord r;
    r.dataset = f[0];
    r.method = f[1];
    r.constraint = f[2];
    r.lambda = parse_double(f[3], n);
    r.replicate = parse_size(f[4], n);
    r.patient = parse_size(f[5], n);
    r.rmse_selection = parse_double(f[6], n);
    r.rmse_target = parse_double(f[7], n);
    r.mean_variance = parse_double(f[8], n);
    records.push_back(std::move(r));
  }
  return records;
}

MeanStderr mean_stderr(std::span<const double> values) {
  MeanStderr m;
  if (values.empty()) return m;
  double s = 0.0;
  for (double v : values) s += v;
  const double n = static_cast<double>(values.size());
  m.mean = s / n;
  if (values.size() < 2) return m;
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return m;
}

std::vector<SummaryRow> summarize(const std::vector<EvalRecord>& records) {
  struct Acc {
    std::size_t order = 0;
    SummaryRow row;
    std::map<std::size_t, std::array<double, 4>> per_rep;  // sums of three metrics, count
  };
  using Key = std::tuple<std::string, std::string, std::string, double>;
  std::map<Key, Acc> cells;
  for (const auto& r : records) {
    const Key key{r.dataset, r.method, r.constraint, r.lambda};
    auto [it, inserted] = cells.try_emplace(key);
    if (inserted) {
      it->second.order = cells.size() - 1;
      it->second.row.dataset = r.dataset;
      it->second.row.method = r.method;
      it->second.row.constraint = r.constraint;
      it->second.row.lambda = r.lambda;
    }
    auto& acc = it->second.per_rep[r.replicate];
    acc[0] += r.rmse_selection;
    acc[1] += r.rmse_target;
    acc[2] += r.mean_variance;
    acc[3] += 1.0;
    ++it->second.row.records;
  }
  std::vector<std::pair<std::size_t, SummaryRow>> ordered;
  for (auto& [key, acc] : cells) {
    std::vector<double> sel, tgt, var;
    for (const auto& [rep, a] : acc.per_rep) {
      sel.push_back(a[0] / a[3]);
      tgt.push_back(a[1] / a[3]);
      var.push_back(a[2] / a[3]);
    }
    acc.row.replicates = acc.per_rep.size();
    acc.row.rmse_selection = mean_stderr(sel);
    acc.row.rmse_target = mean_stderr(tgt);
    acc.row.mean_variance = mean_stderr(var);
    ordered.emplace_back(acc.order, acc.row);
  }
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<SummaryRow> rows;
  for (auto& [o, row] : ordered) rows.push_back(std::move(row));
  return rows;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.method << ',' << r.constraint << ',' << format_number(r.lambda) << ','
        << r.replicates << ',' << r.records << ',' << format_number(r.rmse_selection.mean) << ','
        << format_number(r.rmse_selection.stderr_) << ',' << format_number(r.rmse_target.mean) << ','
        << format_number(r.rmse_target.stderr_) << ',' << format_number(r.mean_variance.mean) << ','
        << format_number(r.mean_variance.stderr_) << '\n';
  }
}

}  // namespace ctsel::eval
