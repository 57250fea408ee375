#include <charconv>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "ctsel/common/error.hpp"
#include "ctsel/data/dataset.hpp"

namespace ctsel::data {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void append_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

void append_rows(std::string& out, const sim::Rows& rows) {
  out.push_back('[');
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) out.push_back(',');
    out.push_back('[');
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      if (j) out.push_back(',');
      append_number(out, rows[i][j]);
    }
    out.push_back(']');
  }
  out.push_back(']');
}

sim::Rows rows_from(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_array()) throw ParseError(std::string("missing array '") + key + "'", line);
  sim::Rows rows;
  for (const auto& r : j[key]) {
    if (!r.is_array()) throw ParseError(std::string("'") + key + "' must be an array of arrays", line);
    std::vector<double> row;
    for (const auto& v : r) {
      if (!v.is_number()) throw ParseError(std::string("non-numeric value in '") + key + "'", line);
      row.push_back(v.get<double>());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json params_to_json(const sim::SimParams& p) {
  const auto& c = p.cvs;
  const auto& v = p.covid;
  return {
      {"cvs",
       {{"f_hr_max", c.f_hr_max}, {"f_hr_min", c.f_hr_min}, {"r_tpr_max", c.r_tpr_max},
        {"r_tpr_min", c.r_tpr_min}, {"r_tpr_mod", c.r_tpr_mod}, {"sv_mod", c.sv_mod}, {"ca", c.ca}, {"cv", c.cv},
        {"k_width", c.k_width}, {"pa_set", c.pa_set}, {"tau_baro", c.tau_baro}, {"p0_lv", c.p0_lv},
        {"r_valve", c.r_valve}, {"k_elv", c.k_elv}, {"v_ed0", c.v_ed0}, {"t_sys", c.t_sys},
        {"cprsw_max", c.cprsw_max}, {"cprsw_min", c.cprsw_min}}},
      {"covid",
       {{"hill_cure", v.hill_cure}, {"h_p", v.h_p}, {"k_cp", v.k_cp}, {"k_ep", v.k_ep}, {"k_d", v.k_d},
        {"k_dp", v.k_dp}, {"k_dr", v.k_dr}, {"k_di", v.k_di}, {"k_id", v.k_id}, {"k_if", v.k_if},
        {"k_io", v.k_io}, {"k_im", v.k_im}, {"k_kel", v.k_kel}, {"coupling", std::string(sim::to_string(v.coupling))}}},
  };
}

sim::SimParams params_from_json(const json& j) {
  sim::SimParams p;
  const json& c = j.at("cvs");
  auto& cv = p.cvs;
  cv.f_hr_max = c.at("f_hr_max");
  cv.f_hr_min = c.at("f_hr_min");
  cv.r_tpr_max = c.at("r_tpr_max");
  cv.r_tpr_min = c.at("r_tpr_min");
  cv.r_tpr_mod = c.at("r_tpr_mod");
  cv.sv_mod = c.at("sv_mod");
  cv.ca = c.at("ca");
  cv.cv = c.at("cv");
  cv.k_width = c.at("k_width");
  cv.pa_set = c.at("pa_set");
  cv.tau_baro = c.at("tau_baro");
  cv.p0_lv = c.at("p0_lv");
  cv.r_valve = c.at("r_valve");
  cv.k_elv = c.at("k_elv");
  cv.v_ed0 = c.at("v_ed0");
  cv.t_sys = c.at("t_sys");
  cv.cprsw_max = c.at("cprsw_max");
  cv.cprsw_min = c.at("cprsw_min");
  const json& v = j.at("covid");
  auto& co = p.covid;
  co.hill_cure = v.at("hill_cure");
  co.h_p = v.at("h_p");
  co.k_cp = v.at("k_cp");
  co.k_ep = v.at("k_ep");
  co.k_d = v.at("k_d");
  co.k_dp = v.at("k_dp");
  co.k_dr = v.at("k_dr");
  co.k_di = v.at("k_di");
  co.k_id = v.at("k_id");
  co.k_if = v.at("k_if");
  co.k_io = v.at("k_io");
  co.k_im = v.at("k_im");
  co.k_kel = v.at("k_kel");
  co.coupling = sim::drug_coupling_from_string(v.at("coupling").get<std::string>());
  return p;
}

json manifest_to_json(const DatasetManifest& m) {
  const GenerationConfig& c = m.config;
  return {
      {"schema_version", m.schema_version},
      {"system", std::string(sim::to_string(c.system))},
      {"master_seed", c.master_seed},
      {"sizes", {{"train", c.sizes.train}, {"val", c.sizes.val}, {"test", c.sizes.test}}},
      {"grid",
       {{"dt", c.grid.dt},
        {"n_obs", c.grid.n_obs},
        {"n_horizon", c.grid.n_horizon},
        {"n_cycles", c.grid.n_cycles},
        {"substeps", c.grid.substeps}}},
      {"policy",
       {{"alpha", c.policy.alpha},
        {"d_w0", c.policy.d_w0},
        {"adjustment", std::string(to_string(c.policy.adjustment))},
        {"dose_scale", c.policy.dose_scale}}},
      {"params", params_to_json(c.params)},
      {"resampled", m.resampled},
  };
}

DatasetManifest manifest_from_json(const json& j) {
  DatasetManifest m;
  m.schema_version = j.at("schema_version").get<std::string>();
  if (m.schema_version != "1")
    throw FormatError("dataset schema version '" + m.schema_version + "' is not supported (expected '1')");
  GenerationConfig& c = m.config;
  c.system = sim::system_from_string(j.at("system").get<std::string>());
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  const json& s = j.at("sizes");
  c.sizes = {s.at("train"), s.at("val"), s.at("test")};
  const json& g = j.at("grid");
  c.grid.dt = g.at("dt");
  c.grid.n_obs = g.at("n_obs");
  c.grid.n_horizon = g.at("n_horizon");
  c.grid.n_cycles = g.at("n_cycles");
  c.grid.substeps = g.at("substeps");
  const json& p = j.at("policy");
  c.policy.alpha = p.at("alpha");
  c.policy.d_w0 = p.at("d_w0");
  c.policy.adjustment = policy_adjustment_from_string(p.at("adjustment").get<std::string>());
  c.policy.dose_scale = p.at("dose_scale");
  c.params = params_from_json(j.at("params"));
  m.resampled = j.at("resampled");
  return m;
}

std::string split_filename(Split split, std::uint64_t seed) {
  return std::string(to_string(split)) + "-seed" + std::to_string(seed) + ".ndjson";
}

fs::path find_split_file(const fs::path& dir, Split split, std::uint64_t& embedded_seed) {
  const std::regex pattern(std::string(to_string(split)) + R"(-seed(\d+)\.ndjson)");
  fs::path found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    if (!found.empty()) throw ValidationError("multiple " + std::string(to_string(split)) + " files in " + dir.string());
    found = entry.path();
    embedded_seed = std::stoull(m[1].str());
  }
  if (found.empty()) throw ValidationError("no " + std::string(to_string(split)) + " split file in " + dir.string());
  return found;
}

}  // namespace

std::string serialize_patient(const PatientTrajectory& patient) {
  std::string out = "{\"seed\":" + std::to_string(patient.seed) + ",\"y\":";
  append_rows(out, patient.y);
  out += ",\"a\":";
  append_rows(out, patient.a);
  out += ",\"x\":";
  append_rows(out, patient.x);
  out += ",\"state\":";
  append_rows(out, patient.state);
  out += '}';
  return out;
}

PatientTrajectory parse_patient(const std::string& line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed patient record: ") + e.what(), line_number);
  }
  if (!j.is_object() || !j.contains("seed") || !j["seed"].is_number_unsigned())
    throw ParseError("patient record needs an unsigned 'seed'", line_number);
  PatientTrajectory p;
  p.seed = j["seed"].get<std::uint64_t>();
  p.y = rows_from(j, "y", line_number);
  p.a = rows_from(j, "a", line_number);
  p.x = rows_from(j, "x", line_number);
  p.state = rows_from(j, "state", line_number);
  if (p.a.size() != p.y.size() || p.x.size() != p.y.size() || p.state.size() != p.y.size())
    throw ParseError("patient channels have different lengths", line_number);
  return p;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  const std::uint64_t seed = dataset.manifest.config.master_seed;
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest_to_json(dataset.manifest).dump(2) << '\n';
    if (!out) throw Error("failed to write " + (dir / "manifest.json").string());
  }
  for (Split split : {Split::train, Split::val, Split::test}) {
    const fs::path path = dir / split_filename(split, seed);
    std::ofstream out(path, std::ios::binary);
    for (const auto& p : dataset.split(split)) out << serialize_patient(p) << '\n';
    if (!out) throw Error("failed to write " + path.string());
  }
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + manifest_path.string());
  Dataset ds;
  try {
    ds.manifest = manifest_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw FormatError("invalid manifest " + manifest_path.string() + ": " + e.what());
  }
  const GenerationConfig& c = ds.manifest.config;
  for (Split split : {Split::train, Split::val, Split::test}) {
    std::uint64_t embedded = 0;
    const fs::path path = find_split_file(dir, split, embedded);
    if (embedded != c.master_seed)
      throw ValidationError("file " + path.filename().string() + " carries seed " + std::to_string(embedded) +
                            " but the manifest master_seed is " + std::to_string(c.master_seed));
    std::ifstream f(path, std::ios::binary);
    auto& target = ds.split(split);
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(f, line)) {
      ++line_number;
      if (line.empty()) continue;
      target.push_back(parse_patient(line, line_number));
    }
    const std::size_t expected = split == Split::train ? c.sizes.train : split == Split::val ? c.sizes.val : c.sizes.test;
    if (target.size() != expected)
      throw ValidationError(path.filename().string() + " holds " + std::to_string(target.size()) +
                            " patients, manifest says " + std::to_string(expected));
  }
  return ds;
}

}  // namespace ctsel::data
