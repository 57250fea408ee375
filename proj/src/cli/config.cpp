#include "ctsel/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "ctsel/common/error.hpp"

namespace ctsel::cli {

namespace {

using Setter = std::function<void(RunConfig&, const ConfigValue&, const std::string&)>;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void fail_line(std::size_t line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

bool is_number(const std::string& s) {
  if (s.empty()) return false;
  const char* b = s.data();
  if (*b == '+') ++b;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(b, s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string> split_items(const std::string& body, std::size_t line) {
  std::vector<std::string> items;
  std::string cur;
  bool in_string = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char c = body[i];
    if (c == '"' && (i == 0 || body[i - 1] != '\\')) in_string = !in_string;
    if (c == ',' && !in_string) {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (in_string) fail_line(line, "unterminated string in array");
  const std::string last = trim(cur);
  if (!last.empty()) items.push_back(last);
  for (const auto& it : items)
    if (it.empty()) fail_line(line, "empty array element");
  return items;
}

ConfigValue parse_value(const std::string& raw, std::size_t line) {
  ConfigValue v;
  v.line = line;
  const std::string s = trim(raw);
  if (s.empty()) fail_line(line, "missing value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') fail_line(line, "unterminated string");
    v.kind = ConfigValue::Kind::string;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) {
        const char n = s[++i];
        v.text.push_back(n == 'n' ? '\n' : n == 't' ? '\t' : n);
      } else {
        v.text.push_back(s[i]);
      }
    }
    return v;
  }
  if (s.front() == '[') {
    if (s.back() != ']') fail_line(line, "unterminated array (arrays must fit on one line)");
    v.kind = ConfigValue::Kind::array;
    for (const auto& item : split_items(s.substr(1, s.size() - 2), line)) v.items.push_back(parse_value(item, line));
    return v;
  }
  if (s == "true" || s == "false") {
    v.kind = ConfigValue::Kind::boolean;
    v.text = s;
    return v;
  }
  if (is_number(s)) {
    v.kind = ConfigValue::Kind::number;
    v.text = s.front() == '+' ? s.substr(1) : s;
    return v;
  }
  fail_line(line, "cannot parse value '" + s + "' (strings must be quoted)");
}

[[noreturn]] void type_error(const std::string& key, const ConfigValue& v, const std::string& expected) {
  std::string where = v.line > 0 ? " (line " + std::to_string(v.line) + ")" : "";
  throw ConfigError(key + ": expected " + expected + where);
}

double as_double(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::number) type_error(key, v, "a number");
  double d = 0.0;
  std::from_chars(v.text.data(), v.text.data() + v.text.size(), d);
  if (!std::isfinite(d)) type_error(key, v, "a finite number");
  return d;
}

std::uint64_t as_u64(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::number) type_error(key, v, "a non-negative integer");
  std::uint64_t u = 0;
  const auto [ptr, ec] = std::from_chars(v.text.data(), v.text.data() + v.text.size(), u);
  if (ec != std::errc() || ptr != v.text.data() + v.text.size()) type_error(key, v, "a non-negative integer");
  return u;
}

std::size_t as_size(const ConfigValue& v, const std::string& key) { return static_cast<std::size_t>(as_u64(v, key)); }

bool as_bool(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::boolean) type_error(key, v, "true or false");
  return v.text == "true";
}

std::string as_string(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::string) type_error(key, v, "a string");
  return v.text;
}

std::vector<double> as_doubles(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::array) type_error(key, v, "an array of numbers");
  std::vector<double> out;
  for (const auto& item : v.items) out.push_back(as_double(item, key));
  return out;
}

std::vector<std::string> as_strings(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::Kind::array) type_error(key, v, "an array of strings");
  std::vector<std::string> out;
  for (const auto& item : v.items) out.push_back(as_string(item, key));
  return out;
}

// Wrap library validation failures so the message names the key.
template <class F>
auto checked(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct Entry {
  std::string key;
  Setter set;
};

template <class Member>
void add_cvs(std::vector<Entry>& e, const char* name, Member m) {
  e.push_back({std::string("cvs_params.") + name,
               [m](RunConfig& c, const ConfigValue& v, const std::string& k) {
                 c.generation.params.cvs.*m = as_double(v, k);
               }});
}

template <class Member>
void add_covid(std::vector<Entry>& e, const char* name, Member m) {
  e.push_back({std::string("covid_params.") + name,
               [m](RunConfig& c, const ConfigValue& v, const std::string& k) {
                 c.generation.params.covid.*m = as_double(v, k);
               }});
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e;
    auto add = [&](const char* key, Setter s) { e.push_back({key, std::move(s)}); };
    add("seed", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.seed = as_u64(v, k); });
    add("output", [](RunConfig& c, const ConfigValue& v, const std::string& k) { c.output = as_string(v, k); });

    add("simulation.system", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.system = checked(k, [&] { return sim::system_from_string(as_string(v, k)); });
    });
    add("simulation.dt", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.grid.dt = as_double(v, k);
    });
    add("simulation.n_obs", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.grid.n_obs = as_size(v, k);
    });
    add("simulation.n_horizon", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.grid.n_horizon = as_size(v, k);
    });
    add("simulation.n_cycles", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.grid.n_cycles = as_size(v, k);
    });
    add("simulation.substeps", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.grid.substeps = as_size(v, k);
    });
    add("simulation.drug_coupling", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.params.covid.coupling = checked(k, [&] { return sim::drug_coupling_from_string(as_string(v, k)); });
    });
    add("simulation.train_size", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.sizes.train = as_size(v, k);
    });
    add("simulation.val_size", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.sizes.val = as_size(v, k);
    });
    add("simulation.test_size", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.sizes.test = as_size(v, k);
    });

    using sim::CovidParams;
    using sim::CvsParams;
    add_cvs(e, "f_hr_max", &CvsParams::f_hr_max);
    add_cvs(e, "f_hr_min", &CvsParams::f_hr_min);
    add_cvs(e, "r_tpr_max", &CvsParams::r_tpr_max);
    add_cvs(e, "r_tpr_min", &CvsParams::r_tpr_min);
    add_cvs(e, "r_tpr_mod", &CvsParams::r_tpr_mod);
    add_cvs(e, "sv_mod", &CvsParams::sv_mod);
    add_cvs(e, "ca", &CvsParams::ca);
    add_cvs(e, "cv", &CvsParams::cv);
    add_cvs(e, "k_width", &CvsParams::k_width);
    add_cvs(e, "pa_set", &CvsParams::pa_set);
    add_cvs(e, "tau_baro", &CvsParams::tau_baro);
    add_cvs(e, "p0_lv", &CvsParams::p0_lv);
    add_cvs(e, "r_valve", &CvsParams::r_valve);
    add_cvs(e, "k_elv", &CvsParams::k_elv);
    add_cvs(e, "v_ed0", &CvsParams::v_ed0);
    add_cvs(e, "t_sys", &CvsParams::t_sys);
    add_cvs(e, "cprsw_max", &CvsParams::cprsw_max);
    add_cvs(e, "cprsw_min", &CvsParams::cprsw_min);
    add_covid(e, "hill_cure", &CovidParams::hill_cure);
    add_covid(e, "h_p", &CovidParams::h_p);
    add_covid(e, "k_cp", &CovidParams::k_cp);
    add_covid(e, "k_ep", &CovidParams::k_ep);
    add_covid(e, "k_d", &CovidParams::k_d);
    add_covid(e, "k_dp", &CovidParams::k_dp);
    add_covid(e, "k_dr", &CovidParams::k_dr);
    add_covid(e, "k_di", &CovidParams::k_di);
    add_covid(e, "k_id", &CovidParams::k_id);
    add_covid(e, "k_if", &CovidParams::k_if);
    add_covid(e, "k_io", &CovidParams::k_io);
    add_covid(e, "k_im", &CovidParams::k_im);
    add_covid(e, "k_kel", &CovidParams::k_kel);

    add("policy.alpha", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.policy.alpha = as_double(v, k);
    });
    add("policy.d_w0", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.policy.d_w0 = as_double(v, k);
    });
    add("policy.adjustment", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.policy.adjustment =
          checked(k, [&] { return data::policy_adjustment_from_string(as_string(v, k)); });
    });
    add("policy.dose_scale", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.generation.policy.dose_scale = as_double(v, k);
    });

    add("model.flavor", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.arch.flavor = checked(k, [&] { return models::flavor_from_string(as_string(v, k)); });
    });
    add("model.hidden", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.arch.hidden = as_size(v, k);
    });
    add("model.dropout", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.arch.dropout = as_double(v, k);
    });
    add("model.revin", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.arch.revin = as_bool(v, k);
    });

    add("training.epochs", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.train.epochs = as_size(v, k);
    });
    add("training.batch_size", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.train.batch_size = as_size(v, k);
    });
    add("training.lr", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.train.lr = as_double(v, k);
    });
    add("training.weight_decay", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.train.weight_decay = as_double(v, k);
    });
    add("training.hsic_weight", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.train.hsic_weight = as_double(v, k);
    });
    add("training.patience", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.train.patience = as_size(v, k);
    });
    add("training.grad_clip", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.train.grad_clip = as_double(v, k);
    });

    add("uncertainty.method", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.method = checked(k, [&] { return uncertainty::method_from_string(as_string(v, k)); });
    });
    add("uncertainty.n_passes", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.n_passes = as_size(v, k);
    });
    add("uncertainty.ensemble_size", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.ensemble_size = as_size(v, k);
    });
    add("uncertainty.geometric_epochs", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.geometric.epochs = as_size(v, k);
    });
    add("uncertainty.geometric_lr", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.geometric.lr = as_double(v, k);
    });
    add("uncertainty.geometric_samples", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.model.geometric.n_samples = as_size(v, k);
    });

    add("selection.lambda", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.selection.lambda = as_double(v, k);
    });
    add("selection.mse_weight", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.selection.mse_weight = as_double(v, k);
    });
    add("selection.target", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.target = as_double(v, k);
    });
    add("selection.constraint", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.selection.constraint.kind = checked(k, [&] { return selection::constraint_from_string(as_string(v, k)); });
    });
    add("selection.range_a", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.selection.constraint.lower = as_double(v, k);
    });
    add("selection.range_b", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.selection.constraint.upper = as_double(v, k);
    });
    add("selection.alpha", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.selection.constraint.alpha = as_double(v, k);
    });
    add("selection.beta", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.selection.constraint.beta = as_double(v, k);
    });
    add("selection.steps", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.selection.steps = as_size(v, k);
    });
    add("selection.lr", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.selection.lr = as_double(v, k);
    });
    add("selection.weight_decay", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.selection.weight_decay = as_double(v, k);
    });
    add("selection.patient", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.patient = as_size(v, k);
    });

    add("sweep.lambdas", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.lambdas = as_doubles(v, k);
    });
    add("sweep.replicates", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.replicates = as_size(v, k);
    });
    add("sweep.constraints", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.constraints = as_strings(v, k);
    });
    add("sweep.methods", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.methods = as_strings(v, k);
    });
    add("sweep.max_test_patients", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.max_test_patients = as_size(v, k);
    });
    add("sweep.workers", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.workers = as_size(v, k);
    });
    add("sweep.percentiles", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.percentiles = as_doubles(v, k);
    });
    add("sweep.deferral_lambda", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.deferral_lambda = as_double(v, k);
    });

    add("confounding.hsic_weights", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.hsic_weights = as_doubles(v, k);
    });
    add("confounding.replicates", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.confounding_replicates = as_size(v, k);
    });
    add("confounding.alpha", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.confounding_alpha = as_double(v, k);
    });
    add("confounding.lambda", [](RunConfig& c, const ConfigValue& v, const std::string& k) {
      c.confounding_lambda = as_double(v, k);
    });
    return e;
  }();
  return entries;
}

const Entry* find_entry(const std::string& key) {
  for (const auto& e : registry())
    if (e.key == key) return &e;
  return nullptr;
}

[[noreturn]] void unknown_key(const std::string& key, std::size_t line) {
  std::string msg = "unknown config key '" + key + "'";
  if (line > 0) msg += " (line " + std::to_string(line) + ")";
  const std::string s = suggest_key(key);
  if (!s.empty()) msg += "; did you mean '" + s + "'?";
  throw ConfigError(msg);
}

void set_value(RunConfig& config, const std::string& key, const ConfigValue& value) {
  const Entry* e = find_entry(key);
  if (e == nullptr) unknown_key(key, value.line);
  e->set(config, value, key);
  if (key == "simulation.system") config.generation.policy.adjustment = data::default_adjustment(config.generation.system);
}

}  // namespace

std::map<std::string, ConfigValue> parse_config_text(std::string_view text) {
  std::map<std::string, ConfigValue> out;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  for (std::size_t line = 1; std::getline(in, raw); ++line) {
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail_line(line, "malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) fail_line(line, "empty section name");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail_line(line, "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty() || !std::all_of(key.begin(), key.end(), [](char c) {
          return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
        }))
      fail_line(line, "invalid key '" + key + "'");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) fail_line(line, "duplicate key '" + full + "'");
    out[full] = parse_value(s.substr(eq + 1), line);
  }
  return out;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : registry()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

std::string suggest_key(std::string_view unknown) {
  const auto leaf_of = [](std::string_view k) {
    const auto dot = k.rfind('.');
    return dot == std::string_view::npos ? k : k.substr(dot + 1);
  };
  const std::string_view leaf = leaf_of(unknown);
  const std::string_view section = unknown.substr(0, unknown.size() - leaf.size());
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& k : known_keys()) {
    // Leaf names are compared; other sections cost one extra edit.
    const std::string_view kl = leaf_of(k);
    const bool same_section = std::string_view(k).substr(0, k.size() - kl.size()) == section;
    const std::size_t d = levenshtein(leaf, kl) + (same_section ? 0 : 1);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  const std::size_t limit = std::max<std::size_t>(2, leaf.size() / 3);
  return best_d <= limit ? best : std::string();
}

void apply_values(RunConfig& config, const std::map<std::string, ConfigValue>& values) {
  // The system goes first so that an explicit policy.adjustment wins over its default.
  if (auto it = values.find("simulation.system"); it != values.end()) set_value(config, it->first, it->second);
  for (const auto& [key, value] : values)
    if (key != "simulation.system") set_value(config, key, value);
}

void apply_override(RunConfig& config, const std::string& key, const std::string& value) {
  std::string text = trim(value);
  ConfigValue v;
  if (!text.empty() && (text.front() == '[' || text.front() == '"' || text == "true" || text == "false" ||
                        is_number(text))) {
    v = parse_value(text, 0);
  } else if (text.find(',') != std::string::npos) {
    v.kind = ConfigValue::Kind::array;
    for (const auto& item : split_items(text, 0)) {
      ConfigValue iv;
      if (is_number(item)) {
        iv = parse_value(item, 0);
      } else {
        iv.kind = ConfigValue::Kind::string;
        iv.text = item;
      }
      v.items.push_back(iv);
    }
  } else {
    v.kind = ConfigValue::Kind::string;
    v.text = text;
  }
  set_value(config, key, v);
}

RunConfig default_config() { return RunConfig{}; }

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig config = default_config();
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_values(config, parse_config_text(ss.str()));
  }
  if (const char* env = std::getenv("CTSEL_SEED"); env != nullptr && *env != '\0') {
    ConfigValue v;
    v.kind = ConfigValue::Kind::number;
    v.text = env;
    try {
      config.seed = as_u64(v, "CTSEL_SEED");
    } catch (const ConfigError&) {
      throw ConfigError("CTSEL_SEED must be a non-negative integer, got '" + std::string(env) + "'");
    }
  }
  return config;
}

selection::Constraint RunConfig::constraint(std::string_view name) const {
  selection::Constraint c = selection.constraint;
  c.kind = selection::constraint_from_string(name);
  return c;
}

void RunConfig::validate() const {
  auto guard = [](const std::string& section, const auto& f) {
    try {
      f();
    } catch (const ValidationError& e) {
      throw ConfigError(section + ": " + e.what());
    }
  };
  guard("simulation", [&] { generation.grid.validate(); });
  if (generation.sizes.train == 0 || generation.sizes.val == 0 || generation.sizes.test == 0)
    throw ConfigError("simulation: split sizes must be positive");
  guard("policy", [&] { generation.policy.validate(); });
  guard("model", [&] { model.arch.validate(); });
  guard("training", [&] { model.train.validate(); });
  if (model.n_passes < 2) throw ConfigError("uncertainty.n_passes: at least 2 passes are required");
  if (model.ensemble_size < 2) throw ConfigError("uncertainty.ensemble_size: at least 2 members are required");
  if (model.geometric.n_samples < 2) throw ConfigError("uncertainty.geometric_samples: at least 2 are required");
  if (!(selection.lambda >= 0.0))
    throw ConfigError("selection.lambda: must be >= 0, got " + eval::format_number(selection.lambda));
  if (!(selection.mse_weight >= 0.0)) throw ConfigError("selection.mse_weight: must be >= 0");
  if (selection.steps < 1) throw ConfigError("selection.steps: must be >= 1");
  if (!(selection.lr > 0.0)) throw ConfigError("selection.lr: must be positive");
  guard("selection", [&] { selection.constraint.validate(); });
  guard("sweep", [&] { sweep_spec().validate(); });
  if (percentiles.empty()) throw ConfigError("sweep.percentiles: list is empty");
  for (double p : percentiles)
    if (!(p > 0.0 && p <= 100.0)) throw ConfigError("sweep.percentiles: values must lie in (0, 100]");
  guard("confounding", [&] { confounding_spec().validate(); });
}

eval::SweepSpec RunConfig::sweep_spec() const {
  eval::SweepSpec s;
  s.lambdas = lambdas;
  s.replicates = replicates;
  s.constraints.clear();
  for (const auto& c : constraints) s.constraints.push_back(checked("sweep.constraints", [&] { return constraint(c); }));
  s.methods.clear();
  for (const auto& m : methods)
    s.methods.push_back(checked("sweep.methods", [&] { return uncertainty::method_from_string(m); }));
  s.model = model;
  s.model.arch.horizon = generation.grid.n_horizon;
  s.selection = selection;
  s.target = target;
  s.max_test_patients = max_test_patients;
  s.workers = workers;
  s.seed = seed;
  return s;
}

eval::ConfoundingSpec RunConfig::confounding_spec() const {
  eval::ConfoundingSpec s;
  s.hsic_weights = hsic_weights;
  s.replicates = confounding_replicates;
  s.alpha = confounding_alpha;
  s.model = model;
  s.model.arch.horizon = generation.grid.n_horizon;
  s.selection = selection;
  s.lambda = confounding_lambda;
  s.target = target;
  s.max_test_patients = max_test_patients;
  s.workers = workers;
  s.seed = seed;
  return s;
}

std::string to_json(const RunConfig& c) {
  using nlohmann::ordered_json;
  const auto& g = c.generation;
  const auto& cv = g.params.cvs;
  const auto& co = g.params.covid;
  ordered_json j;
  j["seed"] = c.seed;
  j["output"] = c.output;
  j["simulation"] = {{"system", sim::to_string(g.system)},
                     {"dt", g.grid.dt},
                     {"n_obs", g.grid.n_obs},
                     {"n_horizon", g.grid.n_horizon},
                     {"n_cycles", g.grid.n_cycles},
                     {"substeps", g.grid.substeps_for(g.system)},
                     {"drug_coupling", sim::to_string(co.coupling)},
                     {"train_size", g.sizes.train},
                     {"val_size", g.sizes.val},
                     {"test_size", g.sizes.test}};
  j["cvs_params"] = {{"f_hr_max", cv.f_hr_max},   {"f_hr_min", cv.f_hr_min},   {"r_tpr_max", cv.r_tpr_max},
                     {"r_tpr_min", cv.r_tpr_min}, {"r_tpr_mod", cv.r_tpr_mod}, {"sv_mod", cv.sv_mod},
                     {"ca", cv.ca},               {"cv", cv.cv},               {"k_width", cv.k_width},
                     {"pa_set", cv.pa_set},       {"tau_baro", cv.tau_baro},   {"p0_lv", cv.p0_lv},
                     {"r_valve", cv.r_valve},     {"k_elv", cv.k_elv},         {"v_ed0", cv.v_ed0},
                     {"t_sys", cv.t_sys},         {"cprsw_max", cv.cprsw_max}, {"cprsw_min", cv.cprsw_min}};
  j["covid_params"] = {{"hill_cure", co.hill_cure}, {"h_p", co.h_p},   {"k_cp", co.k_cp},   {"k_ep", co.k_ep},
                       {"k_d", co.k_d},             {"k_dp", co.k_dp}, {"k_dr", co.k_dr},   {"k_di", co.k_di},
                       {"k_id", co.k_id},           {"k_if", co.k_if}, {"k_io", co.k_io},   {"k_im", co.k_im},
                       {"k_kel", co.k_kel}};
  j["policy"] = {{"alpha", g.policy.alpha},
                 {"d_w0", g.policy.d_w0},
                 {"adjustment", data::to_string(g.policy.adjustment)},
                 {"dose_scale", g.policy.dose_scale}};
  j["model"] = {{"flavor", models::to_string(c.model.arch.flavor)},
                {"hidden", c.model.arch.hidden},
                {"dropout", c.model.arch.dropout},
                {"revin", c.model.arch.revin}};
  const auto& t = c.model.train;
  j["training"] = {{"epochs", t.epochs},           {"batch_size", t.batch_size}, {"lr", t.lr},
                   {"weight_decay", t.weight_decay}, {"hsic_weight", t.hsic_weight}, {"patience", t.patience},
                   {"grad_clip", t.grad_clip}};
  j["uncertainty"] = {{"method", uncertainty::to_string(c.method)},
                      {"n_passes", c.model.n_passes},
                      {"ensemble_size", c.model.ensemble_size},
                      {"geometric_epochs", c.model.geometric.epochs},
                      {"geometric_lr", c.model.geometric.lr},
                      {"geometric_samples", c.model.geometric.n_samples}};
  const auto& s = c.selection;
  ordered_json sel = {{"lambda", s.lambda},
                      {"mse_weight", s.mse_weight},
                      {"target", nullptr},
                      {"constraint", selection::to_string(s.constraint.kind)},
                      {"range_a", s.constraint.lower},
                      {"range_b", s.constraint.upper},
                      {"alpha", s.constraint.alpha},
                      {"beta", s.constraint.beta},
                      {"steps", s.steps},
                      {"lr", s.lr},
                      {"weight_decay", s.weight_decay},
                      {"patient", c.patient}};
  sel["target"] = std::isnan(c.target) ? selection::default_target(g.system) : c.target;
  j["selection"] = sel;
  j["sweep"] = {{"lambdas", c.lambdas},
                {"replicates", c.replicates},
                {"constraints", c.constraints},
                {"methods", c.methods},
                {"max_test_patients", c.max_test_patients},
                {"workers", c.workers},
                {"percentiles", c.percentiles},
                {"deferral_lambda", c.deferral_lambda}};
  j["confounding"] = {{"hsic_weights", c.hsic_weights},
                      {"replicates", c.confounding_replicates},
                      {"alpha", c.confounding_alpha},
                      {"lambda", c.confounding_lambda}};
  return j.dump(2) + "\n";
}

void write_resolved(const RunConfig& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "resolved.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + (out_dir / "resolved.json").string());
  out << to_json(config);
}

}  // namespace ctsel::cli
