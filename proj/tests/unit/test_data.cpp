#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctsel/common/error.hpp"
#include "ctsel/data/dataset.hpp"

using namespace ctsel;
using namespace ctsel::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ctsel_unit_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GenerationConfig small_config(sim::System system, std::uint64_t seed) {
  GenerationConfig c = default_generation_config(system);
  c.sizes = {12, 4, 4};
  c.master_seed = seed;
  return c;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("cvs initial conditions lie in their sampling boxes") {
    Rng rng = make_rng(3);
    for (int i = 0; i < 2000; ++i) {
      const auto s = sample_initial_conditions(sim::System::cvs, rng);
      REQUIRE(s[0] >= 0.9);
      REQUIRE(s[0] <= 1.0);
      REQUIRE(s[1] >= 0.75);
      REQUIRE(s[1] <= 0.85);
      REQUIRE(s[2] >= 0.3);
      REQUIRE(s[2] <= 0.7);
      REQUIRE(s[3] >= 0.15);
      REQUIRE(s[3] <= 0.25);
    }
  }

  TEST_CASE("covid initial conditions have exponential mean 100") {
    Rng rng = make_rng(11);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += sample_initial_conditions(sim::System::covid, rng)[0];
    CHECK(std::abs(sum / n - 100.0) < 2.0);
  }

  TEST_CASE("initial conditions are deterministic per seed") {
    Rng a = make_rng(5), b = make_rng(5);
    CHECK(sample_initial_conditions(sim::System::covid, a) == sample_initial_conditions(sim::System::covid, b));
  }

  TEST_CASE("beta shape from the policy center") {
    CHECK(beta_shape(1.0, 0.3) == 1.0);
    CHECK(beta_shape(2.0, 0.5) == doctest::Approx(2.0));
    CHECK(beta_shape(2.0, 0.9) == doctest::Approx(1.0 / 0.9));
  }

  TEST_CASE("sampled doses follow the beta mean") {
    DosePolicyConfig pol;
    pol.alpha = 2.0;
    Rng rng = make_rng(21);
    std::vector<double> mid, high;
    for (int i = 0; i < 10000; ++i) {
      mid.push_back(sample_cycle_dose(pol, 0.5, rng));
      high.push_back(sample_cycle_dose(pol, 0.9, rng));
    }
    CHECK(std::abs(mean_of(mid) - 0.5) < 0.02);
    const double b = 1.0 / 0.9;
    CHECK(std::abs(mean_of(high) - 2.0 / (2.0 + b)) < 0.02);
    for (double v : mid) REQUIRE((v > 0.0 && v < 1.0));
  }

  TEST_CASE("policy center updates") {
    CHECK(update_policy_center(0.5, 2.0, 1.0, PolicyAdjustment::covid_multiplicative) == doctest::Approx(0.55));
    CHECK(update_policy_center(0.5, 0.5, 1.0, PolicyAdjustment::covid_multiplicative) == doctest::Approx(0.45));
    CHECK(update_policy_center(0.3, 9.0, 1.0, PolicyAdjustment::cvs_constant) == 0.3);
    CHECK(update_policy_center(0.3, 0.0, 1.0, PolicyAdjustment::cvs_constant) == 0.3);
    CHECK(update_policy_center(0.95, 2.0, 1.0, PolicyAdjustment::covid_multiplicative) == kCenterMax);
  }

  TEST_CASE("default generation config") {
    const auto c = default_generation_config(sim::System::covid);
    CHECK(c.sizes.train == 1024);
    CHECK(c.sizes.val == 128);
    CHECK(c.sizes.test == 128);
    CHECK(c.policy.adjustment == PolicyAdjustment::covid_multiplicative);
    CHECK(default_generation_config(sim::System::cvs).policy.adjustment == PolicyAdjustment::cvs_constant);
  }

  TEST_CASE("uniform policy removes dose-outcome correlation") {
    GenerationConfig c = default_generation_config(sim::System::covid);
    c.policy.alpha = 1.0;
    c.sizes = {1024, 2, 2};
    c.master_seed = 17;
    const Dataset ds = generate_dataset(c);
    const auto& grid = ds.grid();
    std::vector<double> dose, prior;
    for (const auto& p : ds.train)
      for (std::size_t i = 1; i < grid.t_index(); ++i)
        if (grid.is_cycle_start(i)) {
          dose.push_back(p.a[i][0]);
          prior.push_back(p.y[i][0]);
        }
    const double md = mean_of(dose), mp = mean_of(prior);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t k = 0; k < dose.size(); ++k) {
      sxy += (dose[k] - md) * (prior[k] - mp);
      sxx += (dose[k] - md) * (dose[k] - md);
      syy += (prior[k] - mp) * (prior[k] - mp);
    }
    const double r = syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
    CHECK(std::abs(r) < 0.05);
  }

  TEST_CASE("generated patients respect state invariants") {
    for (auto sys : {sim::System::cvs, sim::System::covid}) {
      const Dataset ds = generate_dataset(small_config(sys, 4));
      for (const auto& p : ds.train) {
        REQUIRE(p.length() == ds.grid().n_points());
        for (const auto& st : p.state) {
          if (sys == sim::System::cvs) {
            REQUIRE(st[3] >= 0.0);
            REQUIRE(st[3] <= 1.0);
          } else {
            for (double v : st) REQUIRE(v >= 0.0);
          }
        }
        // one dose per cycle in the observation window
        for (std::size_t i = 1; i < ds.grid().t_index(); ++i)
          if (!ds.grid().is_cycle_start(i)) REQUIRE(p.a[i][0] == p.a[i - 1][0]);
      }
    }
  }

  TEST_CASE("same seed gives byte-identical files") {
    const auto c = small_config(sim::System::covid, 7);
    const fs::path d1 = scratch("ds1"), d2 = scratch("ds2");
    save_dataset(generate_dataset(c), d1);
    save_dataset(generate_dataset(c), d2);
    for (const auto& e : fs::directory_iterator(d1)) CHECK(slurp(e.path()) == slurp(d2 / e.path().filename()));
  }

  TEST_CASE("save and load round trip exactly") {
    const Dataset ds = generate_dataset(small_config(sim::System::cvs, 9));
    const fs::path d = scratch("roundtrip");
    save_dataset(ds, d);
    CHECK(load_dataset(d) == ds);
  }

  TEST_CASE("seed in file name must match the manifest") {
    const fs::path d = scratch("seedmismatch");
    save_dataset(generate_dataset(small_config(sim::System::cvs, 9)), d);
    fs::rename(d / "train-seed9.ndjson", d / "train-seed10.ndjson");
    CHECK_THROWS_AS(load_dataset(d), ValidationError);
  }

  TEST_CASE("truncated final line names its line number") {
    const fs::path d = scratch("truncated");
    save_dataset(generate_dataset(small_config(sim::System::cvs, 9)), d);
    const fs::path f = d / "val-seed9.ndjson";
    std::string text = slurp(f);
    text.resize(text.size() - 40);
    std::ofstream(f, std::ios::binary | std::ios::trunc) << text;
    try {
      load_dataset(d);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
    }
  }

  TEST_CASE("policy center replay matches generation") {
    const Dataset ds = generate_dataset(small_config(sim::System::covid, 2));
    const auto& pol = ds.manifest.config.policy;
    for (const auto& p : ds.test) {
      const double dw = policy_center_at(sim::history_at(p, ds.grid().t_index()), pol, ds.grid());
      CHECK(dw >= kCenterMin);
      CHECK(dw <= kCenterMax);
    }
  }
}
