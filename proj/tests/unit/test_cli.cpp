#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

#include "ctsel/cli/config.hpp"
#include "ctsel/common/error.hpp"

using namespace ctsel;
using namespace ctsel::cli;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
  return p;
}

std::string config_error(const std::string& text) {
  try {
    RunConfig c = default_config();
    apply_values(c, parse_config_text(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CTSEL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "resolved.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("parser handles sections, comments, arrays and strings") {
    const auto v = parse_config_text(
        "seed = 7  # trailing\n"
        "[selection]\n"
        "lambda = 0.25\n"
        "constraint = \"tanh # not a comment\"\n"
        "[sweep]\n"
        "lambdas = [0, 1e-2, 4]\n"
        "[model]\n"
        "revin = false\n");
    CHECK(v.at("seed").text == "7");
    CHECK(v.at("selection.lambda").kind == ConfigValue::Kind::number);
    CHECK(v.at("selection.constraint").text == "tanh # not a comment");
    CHECK(v.at("sweep.lambdas").items.size() == 3);
    CHECK(v.at("model.revin").kind == ConfigValue::Kind::boolean);
    CHECK(v.at("selection.lambda").line == 3);
    CHECK_THROWS_AS(parse_config_text("[selection]\nlambda = abc\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[selection\n"), ConfigError);
  }

  TEST_CASE("empty file gives the defaults") {
    const auto p = write_file("ctsel_unit_empty.toml", "");
    unsetenv("CTSEL_SEED");
    const RunConfig c = load_config(p);
    CHECK(c.selection.constraint.beta == 4.0);
    CHECK(c.selection.constraint.alpha == 0.01);
    CHECK(c.selection.steps == 50);
    CHECK(c.selection.lr == 0.1);
    CHECK(c.selection.lambda == 0.0);
    CHECK(c.seed == 0);
    CHECK_NOTHROW(c.validate());
    CHECK(to_json(c) == to_json(default_config()));
  }

  TEST_CASE("flag overrides file overrides default") {
    unsetenv("CTSEL_SEED");
    CHECK(load_config({}).selection.lambda == 0.0);
    const auto p = write_file("ctsel_unit_lambda.toml", "[selection]\nlambda = 0.5\n");
    RunConfig c = load_config(p);
    CHECK(c.selection.lambda == 0.5);
    apply_override(c, "selection.lambda", "2");
    CHECK(c.selection.lambda == 2.0);
    apply_override(c, "sweep.lambdas", "0,0.5,4");
    CHECK(c.lambdas == std::vector<double>{0.0, 0.5, 4.0});
    apply_override(c, "selection.constraint", "tanh");
    CHECK(c.selection.constraint.kind == selection::ConstraintKind::tanh);
  }

  TEST_CASE("unknown keys suggest the closest one") {
    const std::string msg = config_error("[selection]\nlamda = 1\n");
    CHECK(msg.find("lamda") != std::string::npos);
    CHECK(msg.find("selection.lambda") != std::string::npos);
    CHECK(suggest_key("selection.lamda") == "selection.lambda");
    CHECK(suggest_key("zzzzzzzz.qqqqqqqq").empty());
    CHECK(levenshtein("kitten", "sitting") == 3);
  }

  TEST_CASE("type errors name the key path") {
    const std::string msg = config_error("[training]\nepochs = \"many\"\n");
    CHECK(msg.find("training.epochs") != std::string::npos);
    CHECK(config_error("[selection]\nsteps = -3\n").find("selection.steps") != std::string::npos);
  }

  TEST_CASE("semantic validation names the section") {
    RunConfig c = default_config();
    c.selection.lambda = -1.0;
    try {
      c.validate();
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("selection.lambda") != std::string::npos);
    }
  }

  TEST_CASE("environment seed override") {
    setenv("CTSEL_SEED", "1234", 1);
    CHECK(load_config({}).seed == 1234);
    setenv("CTSEL_SEED", "abc", 1);
    CHECK_THROWS_AS(load_config({}), ConfigError);
    unsetenv("CTSEL_SEED");
  }

  TEST_CASE("command line exit codes") {
    const fs::path base = fs::temp_directory_path() / "ctsel_unit_cli";
    fs::remove_all(base);
    CHECK(run_cli("select --model-dir " + base.string() + " --lambda -1 --out " + (base / "sel").string()) == 1);
    CHECK(run_cli("simulate --no-such-flag") == 1);
    CHECK(run_cli("frobnicate") == 1);
  }

  TEST_CASE("simulate is reproducible from the command line") {
    const fs::path base = fs::temp_directory_path() / "ctsel_unit_cli_sim";
    fs::remove_all(base);
    const std::string args = " --dataset cvs --train-size 12 --val-size 4 --test-size 4 --seed 9 --out ";
    REQUIRE(run_cli("simulate" + args + (base / "a").string()) == 0);
    REQUIRE(run_cli("simulate" + args + (base / "b").string()) == 0);
    const auto a = dir_contents(base / "a"), b = dir_contents(base / "b");
    CHECK(!a.empty());
    CHECK(a == b);
    REQUIRE(run_cli("simulate --dataset cvs --train-size 12 --val-size 4 --test-size 4 --seed 10 --out " +
                    (base / "c").string()) == 0);
    CHECK(dir_contents(base / "c") != a);
  }
}
