#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "unravel/scenario.hpp"

using namespace unravel;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"(
schema_version = 1
time_unit = "1/omega"
scenario = "minimal"
[[bath]]
model = "modes"
g = [0.5]
omega = [1.0]
[grid]
dt = 0.1
n_steps = 10
)";

std::string env(const char* name)
{
    const char* v = std::getenv(name);
    return v ? v : "";
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("unravel_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

int cli(const std::string& args)
{
    const std::string cmd = env("UNRAVEL_CLI") + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::vector<std::string> csv_rows(const fs::path& p)
{
    std::istringstream in(slurp(p));
    std::vector<std::string> rows;
    for (std::string line; std::getline(in, line);)
        rows.push_back(line);
    return rows;
}

} // namespace

TEST_CASE("minimal config fills defaults")
{
    const auto c = parse_config_toml(kMinimal);
    CHECK(c.system.n_qubits == 1);
    CHECK(c.system.coupled == std::vector<std::size_t>{0});
    CHECK(c.grid().size() == 11);
    CHECK(c.squeezing.rule == "zero");
    CHECK(c.ensemble.seed == 1);
}

TEST_CASE("schema violations are config errors")
{
    const std::string base = kMinimal;
    CHECK_THROWS_AS(parse_config_toml(base + "bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_toml(base + "[ensemble]\nsampler = \"magic\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_toml(base + "[squeezing]\nrule = \"optimal\"\nepsilon = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_toml(base + "[ensemble]\nextra = 2\n"), ConfigError);
    std::string no_unit = base;
    no_unit.replace(no_unit.find("time_unit"), 22, "");
    CHECK_THROWS_AS(parse_config_toml(no_unit), ConfigError);
    std::string v2 = base;
    v2.replace(v2.find("schema_version = 1"), 18, "schema_version = 2");
    CHECK_THROWS_AS(parse_config_toml(v2), ConfigError);
    CHECK_THROWS_AS(parse_config_toml("schema_version = [1"), ConfigError);
    CHECK_THROWS_AS(parse_config_toml(base + "[system]\nn_qubits = 2\ninitial_state = [[1.0, 0.0]]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_toml(base + "[system]\nn_qubits = 1\ninitial_state = \"bell\"\n"), ConfigError);
}

TEST_CASE("every shipped preset parses and round-trips through JSON")
{
    const fs::path dir = env("UNRAVEL_PRESETS");
    REQUIRE(fs::exists(dir));
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() != ".toml")
            continue;
        ++n;
        CAPTURE(e.path().string());
        const auto c = load_config(e.path());
        const auto j = resolved_config_json(c);
        CHECK(resolved_config_json(parse_config_json(j)) == j);
    }
    CHECK(n >= 8);
}

TEST_CASE("rule construction from the squeezing section")
{
    SqueezingSpec s;
    s.rule = "optimal";
    CHECK(make_rule(s, 3.0).target_time() == 3.0);
    s.target_time = 1.5;
    CHECK(make_rule(s, 3.0).target_time() == 1.5);
    s.rule = "constant";
    s.value = {1.0, 0.0};
    CHECK(std::abs(make_rule(s, 3.0).value(2.0) - (1.0 - kDefaultEpsilon)) < 1e-15);
    s.rule = "per_mode_phase";
    s.phases = {0.1, 0.2};
    s.magnitude = 0.5;
    CHECK(make_rule(s, 3.0).kind() == SqueezingRule::Kind::PerModePhase);
}

TEST_CASE("cli: config and usage errors exit with 2")
{
    const auto d = scratch("errors");
    write(d / "bad.toml", std::string(kMinimal) + "nonsense = true\n");
    CHECK(cli("unravel --config " + (d / "bad.toml").string() + " --out " + d.string()) == 2);
    CHECK(cli("unravel --config " + (d / "missing.toml").string()) == 2);
    CHECK(cli("unravel") == 2);
    CHECK(cli("frobnicate") == 2);
    CHECK(cli("oracle --config " + env("UNRAVEL_PRESETS") + "/ohmic.toml --out " + d.string()) == 2);
}

TEST_CASE("cli correlations: triangle rows, zero eta at xi = 0, Markov refusal")
{
    const auto d = scratch("corr");
    write(d / "c.toml", kMinimal);
    REQUIRE(cli("correlations --config " + (d / "c.toml").string() + " --out " + d.string()) == 0);
    const auto rows = csv_rows(d / "kernel_0.csv");
    CHECK(rows.size() == 1 + 11 * 12 / 2);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::istringstream in(rows[i]);
        std::string f;
        std::vector<double> v;
        while (std::getline(in, f, ','))
            v.push_back(std::stod(f));
        CHECK(v[4] == 0.0);
        CHECK(v[5] == 0.0);
    }
    const auto m = scratch("corr_markov");
    REQUIRE(cli("correlations --config " + env("UNRAVEL_PRESETS") + "/markov.toml --out " + m.string()) == 0);
    CHECK_FALSE(fs::exists(m / "kernel_0.csv"));
    CHECK(fs::exists(m / "rates_0.csv"));
}

TEST_CASE("cli unravel: zero coupling keeps every bound at one")
{
    const auto d = scratch("zero");
    REQUIRE(cli("unravel --config " + env("UNRAVEL_PRESETS") + "/zero_coupling.toml --out " + d.string()) == 0);
    const auto rows = csv_rows(d / "fig1_data.csv");
    CHECK(rows.front() == "t,xbar_opt,xbar_zero,exact");
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::istringstream in(rows[i]);
        std::string f;
        std::getline(in, f, ',');
        for (int c = 0; c < 3; ++c) {
            std::getline(in, f, ',');
            CHECK(std::stod(f) == doctest::Approx(1.0).epsilon(1e-14));
        }
    }
}

TEST_CASE("cli unravel: deterministic outputs and resolved-config replay")
{
    const auto a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
    const std::string preset = env("UNRAVEL_PRESETS") + "/markov.toml";
    REQUIRE(cli("unravel --config " + preset + " --seed 9 --out " + a.string()) == 0);
    REQUIRE(cli("unravel --config " + preset + " --seed 9 --threads 3 --out " + b.string()) == 0);
    REQUIRE(cli("unravel --config " + (a / "resolved_config.json").string() + " --out " + c.string()) == 0);
    for (const char* f : {"density.csv", "fig1_data.csv", "bound_report.csv", "trajectory_0_norms.csv"}) {
        CAPTURE(f);
        CHECK(slurp(a / f) == slurp(b / f));
        CHECK(slurp(a / f) == slurp(c / f));
    }
    const auto s = nlohmann::json::parse(slurp(a / "summary.json"));
    CHECK(s["passed"].get<bool>());
}

TEST_CASE("cli oracle: preset passes, forced truncation failure exits 4")
{
    const auto d = scratch("oracle");
    REQUIRE(cli("oracle --config " + env("UNRAVEL_PRESETS") + "/oracle_onemode.toml --out " + d.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(d / "oracle_report.json"));
    CHECK(j["identity_residual"].get<double>() < 1e-8);
    CHECK(j["partial_trace_residual"].get<double>() < 1e-8);

    std::string cfg = slurp(env("UNRAVEL_PRESETS") + "/oracle_onemode.toml");
    cfg.replace(cfg.find("n_max = 20"), 10, "n_max = 2");
    cfg.replace(cfg.find("g = [0.5]"), 9, "g = [2.0]");
    write(d / "leaky.toml", cfg);
    CHECK(cli("oracle --config " + (d / "leaky.toml").string() + " --out " + (d / "leaky").string()) == 4);
    const auto k = nlohmann::json::parse(slurp(d / "leaky" / "oracle_report.json"));
    CHECK(k["leakage_flagged"].get<bool>());
}

TEST_CASE("cli oracle: partial-trace residual is insensitive to xi")
{
    const auto d = scratch("oracle_xi");
    std::string cfg = slurp(env("UNRAVEL_PRESETS") + "/oracle_onemode.toml");
    auto with_xi = [&](const std::string& xi, const std::string& name) {
        std::string c = cfg;
        const auto p = c.find("xi = ");
        c.replace(p, c.find('\n', p) - p, "xi = " + xi);
        write(d / (name + ".toml"), c);
        REQUIRE(cli("oracle --config " + (d / (name + ".toml")).string() + " --out " + (d / name).string()) == 0);
        return nlohmann::json::parse(slurp(d / name / "oracle_report.json"))["partial_trace_residual"].get<double>();
    };
    const double r0 = with_xi("[[0.0, 0.0]]", "xi0");
    const double r5 = with_xi("[[0.5, 0.0]]", "xi5");
    CHECK(r5 <= 2.0 * std::max(r0, 1e-15));
}

TEST_CASE("cli optimize: scan preset, restore preset, zero budget")
{
    const auto d = scratch("opt");
    const std::string P = env("UNRAVEL_PRESETS");
    REQUIRE(cli("optimize --config " + P + "/optimize_onemode.toml --out " + (d / "one").string()) == 0);
    const auto one = nlohmann::json::parse(slurp(d / "one" / "search_result.json"));
    CHECK(one["analytic_gap"].get<double>() < 1e-3);
    CHECK(csv_rows(d / "one" / "search_trace.csv").front() == "iteration,objective,phase_1");

    REQUIRE(cli("optimize --config " + P + "/optimize_restore.toml --out " + (d / "res").string()) == 0);
    const auto res = nlohmann::json::parse(slurp(d / "res" / "search_result.json"));
    CHECK(res["objective"].get<double>() > 1.0 - 10.0 * kDefaultEpsilon);
    CHECK(res["reduced_state_invariance_deviation"].get<double>() <=
          res["reduced_state_invariance_tolerance"].get<double>());

    std::string cfg = slurp(P + "/optimize_onemode.toml");
    cfg.replace(cfg.find("budget = 4000"), 13, "budget = 0");
    write(d / "zero.toml", cfg);
    cli("optimize --config " + (d / "zero.toml").string() + " --out " + (d / "zero").string());
    const auto z = nlohmann::json::parse(slurp(d / "zero" / "search_result.json"));
    CHECK(z["budget_exhausted"].get<bool>());
}

TEST_CASE("cli sample writes trajectories and statistics")
{
    const auto d = scratch("sample");
    REQUIRE(cli("sample --config " + env("UNRAVEL_PRESETS") + "/sample_threemode.toml --out " + d.string()) == 0);
    CHECK(fs::exists(d / "noise_0_2.csv"));
    const auto j = nlohmann::json::parse(slurp(d / "noise_stats_0.json"));
    CHECK(j["n_samples"].get<std::size_t>() == 20000);
    CHECK(j["max_alpha_z"].get<double>() < 5.0);
    CHECK(j["max_eta_z"].get<double>() < 5.0);
}
