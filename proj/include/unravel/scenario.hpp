#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unravel/correlations.hpp"
#include "unravel/ensemble.hpp"
#include "unravel/sse.hpp"

namespace unravel {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitStatistical = 3,
    kExitNumerical = 4,
};

inline constexpr int kSchemaVersion = 1;

/// Bad or unknown configuration keys and values.
class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

struct BathSpec {
    enum class Kind { Markov, Ohmic, SuperOhmic, Table, Modes };
    Kind kind{Kind::Ohmic};
    double rate{0.0};
    double strength{0.0};
    double cutoff{1.0};
    double omega_max{0.0};
    std::size_t n_modes{0};
    std::vector<double> table_omega, table_j;
    std::vector<double> g, omega;  // explicit modes
};

struct SqueezingSpec {
    std::string rule{"zero"};  // zero | optimal | restore | per_mode_phase | constant
    std::optional<double> target_time;  // defaults to the grid horizon
    double epsilon{kDefaultEpsilon};
    std::vector<double> phases;
    double magnitude{0.0};
    cplx value{};
};

struct SystemSpec {
    std::size_t n_qubits{1};
    std::vector<std::size_t> coupled{0};
    std::vector<Eigen::Vector3d> pauli;  // (x, y, z) per qubit
    std::string initial_label{"plus"};
    Eigen::VectorXcd initial_state;
    std::size_t max_qubits{kDefaultMaxQubits};
};

struct EnsembleSpec {
    std::size_t n_trajectories{1000};
    std::uint64_t seed{1};
    std::string sampler{"modesum"};  // modesum | covariance
    std::size_t blocks{32};
};

struct OutputSpec {
    std::string dir{"out"};
    std::size_t trajectory_files{2};
    bool state_dump{false};
};

struct OracleSpec {
    std::size_t n_max{20};
    std::size_t nodes{40};
    std::vector<cplx> xi{cplx{0.0, 0.0}};
    double leakage_threshold{1e-6};
    double rtol{1e-10};
    double atol{1e-12};
    double tolerance{1e-8};
    double sse_tolerance{1e-6};
    std::size_t quadrature_times{3};
    std::vector<cplx> residual_nodes{{0.0, 0.0}, {0.7, -0.4}, {-1.1, 0.9}, {0.3, 1.6}};
};

struct OptimizeSpec {
    std::string objective{"minimize"};  // minimize | maximize
    std::optional<double> target_time;
    double epsilon{kDefaultEpsilon};
    std::size_t budget{4000};
    std::size_t starts{4};
    std::size_t scan_points{32};
    double gap_threshold{1e-3};
};

struct ScenarioConfig {
    int schema_version{kSchemaVersion};
    std::string time_unit;
    std::string scenario{"unnamed"};
    SystemSpec system;
    std::vector<BathSpec> baths;
    double dt{0.01};
    std::size_t n_steps{100};
    SqueezingSpec squeezing;
    EnsembleSpec ensemble;
    OutputSpec outputs;
    std::optional<OracleSpec> oracle;
    std::optional<OptimizeSpec> optimize;

    TimeGrid grid() const { return {dt, n_steps}; }
};

/// TOML file, or JSON when the path ends in `.json` (a resolved config).
ScenarioConfig load_config(const std::filesystem::path& path);
ScenarioConfig parse_config_toml(const std::string& text);
ScenarioConfig parse_config_json(const std::string& text);

/// Every field with defaults filled in; loads back through parse_config_json.
std::string resolved_config_json(const ScenarioConfig& config);

SqueezingRule make_rule(const SqueezingSpec& spec, double horizon);

/// One coupled qubit's bath, resolved on the scenario grid.
struct Channel {
    std::optional<ModeSet> modes;     // absent for Markov
    std::optional<double> markov_rate;
    std::optional<CorrelationKernel> kernel;
    RateTable rates;
    std::optional<NoiseSource> source;

    /// Exact decoherence exponent Gamma(t) (xi-independent).
    double exponent(double t) const;
};

std::vector<Channel> build_channels(const ScenarioConfig& config, const SqueezingRule& rule);

DephasingSystem make_system(const SystemSpec& spec);

struct RunContext {
    std::filesystem::path out_dir;
    std::ostream* log{nullptr};
};

int run_correlations(const ScenarioConfig& config, const RunContext& ctx);
int run_sample(const ScenarioConfig& config, const RunContext& ctx);
int run_unraveling(const ScenarioConfig& config, const RunContext& ctx);
int run_oracle(const ScenarioConfig& config, const RunContext& ctx);
int run_optimize(const ScenarioConfig& config, const RunContext& ctx);

} // namespace unravel
