#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace unravel {

struct CriterionResult {
    int id{0};
    std::string name;
    bool passed{false};
    bool statistical{false};  // Monte-Carlo criterion; failure maps to exit code 3
    std::string detail;
    double seconds{0.0};
};

struct AcceptanceOptions {
    std::uint64_t seed{20240611};
    std::set<int> only;  // empty runs all ten
};

using Criterion = std::function<CriterionResult(std::uint64_t seed)>;

CriterionResult noise_correlation_fidelity(std::uint64_t seed);
CriterionResult reduced_dynamics_invariance(std::uint64_t seed);
CriterionResult oracle_equivalence(std::uint64_t seed);
CriterionResult sse_residual(std::uint64_t seed);
CriterionResult scaling_relation(std::uint64_t seed);
CriterionResult tight_bound(std::uint64_t seed);
CriterionResult multi_channel_exponent(std::uint64_t seed);
CriterionResult entanglement_restoration(std::uint64_t seed);
CriterionResult markov_limit(std::uint64_t seed);
CriterionResult optimizer_validation(std::uint64_t seed);

/// Runs the selected criteria in order and prints one PASS/FAIL line each.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options, std::ostream& out);

/// 0 if all passed, 3 if a statistical criterion failed, otherwise 4.
int acceptance_exit_code(const std::vector<CriterionResult>& results);

} // namespace unravel
