#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mixgda::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double millis = 0.0;
};

struct Report {
    std::vector<CheckResult> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

/// Norm-based relative error ||a-b|| / max(||a||, ||b||, floor).
double rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-10);

/// Central finite differences of f over x, step h per coordinate.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double step = 1e-5);

/// Reliability bound suite over Dirichlet-sampled pairs for each K: entropy
/// ratio in [0,1], L2 norm in [1/sqrt(K),1], 0 <= <p,q> <= cos(p,q) <= 1,
/// plus one-hot boundary equalities (1e-12).
CheckResult check_reliability_bounds(std::uint64_t seed, int pairs, const std::vector<int>& ks);

/// Finite-difference gradient checks for every op kind plus random layer
/// compositions; >= `trials` randomized cases, 1e-4 relative.
CheckResult check_gradients(std::uint64_t seed, int trials);

/// Random single-block instances: the sign rule's linearized DE gain must be
/// the exact maximum over all 64 sign assignments. sabotage flips the
/// brightness signs, which the check is expected to catch.
CheckResult check_gccb_signs(std::uint64_t seed, int instances, bool sabotage = false);

/// Random mass vectors: library block partition vs an independent prefix
/// enumeration; cumulative and strict-predecessor conditions.
CheckResult check_omega_low(std::uint64_t seed, int instances);

/// The worked degenerated-entropy example (K=10, a=0.3).
CheckResult check_worked_example();

/// Harness self-test: the sign-rule checker must flag a broken rule.
CheckResult check_fault_injection(std::uint64_t seed);

Report run_all(std::uint64_t seed);

}  // namespace mixgda::verify
