#pragma once

#include <vector>

namespace mixgda {

/// K-dimensional probability vector (model output).
using ProbDist = std::vector<double>;

enum class ReliabilityKind { entropy, l2norm, cosine, inner };

struct PPIMask {
    std::vector<double> indicator;  // entries in {0,1}, at least one 1
    double a = 0.0;                 // threshold ratio
};

double g_max(const ProbDist& g);

/// Indicator of entries with g_j >= a * g_max (>= comparison, ties included).
PPIMask ppi(const ProbDist& g, double a);

/// (mask . g) / <mask, g>; zero outside the mask, sums to 1.
ProbDist ppd(const ProbDist& g, double a);

/// Sum of the probabilities excluded by the mask (g_rem).
double residual_mass(const ProbDist& g, double a);
double residual_mass(const ProbDist& g, const PPIMask& mask);

/// Shannon entropy in nats of the reduced distribution
/// [principal probabilities ; residual], with 0*log(0) = 0.
double degenerated_entropy(const ProbDist& g, double a);

/// Shannon entropy in nats, 0*log(0) = 0.
double shannon_entropy(const ProbDist& p);

double l2_norm(const std::vector<double>& v);
double inner_product(const std::vector<double>& a, const std::vector<double>& b);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Single-distribution reliability: entropy -> 1 - H(g)/log K, l2norm -> ||g||_2.
double reliability(const ProbDist& g, ReliabilityKind kind);

/// Pair reliability against a label distribution: cosine or inner product.
double reliability_pair(const std::vector<double>& p, const ProbDist& q, ReliabilityKind kind);

}  // namespace mixgda
