#include "mixgda/prob.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mixgda {

double g_max(const ProbDist& g) {
    if (g.empty()) throw std::invalid_argument("g_max: empty distribution");
    double m = g[0];
    for (double v : g) m = std::max(m, v);
    return m;
}

PPIMask ppi(const ProbDist& g, double a) {
    if (a < 0.0 || a > 1.0)
        throw std::invalid_argument("ppi: threshold ratio a must be in [0,1], got " + std::to_string(a));
    const double threshold = a * g_max(g);
    PPIMask m;
    m.a = a;
    m.indicator.resize(g.size());
    for (size_t j = 0; j < g.size(); ++j) m.indicator[j] = g[j] >= threshold ? 1.0 : 0.0;
    return m;
}

ProbDist ppd(const ProbDist& g, double a) {
    const PPIMask m = ppi(g, a);
    double denom = 0.0;
    for (size_t j = 0; j < g.size(); ++j) denom += m.indicator[j] * g[j];
    ProbDist out(g.size(), 0.0);
    for (size_t j = 0; j < g.size(); ++j) out[j] = m.indicator[j] * g[j] / denom;
    return out;
}

double residual_mass(const ProbDist& g, const PPIMask& mask) {
    double rem = 0.0;
    for (size_t j = 0; j < g.size(); ++j)
        if (mask.indicator[j] == 0.0) rem += g[j];
    return rem;
}

double residual_mass(const ProbDist& g, double a) { return residual_mass(g, ppi(g, a)); }

double degenerated_entropy(const ProbDist& g, double a) {
    const PPIMask m = ppi(g, a);
    double h = 0.0;
    for (size_t j = 0; j < g.size(); ++j) {
        const double p = m.indicator[j] * g[j];
        if (p > 0.0) h -= p * std::log(p);
    }
    const double rem = residual_mass(g, m);
    if (rem > 0.0) h -= rem * std::log(rem);
    return h;
}

double shannon_entropy(const ProbDist& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double inner_product(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("inner_product: dimension mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    return inner_product(a, b) / (l2_norm(a) * l2_norm(b));
}

double reliability(const ProbDist& g, ReliabilityKind kind) {
    switch (kind) {
        case ReliabilityKind::entropy:
            return 1.0 - shannon_entropy(g) / std::log(static_cast<double>(g.size()));
        case ReliabilityKind::l2norm:
            return l2_norm(g);
        default:
            throw std::invalid_argument("reliability: kind needs two distributions, use reliability_pair");
    }
}

double reliability_pair(const std::vector<double>& p, const ProbDist& q, ReliabilityKind kind) {
    switch (kind) {
        case ReliabilityKind::cosine:
            return cosine(p, q);
        case ReliabilityKind::inner:
            return inner_product(p, q);
        default:
            throw std::invalid_argument("reliability_pair: kind is a single-distribution reliability");
    }
}

}  // namespace mixgda
