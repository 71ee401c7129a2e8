#include <cmath>

#include "doctest.h"
#include "mixgda/inner.hpp"

using namespace mixgda;

namespace {
ProbDist onehot(int k, int idx) {
    ProbDist p(static_cast<size_t>(k), 0.0);
    p[static_cast<size_t>(idx)] = 1.0;
    return p;
}
}  // namespace

TEST_CASE("confidence gate follows ||g||^2 >= beta^2") {
    Rng rng(90);
    std::vector<ProbDist> probs = {
        onehot(4, 1),              // norm 1
        {0.5, 0.5, 0.0, 0.0},      // norm^2 = 0.5
        {0.25, 0.25, 0.25, 0.25},  // norm^2 = 0.25
    };
    PartnerAssignment a = assign_partners(probs, 0.8, rng);
    CHECK(a.confident == std::vector<int>{0});
    PartnerAssignment b = assign_partners(probs, 0.7, rng);  // beta^2 = 0.49 admits the second
    CHECK(b.confident == std::vector<int>{0, 1});
    PartnerAssignment none = assign_partners(probs, 1.1, rng);
    CHECK(none.confident.empty());
}

TEST_CASE("same-class one-hot members pair with each other") {
    Rng rng(91);
    std::vector<ProbDist> probs = {onehot(3, 0), onehot(3, 0)};
    PartnerAssignment a = assign_partners(probs, 0.8, rng);
    REQUIRE(a.confident.size() == 2);
    for (size_t m = 0; m < 2; ++m) {
        CHECK(!a.same_defaulted[m]);       // cos = 1 with both self and twin
        CHECK(a.diff_defaulted[m]);        // nothing at cos <= 1/2
        CHECK(a.same_dist[m] == probs[m]);
        CHECK(a.diff_dist[m] == ProbDist(3, 0.0));
    }
}

TEST_CASE("different-class one-hot members separate; the same partner comes from the self scan") {
    Rng rng(92);
    std::vector<ProbDist> probs = {onehot(3, 0), onehot(3, 2)};
    PartnerAssignment a = assign_partners(probs, 0.8, rng);
    REQUIRE(a.confident.size() == 2);
    CHECK(a.diff_dist[0] == probs[1]);  // cos = 0 <= 1/2
    CHECK(a.diff_dist[1] == probs[0]);
    // the scan list includes the member itself, so u_same resolves to the
    // member's own distribution (cos = 1) rather than the all-ones default
    CHECK(a.same_dist[0] == probs[0]);
    CHECK(a.same_dist[1] == probs[1]);
    CHECK(!a.same_defaulted[0]);
}

TEST_CASE("members in the dead zone default the partner only where no candidate qualifies") {
    // cos((1,0),(0.5,0.5)) = 1/sqrt(2), strictly between cos(pi/3) and cos(pi/6)
    Rng rng(93);
    std::vector<ProbDist> probs = {{1.0, 0.0}, {0.5, 0.5}};
    PartnerAssignment a = assign_partners(probs, 0.7, rng);  // both confident (norms 1, 0.7071)
    REQUIRE(a.confident.size() == 2);
    for (size_t m = 0; m < 2; ++m) {
        CHECK(a.diff_defaulted[m]);
        CHECK(a.diff_dist[m] == ProbDist(2, 0.0));
        CHECK(a.same_dist[m] == probs[m]);  // self is the only qualifying same partner
    }
}

TEST_CASE("inner loss term values") {
    Rng rng(94);
    const int m_ul = 8;
    std::vector<ProbDist> probs = {onehot(4, 2)};
    PartnerAssignment a = assign_partners(probs, 0.8, rng);
    REQUIRE(a.confident.size() == 1);

    // u_same = self (one-hot), u_diff defaulted to zero: perfect agreement
    CHECK(inner_loss(probs, a, m_ul) == doctest::Approx(0.0));

    // a zero diff partner contributes nothing even for a different prediction
    std::vector<ProbDist> moved = {{0.25, 0.25, 0.25, 0.25}};
    const double loss = inner_loss(moved, a, m_ul);
    CHECK(loss == doctest::Approx((1.0 - 0.25) / m_ul));  // (0 + 1 - <g,u_same>) / m_ul

    // an all-ones same partner contributes exactly zero: <g, 1_K> = 1
    PartnerAssignment ones;
    ones.confident = {0};
    ones.same_dist = {std::vector<double>(4, 1.0)};
    ones.diff_dist = {std::vector<double>(4, 0.0)};
    ones.same_defaulted = {true};
    ones.diff_defaulted = {true};
    CHECK(inner_loss(moved, ones, m_ul) == doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS(inner_loss(moved, ones, 0));
}

TEST_CASE("inner loss is nonnegative with bracketed terms in [0,2]") {
    Rng rng(95);
    for (int t = 0; t < 50; ++t) {
        const int n = 6, k = 5;
        std::vector<ProbDist> probs;
        for (int i = 0; i < n; ++i) {
            ProbDist p(static_cast<size_t>(k));
            double total = 0.0;
            for (double& v : p) {
                v = rng.gamma(0.4);
                total += v;
            }
            for (double& v : p) v /= total;
            probs.push_back(std::move(p));
        }
        PartnerAssignment a = assign_partners(probs, 0.5, rng);
        const double loss = inner_loss(probs, a, n);
        CHECK(loss >= 0.0);
        for (size_t m = 0; m < a.confident.size(); ++m) {
            const ProbDist& gv = probs[static_cast<size_t>(a.confident[m])];
            const double term = inner_product(gv, a.diff_dist[m]) + 1.0 - inner_product(gv, a.same_dist[m]);
            CHECK(term >= -1e-12);
            CHECK(term <= 2.0 + 1e-12);
        }
    }
}

TEST_CASE("normalization uses m_ul even when few members are confident") {
    Rng rng(96);
    std::vector<ProbDist> probs = {onehot(3, 0), {1.0 / 3, 1.0 / 3, 1.0 / 3}};
    PartnerAssignment a = assign_partners(probs, 0.9, rng);
    REQUIRE(a.confident.size() == 1);
    std::vector<ProbDist> moved = probs;
    moved[0] = {0.5, 0.25, 0.25};
    const double loss_small = inner_loss(moved, a, 4);
    const double loss_large = inner_loss(moved, a, 8);
    CHECK(loss_small == doctest::Approx(2.0 * loss_large));
}
