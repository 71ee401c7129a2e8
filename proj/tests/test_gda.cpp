#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mixgda/gda.hpp"
#include "mixgda/verify.hpp"

using namespace mixgda;

namespace {

NetworkState tiny_net(int k, std::uint64_t seed, int side = 8) {
    NetworkConfig cfg;
    cfg.arch = Arch::tiny;
    cfg.num_classes = k;
    cfg.image_side = side;
    cfg.image_channels = 3;
    return NetworkState::build(cfg, seed);
}

Tensor random_images(int n, int side, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor t = Tensor::zeros({n, side, side, 3});
    for (double& v : t.data) v = scale * (rng.uniform() * 2.0 - 1.0);
    return t;
}

}  // namespace

TEST_CASE("grad field vanishes for a constant-output network") {
    NetworkState net = tiny_net(3, 31);
    LayerParams& head = net.params().back();
    for (double& v : head.w.data) v = 0.0;
    for (double& v : head.b.data) v = 0.0;
    const Tensor batch = random_images(3, 8, 32);
    GradField field = grad_field(net, batch, 0.4, {});
    for (double v : field.r3d.data) CHECK(v == 0.0);
    for (double l1 : field.l1) CHECK(l1 == 0.0);
}

TEST_CASE("grad field matches finite differences of the degenerated entropy") {
    NetworkState net = tiny_net(3, 33, 6);
    const double a = 0.4;
    Tensor batch = random_images(2, 6, 34);
    GdaForwardOptions opts;
    GradField field = grad_field(net, batch, a, opts);

    auto de_sum = [&](const std::vector<double>& pixels) {
        Tensor b = batch;
        b.data = pixels;
        Graph g;
        BoundNet bound(g, net, false);
        ForwardOptions fwd;  // batch statistics, no update, no dropout
        const Tensor probs = g.value(bound.run(b, fwd).probs);
        double total = 0.0;
        for (int i = 0; i < probs.shape[0]; ++i) {
            ProbDist row(probs.data.begin() + static_cast<std::ptrdiff_t>(i) * probs.shape[1],
                         probs.data.begin() + static_cast<std::ptrdiff_t>(i + 1) * probs.shape[1]);
            total += degenerated_entropy(row, a);
        }
        return total;
    };
    const std::vector<double> fd = verify::finite_diff_grad(de_sum, batch.data, 1e-5);
    CHECK(verify::rel_error(field.r3d.data, fd) < 1e-4);

    GradField again = grad_field(net, batch, a, opts);
    CHECK(again.r3d.data == field.r3d.data);  // deterministic reconstruction
}

TEST_CASE("input gradient of a constant function is zero and touches nothing") {
    NetworkState net = tiny_net(3, 38);
    const std::vector<double> theta_before = net.snapshot();
    const Tensor batch = random_images(2, 8, 39);
    const Tensor pixels_before = batch;

    const Tensor grad = input_gradient(
        net, batch, [](Graph& g, NodeId) { return g.constant(Tensor::scalar(2.5)); }, {});
    for (double v : grad.data) CHECK(v == 0.0);
    CHECK(net.snapshot() == theta_before);
    CHECK(batch.data == pixels_before.data);

    // a live function produces a nonzero field through the same entry point
    const Tensor live = input_gradient(
        net, batch, [](Graph& g, NodeId probs) { return g.sum(g.mul(probs, probs)); }, {});
    double mass = 0.0;
    for (double v : live.data) mass += std::abs(v);
    CHECK(mass > 0.0);
}

TEST_CASE("temperature scaling of the logits preserves the dominant gradient block") {
    // fixed-seed regression: scaling every head weight (logit temperature)
    // reshapes the field but keeps the top block of |gradient| mass in place
    NetworkState net = tiny_net(3, 40);
    const Tensor batch = random_images(1, 8, 41);

    auto top_block = [&](double temperature) {
        NetworkState scaled = net;
        LayerParams& head = scaled.params().back();
        for (double& v : head.w.data) v *= temperature;
        for (double& v : head.b.data) v *= temperature;
        GradField f = grad_field(scaled, batch, 0.4, {});
        RoiPartition part = roi_partition(slice_image(f.r3d, 0), 2, 0.5);
        int best = 0;
        for (size_t q = 1; q < part.r2d.size(); ++q)
            if (part.r2d[q] > part.r2d[static_cast<size_t>(best)]) best = static_cast<int>(q);
        return best;
    };
    CHECK(top_block(1.0) == top_block(1.25));
}

TEST_CASE("gvat moves along the L1-normalized field and skips zero fields") {
    Tensor u = Tensor::full({4, 4, 3}, 0.25);
    Tensor field = Tensor::zeros({4, 4, 3});
    CHECK(gvat(u, field, 3.5).data == u.data);

    field.data[0] = 1.0;
    field.data[7] = -1.0;  // L1 norm 2
    Tensor out = gvat(u, field, 3.5);
    CHECK(out.data[0] == doctest::Approx(0.25 + 1.75));
    CHECK(out.data[7] == doctest::Approx(0.25 - 1.75));  // deliberately unclamped
    CHECK(out.data[1] == 0.25);
    CHECK_THROWS(gvat(u, field, 0.0));
}

TEST_CASE("gccb applies the sign rule per block and channel, clamped to [-1,1]") {
    // zero field: sign(0) = +1, so everything is brightened and contrast-raised
    Tensor u = Tensor::full({4, 4, 3}, 0.5);
    Tensor zero_field = Tensor::zeros({4, 4, 3});
    Tensor out = gccb(u, zero_field, 4, 0.4, 0.1);
    for (double v : out.data) CHECK(v == doctest::Approx(0.5 * 1.4 + 0.1));

    // 0.9 * (1 + 0.4) + 0.1 = 1.36 clamps to 1
    Tensor hot = Tensor::full({4, 4, 3}, 0.9);
    Tensor field = Tensor::full({4, 4, 3}, 0.2);  // positive dots everywhere
    out = gccb(hot, field, 4, 0.4, 0.1);
    for (double v : out.data) CHECK(v == 1.0);

    Rng rng(35);
    for (int t = 0; t < 20; ++t) {
        Tensor img = random_images(1, 8, 100 + static_cast<std::uint64_t>(t));
        Tensor f = random_images(1, 8, 200 + static_cast<std::uint64_t>(t), 0.3);
        Tensor g = gccb(slice_image(img, 0), slice_image(f, 0), 4, 0.4, 0.1);
        for (double v : g.data) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK_THROWS(gccb(u, zero_field, 3, 0.4, 0.1));  // 4 not divisible by 3
}

TEST_CASE("gccb sign rule is optimal against exhaustive enumeration") {
    const auto res = verify::check_gccb_signs(404, 50);
    INFO(res.detail);
    CHECK(res.pass);
    const auto broken = verify::check_gccb_signs(404, 20, true);
    CHECK(!broken.pass);  // the oracle must catch a wrong rule
}

TEST_CASE("roi partition follows the ascending prefix rule") {
    // blocks carry masses 0.1, 0.2, 0.25, 0.45 (2x2 grid of 2x2 blocks)
    Tensor field = Tensor::zeros({4, 4, 3});
    const double masses[] = {0.25, 0.45, 0.1, 0.2};  // block ids 0..3 row-major
    for (int q = 0; q < 4; ++q) {
        const int i = (q / 2) * 2, j = (q % 2) * 2;
        field.data[static_cast<size_t>(((i * 4) + j) * 3)] = masses[q];
    }
    RoiPartition part = roi_partition(field, 2, 0.5);
    CHECK(part.r2d[0] == doctest::Approx(0.25));
    CHECK(part.r2d[1] == doctest::Approx(0.45));
    CHECK(std::accumulate(part.r2d.begin(), part.r2d.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    // ascending: 0.1 (q2), 0.2 (q3), 0.25 (q0) reaches 0.55 >= 0.5
    CHECK(part.omega_low == std::vector<int>{2, 3, 0});

    // lambda 0 keeps the minimal prefix of one block
    RoiPartition zero = roi_partition(field, 2, 0.0);
    CHECK(zero.omega_low == std::vector<int>{2});

    // zero field: empty prefix, whole image is ROI
    RoiPartition none = roi_partition(Tensor::zeros({4, 4, 3}), 2, 0.5);
    CHECK(none.zero_field);
    CHECK(none.omega_low.empty());
}

TEST_CASE("uniform masses with lambda 0.5 select exactly half the blocks") {
    // one unit pixel per block: every r2d is exactly 1/64, a power of two,
    // so the 32-block prefix sums to exactly 0.5
    Tensor field = Tensor::zeros({32, 32, 3});
    for (int q = 0; q < 64; ++q)
        field.data[static_cast<size_t>((((q / 8) * 4 * 32) + (q % 8) * 4) * 3)] = 1.0;
    RoiPartition part = roi_partition(field, 4, 0.5);
    CHECK(part.r2d.size() == 64);
    CHECK(part.omega_low.size() == 32);
}

TEST_CASE("roi partition oracle suite") {
    const auto res = verify::check_omega_low(505, 200);
    INFO(res.detail);
    CHECK(res.pass);
}

TEST_CASE("groi suppresses only the low-information blocks") {
    Tensor u = Tensor::full({4, 4, 3}, 0.8);
    RoiPartition part;
    part.r2d = {0.1, 0.2, 0.3, 0.4};
    part.omega_low = {0, 3};

    Tensor out = groi(u, part, 2, 0.8);
    const double factor = (1.0 - 0.8) / 0.8;  // 0.25
    CHECK(out.data[0] == doctest::Approx(0.8 * factor));
    // block 1 (top right) and block 2 (bottom left) untouched
    CHECK(out.data[static_cast<size_t>((0 * 4 + 2) * 3)] == 0.8);
    CHECK(out.data[static_cast<size_t>((2 * 4 + 0) * 3)] == 0.8);
    // block 3 (bottom right) suppressed
    CHECK(out.data[static_cast<size_t>((2 * 4 + 2) * 3)] == doctest::Approx(0.8 * factor));

    // empty omega_low is the identity; zeta = 1 zeroes the suppressed region
    RoiPartition empty;
    empty.r2d = part.r2d;
    CHECK(groi(u, empty, 2, 0.8).data == u.data);
    Tensor zeroed = groi(u, part, 2, 1.0);
    CHECK(zeroed.data[0] == 0.0);

    // applying twice with the same partition changes only omega_low pixels
    Tensor once = groi(u, part, 2, 0.8);
    Tensor twice = groi(once, part, 2, 0.8);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            const bool low = (i / 2) * 2 + (j / 2) == 0 || (i / 2) * 2 + (j / 2) == 3;
            for (int c = 0; c < 3; ++c) {
                const size_t px = static_cast<size_t>((i * 4 + j) * 3 + c);
                if (!low) CHECK(twice.data[px] == u.data[px]);
            }
        }
    CHECK_THROWS(groi(u, part, 2, 0.5));  // zeta must exceed 0.5
}

TEST_CASE("all three augmentations are deterministic functions of their inputs") {
    NetworkState net = tiny_net(2, 36);
    const Tensor batch = random_images(4, 8, 37);
    GradField f1 = grad_field(net, batch, 0.5, {});
    GradField f2 = grad_field(net, batch, 0.5, {});
    CHECK(gvat_batch(batch, f1, 1.0).data == gvat_batch(batch, f2, 1.0).data);
    CHECK(gccb_batch(batch, f1, 4, 0.4, 0.1).data == gccb_batch(batch, f2, 4, 0.4, 0.1).data);
    long c1 = 0, c2 = 0;
    CHECK(groi_batch(batch, f1, 2, 0.5, 0.8, &c1).data == groi_batch(batch, f2, 2, 0.5, 0.8, &c2).data);
    CHECK(c1 == c2);
}
