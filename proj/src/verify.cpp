#include "mixgda/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mixgda/gda.hpp"
#include "mixgda/graph.hpp"
#include "mixgda/prob.hpp"
#include "mixgda/rng.hpp"

namespace mixgda::verify {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

ProbDist dirichlet(Rng& rng, int k, double alpha) {
    ProbDist p(static_cast<size_t>(k));
    double total = 0.0;
    for (double& v : p) {
        v = rng.gamma(alpha);
        total += v;
    }
    for (double& v : p) v /= total;
    return p;
}

Tensor rand_tensor(Shape s, Rng& rng, double lo = -1.5, double hi = 1.5) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& v : t.data) v = lo + (hi - lo) * rng.uniform();
    return t;
}

constexpr double kBoundary = 1e-12;  // slack for equalities attained at one-hot

}  // namespace

double rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     std::vector<double> x, double step) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double fp = f(x);
        x[i] = keep - step;
        const double fm = f(x);
        x[i] = keep;
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

CheckResult check_reliability_bounds(std::uint64_t seed, int pairs, const std::vector<int>& ks) {
    const auto t0 = Clock::now();
    CheckResult res;
    res.name = "reliability_bounds";
    Rng rng(derive_seed(seed, 0xFAC1));
    const double alphas[] = {0.3, 1.0, 3.0};
    long violations = 0;
    std::ostringstream why;
    for (int k : ks) {
        const double logk = std::log(static_cast<double>(k));
        for (int t = 0; t < pairs; ++t) {
            const double alpha = alphas[t % 3];
            const ProbDist p = dirichlet(rng, k, alpha);
            const ProbDist q = dirichlet(rng, k, alpha);
            const double hr = shannon_entropy(p) / logk;
            const double n2 = l2_norm(p);
            const double ip = inner_product(p, q);
            const double cs = cosine(p, q);
            const bool ok = hr >= -kBoundary && hr <= 1.0 + kBoundary &&
                            n2 >= 1.0 / std::sqrt(static_cast<double>(k)) - kBoundary &&
                            n2 <= 1.0 + kBoundary && ip >= -kBoundary && ip <= cs + kBoundary &&
                            cs <= 1.0 + kBoundary;
            if (!ok) {
                if (violations == 0)
                    why << "K=" << k << " trial " << t << ": H/logK=" << hr << " ||p||=" << n2
                        << " <p,q>=" << ip << " cos=" << cs;
                ++violations;
            }
        }
        ProbDist onehot(static_cast<size_t>(k), 0.0);
        onehot[static_cast<size_t>(k) / 2] = 1.0;
        const ProbDist soft = dirichlet(rng, k, 1.0);
        if (std::abs(shannon_entropy(onehot)) > kBoundary || std::abs(l2_norm(onehot) - 1.0) > kBoundary ||
            std::abs(inner_product(onehot, onehot) - 1.0) > kBoundary ||
            std::abs(cosine(onehot, onehot) - 1.0) > kBoundary ||
            std::abs(cosine(soft, soft) - 1.0) > kBoundary) {
            if (violations == 0) why << "K=" << k << ": boundary equality missed";
            ++violations;
        }
    }
    res.pass = violations == 0;
    res.detail = res.pass ? std::to_string(pairs) + " pairs x " + std::to_string(ks.size()) + " K values"
                          : why.str();
    res.millis = ms_since(t0);
    return res;
}

CheckResult check_gradients(std::uint64_t seed, int trials) {
    const auto t0 = Clock::now();
    CheckResult res;
    res.name = "gradient_checks";
    Rng rng(derive_seed(seed, 0x96AD));
    int ran = 0, failed = 0;
    std::ostringstream why;

    // Every case packs its differentiable inputs into one flat vector; the
    // graph is rebuilt per evaluation so finite differences see the same
    // function autodiff sees.
    auto check_case = [&](const std::string& name, const std::vector<Shape>& shapes,
                          const std::function<NodeId(Graph&, const std::vector<NodeId>&)>& build,
                          double lo, double hi) {
        ++ran;
        std::vector<Tensor> init;
        std::vector<double> x0;
        for (const Shape& s : shapes) {
            init.push_back(rand_tensor(s, rng, lo, hi));
            x0.insert(x0.end(), init.back().data.begin(), init.back().data.end());
        }
        Tensor w;
        {
            Graph g;
            std::vector<NodeId> leaves;
            for (const Tensor& tns : init) leaves.push_back(g.constant(tns));
            w = rand_tensor(g.value(build(g, leaves)).shape, rng);
        }
        auto eval = [&](const std::vector<double>& x, bool want_ad) {
            Graph g;
            std::vector<NodeId> leaves;
            size_t off = 0;
            for (const Shape& s : shapes) {
                const size_t n = static_cast<size_t>(shape_numel(s));
                leaves.push_back(g.leaf(Tensor(s, {x.begin() + static_cast<std::ptrdiff_t>(off),
                                                   x.begin() + static_cast<std::ptrdiff_t>(off + n)}),
                                        true));
                off += n;
            }
            NodeId root = g.sum(g.mul(build(g, leaves), g.constant(w)));
            std::vector<double> ad;
            if (want_ad) {
                g.backward(root);
                for (NodeId l : leaves) {
                    const Tensor* gr = g.grad(l);
                    if (gr)
                        ad.insert(ad.end(), gr->data.begin(), gr->data.end());
                    else
                        ad.insert(ad.end(), g.value(l).data.size(), 0.0);
                }
            }
            return std::make_pair(g.value(root).data[0], ad);
        };
        const std::vector<double> ad = eval(x0, true).second;
        const std::vector<double> fd =
            finite_diff_grad([&](const std::vector<double>& x) { return eval(x, false).first; }, x0);
        const double err = rel_error(ad, fd);
        if (!(err < 1e-4)) {
            ++failed;
            if (failed == 1) why << name << ": rel err " << err;
        }
    };

    const int reps = std::max(1, (trials + 16) / 17);  // 17 cases per rep
    for (int t = 0; t < reps; ++t) {
        check_case("leaky_relu", {{3, 5}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.leaky_relu(v[0], 0.1); }, -1.5, 1.5);
        check_case("clamp", {{3, 5}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.clamp(v[0], -1.0, 1.0); }, -2.0, 2.0);
        check_case("log", {{3, 5}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.log_clamped(v[0]); }, 0.05, 2.0);
        check_case("plogp", {{3, 5}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.plogp(v[0]); }, 0.05, 1.0);
        check_case("softmax", {{3, 5}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.softmax(v[0]); }, -2.0, 2.0);
        check_case("scale_add_sub_mul", {{3, 5}, {3, 5}},
                   [](Graph& g, const std::vector<NodeId>& v) {
                       return g.sub(g.mul(v[0], v[1]), g.scale(g.add(v[0], v[1]), 0.3));
                   },
                   -1.5, 1.5);
        check_case("row_sum", {{4, 3}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.row_sum(g.mul(v[0], v[0])); }, -1.5,
                   1.5);
        check_case("max_pool2x2", {{2, 4, 4, 3}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.max_pool2x2(v[0]); }, -1.0, 1.0);
        check_case("global_avg_pool", {{2, 4, 4, 3}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.global_avg_pool(v[0]); }, -1.0, 1.0);
        check_case("dropout", {{2, 4, 4, 3}},
                   [t](Graph& g, const std::vector<NodeId>& v) {
                       return g.dropout(v[0], 0.5, 1234 + static_cast<std::uint64_t>(t));
                   },
                   -1.0, 1.0);
        check_case("dense", {{3, 4}, {2, 4}, {2}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.dense(v[0], v[1], v[2]); }, -1.0,
                   1.0);
        check_case("conv2d_pad1", {{2, 4, 4, 2}, {3, 3, 3, 2}, {3}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.conv2d(v[0], v[1], v[2], 1); },
                   -1.0, 1.0);
        check_case("conv2d_valid", {{1, 5, 5, 2}, {2, 3, 3, 2}, {2}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.conv2d(v[0], v[1], v[2], 0); },
                   -1.0, 1.0);
        check_case("weight_norm", {{3, 2, 2, 2}, {3}},
                   [](Graph& g, const std::vector<NodeId>& v) { return g.weight_norm(v[0], v[1]); }, 0.2,
                   1.5);
        check_case("batch_norm_train", {{6, 3}, {3}, {3}},
                   [](Graph& g, const std::vector<NodeId>& v) {
                       return g.batch_norm(v[0], v[1], v[2], nullptr, true, false, 1e-5, 0.1);
                   },
                   -1.0, 1.0);
        {
            BatchNormStats stats = BatchNormStats::identity(3);
            for (size_t c = 0; c < 3; ++c) {
                stats.mean[c] = 0.2 * static_cast<double>(c) - 0.1;
                stats.stddev[c] = 0.7 + 0.2 * static_cast<double>(c);
            }
            check_case("batch_norm_eval", {{5, 3}, {3}, {3}},
                       [&stats](Graph& g, const std::vector<NodeId>& v) {
                           return g.batch_norm(v[0], v[1], v[2], &stats, false, false, 1e-5, 0.1);
                       },
                       -1.0, 1.0);
        }
        // random 5-layer composition through image ops into a classifier head
        check_case("five_layer_chain", {{2, 4, 4, 2}, {4, 3, 3, 2}, {4}, {4}, {3, 4}, {3}},
                   [](Graph& g, const std::vector<NodeId>& v) {
                       NodeId x = g.conv2d(v[0], v[1], kNoNode, 1);
                       x = g.batch_norm(x, v[2], v[3], nullptr, true, false, 1e-5, 0.1);
                       x = g.leaky_relu(x, 0.1);
                       x = g.max_pool2x2(x);
                       x = g.global_avg_pool(x);
                       return g.softmax(g.dense(x, v[4], v[5]));
                   },
                   -1.0, 1.0);
    }

    res.pass = failed == 0;
    res.detail = res.pass ? std::to_string(ran) + " randomized cases" : why.str();
    res.millis = ms_since(t0);
    return res;
}

namespace {

/// First-order DE change of a sign assignment, evaluated with a
/// fixed summation order so the rule's assignment reproduces one of the
/// enumerated values bit-for-bit.
double linear_gain(const CcbSigns& s, double mag_cont, double mag_bri, const std::vector<int>& sign_bits) {
    double total = 0.0;
    for (size_t i = 0; i < s.dot_u.size(); ++i) {
        const double sc = (sign_bits[2 * i] != 0 ? mag_cont : -mag_cont);
        const double sb = (sign_bits[2 * i + 1] != 0 ? mag_bri : -mag_bri);
        total += sc * s.dot_u[i] + sb * s.dot_1[i];
    }
    return total;
}

}  // namespace

CheckResult check_gccb_signs(std::uint64_t seed, int instances, bool sabotage) {
    const auto t0 = Clock::now();
    CheckResult res;
    res.name = sabotage ? "gccb_signs(sabotaged)" : "gccb_signs";
    Rng rng(derive_seed(seed, 0x9CCB));
    const int block = 4;
    const double mag_cont = 0.4, mag_bri = 0.1;
    int failed = 0;
    std::ostringstream why;
    for (int inst = 0; inst < instances; ++inst) {
        const Tensor img = rand_tensor({block, block, 3}, rng, -1.0, 1.0);
        const Tensor field = rand_tensor({block, block, 3}, rng, -0.5, 0.5);
        CcbSigns s = gccb_signs(img, field, block, mag_cont, mag_bri);
        if (sabotage)
            for (double& v : s.s_bri) v = -v;  // deliberately broken rule

        std::vector<int> rule_bits(6);
        for (size_t i = 0; i < 3; ++i) {
            rule_bits[2 * i] = s.s_cont[i] > 0.0 ? 1 : 0;
            rule_bits[2 * i + 1] = s.s_bri[i] > 0.0 ? 1 : 0;
        }
        const double rule_value = linear_gain(s, mag_cont, mag_bri, rule_bits);
        bool is_max = true;
        std::vector<int> bits(6);
        for (int assignment = 0; assignment < 64; ++assignment) {
            for (int b = 0; b < 6; ++b) bits[static_cast<size_t>(b)] = (assignment >> b) & 1;
            if (linear_gain(s, mag_cont, mag_bri, bits) > rule_value) {
                is_max = false;
                break;
            }
        }
        if (!is_max) {
            ++failed;
            if (failed == 1) why << "instance " << inst << ": rule is not an argmax";
        }
    }
    res.pass = failed == 0;
    res.detail = res.pass ? std::to_string(instances) + " single-block instances, 64 assignments each"
                          : why.str();
    res.millis = ms_since(t0);
    return res;
}

CheckResult check_omega_low(std::uint64_t seed, int instances) {
    const auto t0 = Clock::now();
    CheckResult res;
    res.name = "omega_low";
    Rng rng(derive_seed(seed, 0x0709));
    int failed = 0;
    std::ostringstream why;
    for (int inst = 0; inst < instances; ++inst) {
        const int per_row = 2 + static_cast<int>(rng.uniform_int(3));  // 2..4 blocks per side
        const int block = 2;
        const int side = per_row * block;
        const int q_count = per_row * per_row;
        double lambda = rng.uniform();
        if (inst % 10 == 0) lambda = 0.0;
        if (inst % 10 == 1) lambda = 1.0;

        // random masses, occasionally duplicated to exercise tie-breaking
        std::vector<double> mass(static_cast<size_t>(q_count));
        for (double& v : mass) v = 0.05 + rng.uniform();
        if (inst % 3 == 0 && q_count >= 2) mass[1] = mass[0];
        double total = std::accumulate(mass.begin(), mass.end(), 0.0);
        for (double& v : mass) v /= total;

        // realize the masses as a field with one hot pixel per block
        Tensor field = Tensor::zeros({side, side, 3});
        const BlockGrid grid(side, block);
        for (int q = 0; q < q_count; ++q) {
            const int bi = (q / per_row) * block;
            const int bj = (q % per_row) * block;
            field.data[static_cast<size_t>(((bi * side) + bj) * 3)] = mass[static_cast<size_t>(q)];
        }
        const RoiPartition part = roi_partition(field, block, lambda);

        // independent enumeration over the mass vector
        std::vector<int> order(static_cast<size_t>(q_count));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
            return part.r2d[static_cast<size_t>(x)] < part.r2d[static_cast<size_t>(y)];
        });
        double cum = 0.0;
        size_t l = order.size();
        bool crossed = false;  // lambda=1 may never be reached in floats; both
                               // sides then fall back to the full block list
        for (size_t i = 0; i < order.size(); ++i) {
            cum += part.r2d[static_cast<size_t>(order[i])];
            if (cum >= lambda) {
                l = i + 1;
                crossed = true;
                break;
            }
        }
        const std::vector<int> expect(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(l));

        double mass_sum = std::accumulate(part.r2d.begin(), part.r2d.end(), 0.0);
        double prefix = 0.0, predecessor = 0.0;
        for (size_t i = 0; i < part.omega_low.size(); ++i) {
            predecessor = prefix;
            prefix += part.r2d[static_cast<size_t>(part.omega_low[i])];
        }
        bool ok = part.omega_low == expect && std::abs(mass_sum - 1.0) <= 1e-9;
        if (crossed)
            ok = ok && prefix >= lambda && (part.omega_low.size() <= 1 || predecessor < lambda);
        else
            ok = ok && part.omega_low.size() == part.r2d.size() && prefix >= lambda - 1e-9;
        if (!ok) {
            ++failed;
            if (failed == 1)
                why << "instance " << inst << ": Q=" << q_count << " lambda=" << lambda << " |omega|="
                    << part.omega_low.size() << " prefix=" << prefix;
        }
    }
    res.pass = failed == 0;
    res.detail = res.pass ? std::to_string(instances) + " mass vectors vs enumeration" : why.str();
    res.millis = ms_since(t0);
    return res;
}

CheckResult check_worked_example() {
    const auto t0 = Clock::now();
    CheckResult res;
    res.name = "worked_example";
    const ProbDist g = {0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.04, 0.1, 0.3, 0.5};
    const double a = 0.3;
    const double rem = residual_mass(g, a);
    const double de = degenerated_entropy(g, a);
    const double expect_de = -0.5 * std::log(0.5) - 0.3 * std::log(0.3) - 0.2 * std::log(0.2);
    const ProbDist dist = ppd(g, a);
    bool ok = rem == 0.2;  // exact: the residual is the sum of the excluded entries
    ok = ok && std::abs(de - expect_de) <= 1e-9;
    ok = ok && g_max(g) == 0.5;
    ok = ok && std::abs(dist[8] - 0.375) <= 1e-12 && std::abs(dist[9] - 0.625) <= 1e-12;
    for (int j = 0; j < 8; ++j) ok = ok && dist[static_cast<size_t>(j)] == 0.0;
    res.pass = ok;
    std::ostringstream d;
    d << "g_rem=" << rem << " DE=" << de;
    res.detail = d.str();
    res.millis = ms_since(t0);
    return res;
}

CheckResult check_fault_injection(std::uint64_t seed) {
    const auto t0 = Clock::now();
    CheckResult res;
    res.name = "fault_injection";
    const CheckResult broken = check_gccb_signs(seed, 20, true);
    res.pass = !broken.pass;  // the checker must flag the broken sign rule
    res.detail = res.pass ? "sabotaged sign rule detected" : "sabotaged sign rule went unnoticed";
    res.millis = ms_since(t0);
    return res;
}

Report run_all(std::uint64_t seed) {
    Report report;
    report.checks.push_back(check_worked_example());
    report.checks.push_back(check_reliability_bounds(seed, 10000, {2, 10, 100}));
    report.checks.push_back(check_gradients(seed, 100));
    report.checks.push_back(check_gccb_signs(seed, 50));
    report.checks.push_back(check_omega_low(seed, 200));
    report.checks.push_back(check_fault_injection(seed));
    return report;
}

}  // namespace mixgda::verify
