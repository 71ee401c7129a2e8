#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mixgda/dataset.hpp"

using namespace mixgda;

namespace {

std::string temp_path(const std::string& stem) { return "/tmp/mixgda_test_" + stem; }

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint8_t pixel_byte(double v) {
    return static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5));
}

}  // namespace

TEST_CASE("cifar10 pixel mapping hits the endpoints") {
    std::vector<std::uint8_t> bytes(2 * 3073, 0);
    bytes[0] = 7;  // label
    for (size_t i = 1; i < 3073; ++i) bytes[i] = 255;
    bytes[3073] = 2;
    const std::string path = temp_path("cifar_endpoints.bin");
    write_bytes(path, bytes);
    const auto samples = load_cifar_binary(path, CifarVariant::cifar10);
    REQUIRE(samples.size() == 2);
    CHECK(*samples[0].label == 7);
    for (double v : samples[0].image.data) CHECK(v == 1.0);
    for (double v : samples[1].image.data) CHECK(v == -1.0);
}

TEST_CASE("cifar10 round-trips byte-identically through decode and re-encode") {
    std::vector<std::uint8_t> bytes;
    std::uint64_t state = 99;
    for (int r = 0; r < 2; ++r) {
        bytes.push_back(static_cast<std::uint8_t>(r + 3));
        for (int i = 0; i < 3072; ++i) bytes.push_back(static_cast<std::uint8_t>(splitmix64(state) & 0xFF));
    }
    const std::string path = temp_path("cifar_roundtrip.bin");
    write_bytes(path, bytes);
    const auto samples = load_cifar_binary(path, CifarVariant::cifar10);

    std::vector<std::uint8_t> rebuilt;
    for (const Sample& s : samples) {
        rebuilt.push_back(static_cast<std::uint8_t>(*s.label));
        for (int ch = 0; ch < 3; ++ch)
            for (int i = 0; i < 32; ++i)
                for (int j = 0; j < 32; ++j)
                    rebuilt.push_back(pixel_byte(s.image.data[static_cast<size_t>((i * 32 + j) * 3 + ch)]));
    }
    CHECK(rebuilt == bytes);
}

TEST_CASE("cifar loader reports truncation with the byte offset and rejects bad labels") {
    const std::string path = temp_path("cifar_truncated.bin");
    write_bytes(path, std::vector<std::uint8_t>(3073 + 10, 0));
    CHECK_THROWS_WITH_AS(static_cast<void>(load_cifar_binary(path, CifarVariant::cifar10)),
                         doctest::Contains("byte offset"), std::runtime_error);

    std::vector<std::uint8_t> bad(3073, 0);
    bad[0] = 10;  // labels are 0..9
    const std::string path2 = temp_path("cifar_badlabel.bin");
    write_bytes(path2, bad);
    CHECK_THROWS_WITH_AS(static_cast<void>(load_cifar_binary(path2, CifarVariant::cifar10)),
                         doctest::Contains("label"), std::runtime_error);
}

TEST_CASE("cifar100 reads the fine label from the second header byte") {
    std::vector<std::uint8_t> bytes(3074, 128);
    bytes[0] = 11;  // coarse, ignored
    bytes[1] = 87;  // fine
    const std::string path = temp_path("cifar100.bin");
    write_bytes(path, bytes);
    const auto samples = load_cifar_binary(path, CifarVariant::cifar100);
    CHECK(*samples[0].label == 87);
}

TEST_CASE("raw loader rejects short and mislabeled headers") {
    const std::string path = temp_path("raw_short.mxgd");
    write_bytes(path, {'M', 'X', 'G', 'D', 1, 0, 0, 0, 8, 0, 8, 0});  // truncated header
    CHECK_THROWS_AS(static_cast<void>(load_raw(path)), std::runtime_error);
    write_bytes(path, std::vector<std::uint8_t>(20, 0));  // wrong magic
    CHECK_THROWS_WITH_AS(static_cast<void>(load_raw(path)), doctest::Contains("MXGD"), std::runtime_error);
}

TEST_CASE("raw container round-trips including unlabeled records") {
    SyntheticSpec spec;
    spec.n = 6;
    spec.num_classes = 3;
    spec.side = 8;
    spec.seed = 4;
    std::vector<Sample> samples = make_synthetic(spec);
    samples[2].label.reset();
    samples[5].label.reset();
    const std::string path = temp_path("raw_roundtrip.mxgd");
    save_raw(path, samples, 8, 8, 3, 3);
    const RawDataset ds = load_raw(path);
    CHECK(ds.width == 8);
    CHECK(ds.num_classes == 3);
    REQUIRE(ds.samples.size() == 6);
    CHECK(!ds.samples[2].label.has_value());
    CHECK(!ds.samples[5].label.has_value());
    CHECK(*ds.samples[0].label == *samples[0].label);

    // a second encode of the decoded samples must reproduce the file
    const std::string path2 = temp_path("raw_roundtrip2.mxgd");
    save_raw(path2, ds.samples, 8, 8, 3, 3);
    CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("synthetic generation is deterministic and stratified") {
    SyntheticSpec spec;
    spec.n = 10;
    spec.num_classes = 2;
    spec.side = 8;
    spec.seed = 7;
    const auto a = make_synthetic(spec);
    const auto b = make_synthetic(spec);
    REQUIRE(a.size() == 10);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image.data == b[i].image.data);
        CHECK(*a[i].label == *b[i].label);
    }
    spec.n = 11;
    spec.num_classes = 3;
    int counts[3] = {0, 0, 0};
    for (const Sample& s : make_synthetic(spec)) counts[*s.label]++;
    CHECK(std::abs(counts[0] - counts[1]) <= 1);
    CHECK(std::abs(counts[1] - counts[2]) <= 1);
    for (const Sample& s : a)
        for (double v : s.image.data) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
}

TEST_CASE("a least-squares probe separates the synthetic classes") {
    SyntheticSpec spec;
    spec.n = 1000;
    spec.num_classes = 2;
    spec.side = 8;
    spec.seed = 21;
    const auto samples = make_synthetic(spec);
    const int d = 8 * 8 * 3 + 1;  // bias column

    // ridge-regularized normal equations, one-vs-all on K=2 collapses to one output
    std::vector<double> xtx(static_cast<size_t>(d) * d, 0.0), xty(static_cast<size_t>(d), 0.0);
    for (const Sample& s : samples) {
        std::vector<double> row(s.image.data.begin(), s.image.data.end());
        row.push_back(1.0);
        const double y = *s.label == 0 ? -1.0 : 1.0;
        for (int i = 0; i < d; ++i) {
            xty[static_cast<size_t>(i)] += row[static_cast<size_t>(i)] * y;
            for (int j = 0; j < d; ++j)
                xtx[static_cast<size_t>(i) * d + j] += row[static_cast<size_t>(i)] * row[static_cast<size_t>(j)];
        }
    }
    for (int i = 0; i < d; ++i) xtx[static_cast<size_t>(i) * d + i] += 1e-3;
    // gaussian elimination
    std::vector<double> w = xty;
    for (int col = 0; col < d; ++col) {
        int pivot = col;
        for (int r = col + 1; r < d; ++r)
            if (std::abs(xtx[static_cast<size_t>(r) * d + col]) >
                std::abs(xtx[static_cast<size_t>(pivot) * d + col]))
                pivot = r;
        for (int c = 0; c < d; ++c)
            std::swap(xtx[static_cast<size_t>(col) * d + c], xtx[static_cast<size_t>(pivot) * d + c]);
        std::swap(w[static_cast<size_t>(col)], w[static_cast<size_t>(pivot)]);
        const double diag = xtx[static_cast<size_t>(col) * d + col];
        for (int r = 0; r < d; ++r) {
            if (r == col) continue;
            const double f = xtx[static_cast<size_t>(r) * d + col] / diag;
            for (int c = col; c < d; ++c)
                xtx[static_cast<size_t>(r) * d + c] -= f * xtx[static_cast<size_t>(col) * d + c];
            w[static_cast<size_t>(r)] -= f * w[static_cast<size_t>(col)];
        }
    }
    for (int i = 0; i < d; ++i) w[static_cast<size_t>(i)] /= xtx[static_cast<size_t>(i) * d + i];

    int correct = 0;
    for (const Sample& s : samples) {
        double score = w[static_cast<size_t>(d) - 1];
        for (size_t i = 0; i < s.image.data.size(); ++i) score += w[i] * s.image.data[i];
        const int pred = score < 0.0 ? 0 : 1;
        if (pred == *s.label) ++correct;
    }
    CHECK(static_cast<double>(correct) / 1000.0 > 0.9);
}

TEST_CASE("stratified split") {
    SyntheticSpec spec;
    spec.n = 500;
    spec.num_classes = 10;
    spec.side = 8;
    spec.seed = 13;
    const auto pool = make_synthetic(spec);

    SplitPools pools = split(pool, 250, 10, 42);
    CHECK(pools.labeled.size() == 250);
    CHECK(pools.unlabeled.size() == 250);
    int counts[10] = {};
    for (const Sample& s : pools.labeled) counts[*s.label]++;
    for (int c = 0; c < 10; ++c) CHECK(counts[c] == 25);
    for (const Sample& s : pools.unlabeled) CHECK(!s.label.has_value());

    SplitPools again = split(pool, 250, 10, 42);
    for (size_t i = 0; i < pools.labeled.size(); ++i)
        CHECK(pools.labeled[i].image.data == again.labeled[i].image.data);

    SplitPools all = split(pool, 500, 10, 1);
    CHECK(all.unlabeled.empty());
    CHECK_THROWS(split(pool, 501, 10, 1));
}

TEST_CASE("default augmentation") {
    SyntheticSpec spec;
    spec.n = 1;
    spec.side = 8;
    spec.seed = 3;
    const Sample s = make_synthetic(spec)[0];

    Rng rng(1);
    const Sample same = default_augment(s, false, 0, rng);
    CHECK(same.image.data == s.image.data);

    // single lit pixel travels with the shift, vacated region becomes zero
    Sample lit;
    lit.label = 0;
    lit.image = Tensor::zeros({8, 8, 1});
    lit.image.data[0] = 0.5;  // pixel (0,0)
    for (int trial = 0; trial < 200; ++trial) {
        Rng r2(static_cast<std::uint64_t>(trial));
        const Sample moved = default_augment(lit, false, 2, r2);
        double total = 0.0;
        for (double v : moved.image.data) {
            total += std::abs(v);
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
        CHECK((total == 0.0 || total == 0.5));  // either shifted out or exactly one lit pixel
    }
}

TEST_CASE("minibatch sampler covers every labeled index within one epoch") {
    // distinct first-pixel values identify samples; shift 0 keeps them intact
    std::vector<Sample> pool;
    for (int i = 0; i < 23; ++i) {
        Sample s;
        s.label = i % 2;
        s.image = Tensor::zeros({4, 4, 1});
        s.image.data[5] = static_cast<double>(i + 1) / 100.0;
        pool.push_back(std::move(s));
    }
    SplitPools pools;
    pools.labeled = pool;

    MinibatchSampler sampler(pools, false, 0, 99);
    const int m_l = 5;
    const int batches = (23 + m_l - 1) / m_l;
    std::set<int> seen;
    for (int b = 0; b < batches; ++b) {
        Minibatch mb = sampler.next(m_l, m_l);
        CHECK(mb.labeled.size() == static_cast<size_t>(m_l));
        CHECK(mb.unlabeled.size() == static_cast<size_t>(m_l));
        for (const LabeledDraw& d : mb.labeled)
            seen.insert(static_cast<int>(std::lround(d.augmented.data[5] * 100.0)));
    }
    CHECK(seen.size() == 23);
}

TEST_CASE("minibatch sampling is reproducible and keeps the original image") {
    SyntheticSpec spec;
    spec.n = 40;
    spec.num_classes = 2;
    spec.side = 8;
    spec.seed = 5;
    const auto pool = make_synthetic(spec);
    SplitPools pools = split(pool, 20, 2, 3);

    MinibatchSampler a(pools, true, 2, 77);
    MinibatchSampler b(pools, true, 2, 77);
    for (int step = 0; step < 5; ++step) {
        Minibatch ma = a.next(4, 8);
        Minibatch mb = b.next(4, 8);
        for (size_t i = 0; i < ma.labeled.size(); ++i) {
            CHECK(ma.labeled[i].augmented.data == mb.labeled[i].augmented.data);
            CHECK(ma.labeled[i].original.data == mb.labeled[i].original.data);
            CHECK(ma.labeled[i].label == mb.labeled[i].label);
        }
        for (size_t i = 0; i < ma.unlabeled.size(); ++i)
            CHECK(ma.unlabeled[i].augmented.data == mb.unlabeled[i].augmented.data);
        for (const LabeledDraw& d : ma.labeled)
            for (double v : d.augmented.data) {
                CHECK(v >= -1.0);
                CHECK(v <= 1.0);
            }
    }
}
