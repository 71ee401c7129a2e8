#include "mixgda/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mixgda {

namespace {

double byte_to_pixel(std::uint8_t b) { return static_cast<double>(b) / 127.5 - 1.0; }

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f.seekg(0, std::ios::end);
    auto len = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(static_cast<size_t>(len));
    f.read(reinterpret_cast<char*>(buf.data()), len);
    if (!f) throw std::runtime_error("short read on " + path);
    return buf;
}

/// channel-major bytes (c planes of h*w) -> {H,W,C} tensor in [-1,1]
Tensor decode_pixels(const std::uint8_t* p, int h, int w, int c) {
    Tensor img = Tensor::zeros({h, w, c});
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                img.data[static_cast<size_t>((i * w + j) * c + ch)] =
                    byte_to_pixel(p[(ch * h + i) * w + j]);
    return img;
}

void encode_pixels(const Tensor& img, std::uint8_t* out) {
    const int h = img.shape[0], w = img.shape[1], c = img.shape[2];
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                double v = img.data[static_cast<size_t>((i * w + j) * c + ch)];
                double b = std::round((v + 1.0) * 127.5);
                out[(ch * h + i) * w + j] = static_cast<std::uint8_t>(std::min(std::max(b, 0.0), 255.0));
            }
}

void put_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
    v.push_back(static_cast<std::uint8_t>(x & 0xFF));
    v.push_back(static_cast<std::uint8_t>(x >> 8));
}
void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(static_cast<std::uint8_t>((x >> (8 * i)) & 0xFF));
}
std::uint16_t get_u16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<Sample> load_cifar_binary(const std::string& path, CifarVariant variant) {
    const auto buf = read_file(path);
    const bool fine = variant == CifarVariant::cifar100;
    const size_t record = fine ? 3074 : 3073;
    const int k = fine ? 100 : 10;
    if (buf.size() % record != 0)
        throw std::runtime_error(path + ": truncated at byte offset " +
                                 std::to_string(buf.size() - buf.size() % record) +
                                 " (record size " + std::to_string(record) + ")");
    std::vector<Sample> out;
    out.reserve(buf.size() / record);
    for (size_t off = 0; off < buf.size(); off += record) {
        const int label = fine ? buf[off + 1] : buf[off];  // cifar100: coarse byte first, fine second
        if (label >= k)
            throw std::runtime_error(path + ": label " + std::to_string(label) + " out of range at offset " +
                                     std::to_string(off));
        Sample s;
        s.label = label;
        s.image = decode_pixels(buf.data() + off + (fine ? 2 : 1), 32, 32, 3);
        out.push_back(std::move(s));
    }
    return out;
}

RawDataset load_raw(const std::string& path) {
    const auto buf = read_file(path);
    if (buf.size() < 16 || std::memcmp(buf.data(), "MXGD", 4) != 0)
        throw std::runtime_error(path + ": missing MXGD header");
    RawDataset ds;
    const std::uint32_t count = get_u32(buf.data() + 4);
    ds.width = get_u16(buf.data() + 8);
    ds.height = get_u16(buf.data() + 10);
    ds.channels = get_u16(buf.data() + 12);
    ds.num_classes = get_u16(buf.data() + 14);
    const size_t header = 16;
    const size_t record = 2 + static_cast<size_t>(ds.width) * ds.height * ds.channels;
    if (buf.size() != header + record * count)
        throw std::runtime_error(path + ": truncated at byte offset " + std::to_string(buf.size()) +
                                 " (expected " + std::to_string(header + record * count) + " bytes)");
    for (std::uint32_t r = 0; r < count; ++r) {
        const std::uint8_t* p = buf.data() + header + record * r;
        const std::uint16_t label = get_u16(p);
        Sample s;
        if (label != kUnlabeled) {
            if (label >= ds.num_classes)
                throw std::runtime_error(path + ": label " + std::to_string(label) + " out of range in record " +
                                         std::to_string(r));
            s.label = label;
        }
        s.image = decode_pixels(p + 2, ds.height, ds.width, ds.channels);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void save_raw(const std::string& path, const std::vector<Sample>& samples, int w, int h, int c, int k) {
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), {'M', 'X', 'G', 'D'});
    put_u32(buf, static_cast<std::uint32_t>(samples.size()));
    put_u16(buf, static_cast<std::uint16_t>(w));
    put_u16(buf, static_cast<std::uint16_t>(h));
    put_u16(buf, static_cast<std::uint16_t>(c));
    put_u16(buf, static_cast<std::uint16_t>(k));
    std::vector<std::uint8_t> px(static_cast<size_t>(w) * h * c);
    for (const Sample& s : samples) {
        put_u16(buf, s.label ? static_cast<std::uint16_t>(*s.label) : kUnlabeled);
        encode_pixels(s.image, px.data());
        buf.insert(buf.end(), px.begin(), px.end());
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<Sample> make_synthetic(const SyntheticSpec& spec) {
    Rng rng(derive_seed(spec.seed, 0xDA7A));
    std::vector<Sample> out;
    out.reserve(static_cast<size_t>(spec.n));
    const double half = (spec.side - 1) / 2.0;
    for (int idx = 0; idx < spec.n; ++idx) {
        const int label = idx % spec.num_classes;  // stratified by construction
        const double angle = 3.141592653589793 * label / spec.num_classes +
                             spec.angle_jitter * (2.0 * rng.uniform() - 1.0);
        const double nx = -std::sin(angle), ny = std::cos(angle);  // bar normal
        const double offset = (rng.uniform() - 0.5) * spec.side * 0.25;
        Sample s;
        s.label = label;
        s.image = Tensor::zeros({spec.side, spec.side, spec.channels});
        for (int i = 0; i < spec.side; ++i)
            for (int j = 0; j < spec.side; ++j) {
                const double d = (i - half) * nx + (j - half) * ny - offset;
                const double bar = std::abs(d) < spec.side / 8.0 ? 0.9 : -0.6;
                for (int c = 0; c < spec.channels; ++c) {
                    double v = bar + spec.noise * rng.normal();
                    s.image.data[static_cast<size_t>((i * spec.side + j) * spec.channels + c)] =
                        std::min(std::max(v, -1.0), 1.0);
                }
            }
        out.push_back(std::move(s));
    }
    return out;
}

SplitPools split(const std::vector<Sample>& pool, int n_labeled, int num_classes, std::uint64_t seed) {
    if (n_labeled > static_cast<int>(pool.size()))
        throw std::invalid_argument("split: n_labeled " + std::to_string(n_labeled) + " exceeds pool size " +
                                    std::to_string(pool.size()));
    std::vector<std::vector<int>> by_class(static_cast<size_t>(num_classes));
    for (size_t i = 0; i < pool.size(); ++i) {
        if (!pool[i].label) throw std::invalid_argument("split: pool contains unlabeled samples");
        by_class[static_cast<size_t>(*pool[i].label)].push_back(static_cast<int>(i));
    }
    Rng rng(derive_seed(seed, 0x5911));
    for (auto& v : by_class) rng.shuffle(v);

    // per-class quota: n/K each, remainder to the lowest class indices
    std::vector<int> quota(static_cast<size_t>(num_classes), n_labeled / num_classes);
    for (int c = 0; c < n_labeled % num_classes; ++c) quota[static_cast<size_t>(c)]++;
    std::vector<bool> take(pool.size(), false);
    for (int c = 0; c < num_classes; ++c) {
        if (quota[static_cast<size_t>(c)] > static_cast<int>(by_class[static_cast<size_t>(c)].size()))
            throw std::invalid_argument("split: class " + std::to_string(c) + " has only " +
                                        std::to_string(by_class[static_cast<size_t>(c)].size()) +
                                        " samples, needs " + std::to_string(quota[static_cast<size_t>(c)]));
        for (int t = 0; t < quota[static_cast<size_t>(c)]; ++t)
            take[static_cast<size_t>(by_class[static_cast<size_t>(c)][static_cast<size_t>(t)])] = true;
    }
    SplitPools pools;
    pools.seed = seed;
    for (size_t i = 0; i < pool.size(); ++i) {
        if (take[i]) {
            pools.labeled.push_back(pool[i]);
        } else {
            Sample s;
            s.image = pool[i].image;
            pools.unlabeled.push_back(std::move(s));
        }
    }
    return pools;
}

Sample default_augment(const Sample& s, bool flip_enabled, int max_shift, Rng& rng) {
    const int h = s.image.shape[0], w = s.image.shape[1], c = s.image.shape[2];
    const bool flip = flip_enabled && rng.bernoulli(0.5);
    const int si = static_cast<int>(rng.uniform_range(-max_shift, max_shift));
    const int sj = static_cast<int>(rng.uniform_range(-max_shift, max_shift));
    Sample out;
    out.label = s.label;
    out.image = Tensor::zeros(s.image.shape);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int src_i = i - si;
            const int src_j = j - sj;
            if (src_i < 0 || src_i >= h || src_j < 0 || src_j >= w) continue;
            const int from_j = flip ? w - 1 - src_j : src_j;
            for (int ch = 0; ch < c; ++ch)
                out.image.data[static_cast<size_t>((i * w + j) * c + ch)] =
                    s.image.data[static_cast<size_t>((src_i * w + from_j) * c + ch)];
        }
    return out;
}

MinibatchSampler::MinibatchSampler(const SplitPools& pools, bool flip_enabled, int max_shift,
                                   std::uint64_t seed)
    : pools_(pools), flip_enabled_(flip_enabled), max_shift_(max_shift), rng_(derive_seed(seed, 0xBA7C)) {
    if (pools.labeled.empty()) throw std::invalid_argument("MinibatchSampler: labeled pool is empty");
}

int MinibatchSampler::next_labeled_index() {
    if (labeled_pos_ >= labeled_order_.size()) {
        labeled_order_ = rng_.permutation(static_cast<int>(pools_.labeled.size()));
        labeled_pos_ = 0;
    }
    return labeled_order_[labeled_pos_++];
}

int MinibatchSampler::next_unlabeled_index() {
    const int total = static_cast<int>(pools_.labeled.size() + pools_.unlabeled.size());
    if (unlabeled_pos_ >= unlabeled_order_.size()) {
        unlabeled_order_ = rng_.permutation(total);
        unlabeled_pos_ = 0;
    }
    return unlabeled_order_[unlabeled_pos_++];
}

Minibatch MinibatchSampler::next(int m_labeled, int m_unlabeled) {
    Minibatch mb;
    mb.labeled.reserve(static_cast<size_t>(m_labeled));
    mb.unlabeled.reserve(static_cast<size_t>(m_unlabeled));
    for (int i = 0; i < m_labeled; ++i) {
        const Sample& src = pools_.labeled[static_cast<size_t>(next_labeled_index())];
        Sample aug = default_augment(src, flip_enabled_, max_shift_, rng_);
        mb.labeled.push_back({src.image, std::move(aug.image), *src.label});
    }
    const size_t n_l = pools_.labeled.size();
    for (int i = 0; i < m_unlabeled; ++i) {
        const int idx = next_unlabeled_index();
        const Sample& src = idx < static_cast<int>(n_l) ? pools_.labeled[static_cast<size_t>(idx)]
                                                        : pools_.unlabeled[static_cast<size_t>(idx) - n_l];
        Sample aug = default_augment(src, flip_enabled_, max_shift_, rng_);
        mb.unlabeled.push_back({src.image, std::move(aug.image)});
    }
    return mb;
}

Tensor stack_images(const std::vector<Tensor>& images) {
    if (images.empty()) throw std::invalid_argument("stack_images: empty batch");
    const Shape& s = images[0].shape;
    Shape out_shape = {static_cast<int>(images.size())};
    out_shape.insert(out_shape.end(), s.begin(), s.end());
    Tensor out = Tensor::zeros(out_shape);
    const size_t per = images[0].data.size();
    for (size_t n = 0; n < images.size(); ++n) {
        if (images[n].shape != s) throw std::invalid_argument("stack_images: inhomogeneous shapes");
        std::copy(images[n].data.begin(), images[n].data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(n * per));
    }
    return out;
}

}  // namespace mixgda
