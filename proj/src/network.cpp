#include "mixgda/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mixgda {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnUpdateWeight = 0.1;  // ema = 0.9*ema + 0.1*batch

Tensor init_weights(Shape shape, double stddev, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = stddev * rng.normal();
    return t;
}

}  // namespace

std::vector<LayerSpec> make_layers(const NetworkConfig& cfg) {
    std::vector<LayerSpec> L;
    auto conv = [&](int filters, int kernel, int pad) {
        LayerSpec s;
        s.kind = LayerSpec::Kind::conv;
        s.filters = filters;
        s.kernel = kernel;
        s.pad = pad;
        s.weight_norm = cfg.weight_norm;
        L.push_back(s);
    };
    auto pool = [&](double rate) {
        LayerSpec s;
        s.kind = LayerSpec::Kind::pool_dropout;
        s.dropout = rate;
        L.push_back(s);
    };
    switch (cfg.arch) {
        case Arch::table6:
            conv(128, 3, 1);
            conv(128, 3, 1);
            conv(128, 3, 1);
            pool(0.5);
            conv(256, 3, 1);
            conv(256, 3, 1);
            conv(256, 3, 1);
            pool(0.5);
            conv(512, 3, 0);  // valid padding: 8x8 -> 6x6
            conv(256, 1, 0);
            conv(128, 1, 0);
            break;
        case Arch::tiny:
            conv(16, 3, 1);
            pool(0.0);
            conv(32, 3, 1);
            break;
        default:
            throw std::invalid_argument("make_layers: unknown architecture");
    }
    LayerSpec gap;
    gap.kind = LayerSpec::Kind::global_avg_pool;
    L.push_back(gap);
    LayerSpec head;
    head.kind = LayerSpec::Kind::dense;
    head.filters = cfg.num_classes;
    head.weight_norm = cfg.weight_norm;
    head.batch_norm = cfg.final_bn;
    L.push_back(head);
    return L;
}

NetworkState NetworkState::build(const NetworkConfig& cfg, std::uint64_t init_seed) {
    NetworkState net;
    net.cfg_ = cfg;
    net.layers_ = make_layers(cfg);
    net.params_.resize(net.layers_.size());
    Rng rng(derive_seed(init_seed, 0x1417));

    int channels = cfg.image_channels;
    for (size_t li = 0; li < net.layers_.size(); ++li) {
        const LayerSpec& spec = net.layers_[li];
        LayerParams& p = net.params_[li];
        if (spec.kind == LayerSpec::Kind::conv) {
            const int fan_in = spec.kernel * spec.kernel * channels;
            const double stddev = std::sqrt(2.0 / (fan_in * (1.0 + spec.slope * spec.slope)));
            p.w = init_weights({spec.filters, spec.kernel, spec.kernel, channels}, stddev, rng);
            if (spec.weight_norm) {
                p.s = Tensor::zeros({spec.filters});
                const std::int64_t stride = p.w.numel() / spec.filters;
                for (int f = 0; f < spec.filters; ++f) {
                    double nrm = 0.0;
                    for (std::int64_t i = 0; i < stride; ++i) {
                        double v = p.w.data[static_cast<size_t>(f * stride + i)];
                        nrm += v * v;
                    }
                    p.s.data[static_cast<size_t>(f)] = std::sqrt(nrm);
                }
            }
            p.gamma = Tensor::full({spec.filters}, 1.0);
            p.beta = Tensor::zeros({spec.filters});
            p.bn = BatchNormStats::identity(spec.filters);
            p.has_bn = true;
            channels = spec.filters;
        } else if (spec.kind == LayerSpec::Kind::dense) {
            const double stddev = std::sqrt(1.0 / channels);
            p.w = init_weights({spec.filters, channels}, stddev, rng);
            p.b = Tensor::zeros({spec.filters});
            if (spec.weight_norm) {
                p.s = Tensor::zeros({spec.filters});
                for (int f = 0; f < spec.filters; ++f) {
                    double nrm = 0.0;
                    for (int i = 0; i < channels; ++i) {
                        double v = p.w.at2(f, i);
                        nrm += v * v;
                    }
                    p.s.data[static_cast<size_t>(f)] = std::sqrt(nrm);
                }
            }
            if (spec.batch_norm) {
                p.gamma = Tensor::full({spec.filters}, 1.0);
                p.beta = Tensor::zeros({spec.filters});
                p.bn = BatchNormStats::identity(spec.filters);
                p.has_bn = true;
            }
            channels = spec.filters;
        }
    }
    return net;
}

std::vector<Tensor*> NetworkState::param_list() {
    std::vector<Tensor*> out;
    for (LayerParams& p : params_) {
        if (p.w.numel() > 0) out.push_back(&p.w);
        if (p.s.numel() > 0) out.push_back(&p.s);
        if (p.b.numel() > 0) out.push_back(&p.b);
        if (p.has_bn) {
            out.push_back(&p.gamma);
            out.push_back(&p.beta);
        }
    }
    return out;
}

std::vector<const Tensor*> NetworkState::param_list() const {
    auto mut = const_cast<NetworkState*>(this)->param_list();
    return {mut.begin(), mut.end()};
}

std::int64_t NetworkState::theta_size() const {
    std::int64_t n = 0;
    for (const Tensor* t : param_list()) n += t->numel();
    return n;
}

std::vector<double> NetworkState::snapshot() const {
    std::vector<double> theta;
    theta.reserve(static_cast<size_t>(theta_size()));
    for (const Tensor* t : param_list()) theta.insert(theta.end(), t->data.begin(), t->data.end());
    return theta;
}

void NetworkState::load(std::span<const double> theta) {
    if (static_cast<std::int64_t>(theta.size()) != theta_size())
        throw std::invalid_argument("load: theta length " + std::to_string(theta.size()) + " does not match " +
                                    std::to_string(theta_size()));
    size_t off = 0;
    for (Tensor* t : param_list()) {
        std::copy(theta.begin() + static_cast<std::ptrdiff_t>(off),
                  theta.begin() + static_cast<std::ptrdiff_t>(off + t->data.size()), t->data.begin());
        off += t->data.size();
    }
}

BoundNet::BoundNet(Graph& g, NetworkState& net, bool params_require_grad) : graph_(&g), net_(&net) {
    for (Tensor* t : net.param_list()) param_nodes_.push_back(g.leaf(*t, params_require_grad));
}

ForwardOut BoundNet::run(const Tensor& images, const ForwardOptions& opts) {
    return run(graph_->constant(images), opts);
}

ForwardOut BoundNet::run(NodeId images, const ForwardOptions& opts) {
    Graph& g = *graph_;
    NodeId x = images;
    size_t pi = 0;  // cursor over param_nodes_, same order as param_list()
    for (size_t li = 0; li < net_->layers_.size(); ++li) {
        const LayerSpec& spec = net_->layers_[li];
        LayerParams& p = net_->params_[li];
        switch (spec.kind) {
            case LayerSpec::Kind::conv: {
                NodeId w = param_nodes_[pi++];
                if (spec.weight_norm) {
                    NodeId s = param_nodes_[pi++];
                    w = g.weight_norm(w, s);
                }
                x = g.conv2d(x, w, kNoNode, spec.pad);
                NodeId gamma = param_nodes_[pi++];
                NodeId beta = param_nodes_[pi++];
                x = g.batch_norm(x, gamma, beta, &p.bn, opts.use_batch_stats, opts.update_running,
                                 kBnEps, kBnUpdateWeight);
                x = g.leaky_relu(x, spec.slope);
                break;
            }
            case LayerSpec::Kind::pool_dropout: {
                x = g.max_pool2x2(x);
                if (spec.dropout > 0.0 && opts.dropout_enabled) {
                    x = g.dropout(x, spec.dropout,
                                  derive_seed(opts.dropout_seed, 0xD0 + static_cast<std::uint64_t>(dropout_instance_++)));
                }
                break;
            }
            case LayerSpec::Kind::global_avg_pool:
                x = g.global_avg_pool(x);
                break;
            case LayerSpec::Kind::dense: {
                NodeId w = param_nodes_[pi++];
                if (spec.weight_norm) {
                    NodeId s = param_nodes_[pi++];
                    w = g.weight_norm(w, s);
                }
                NodeId b = param_nodes_[pi++];
                x = g.dense(x, w, b);
                if (spec.batch_norm) {
                    NodeId gamma = param_nodes_[pi++];
                    NodeId beta = param_nodes_[pi++];
                    x = g.batch_norm(x, gamma, beta, &p.bn, opts.use_batch_stats, opts.update_running,
                                     kBnEps, kBnUpdateWeight);
                }
                break;
            }
        }
    }
    ForwardOut out;
    out.logits = x;
    out.probs = g.softmax(x);
    return out;
}

std::vector<double> BoundNet::theta_grad() const {
    std::vector<double> grad;
    grad.reserve(static_cast<size_t>(net_->theta_size()));
    for (NodeId id : param_nodes_) {
        const Tensor* g = graph_->grad(id);
        if (g) {
            grad.insert(grad.end(), g->data.begin(), g->data.end());
        } else {
            grad.insert(grad.end(), graph_->value(id).data.size(), 0.0);
        }
    }
    return grad;
}

Tensor NetworkState::forward_probs(const Tensor& images) {
    Graph g;
    BoundNet bound(g, *this, false);
    ForwardOptions opts;
    opts.use_batch_stats = false;
    ForwardOut out = bound.run(images, opts);
    return g.value(out.probs);
}

double NetworkState::evaluate(const std::vector<Sample>& test_set, int batch) {
    if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
    std::int64_t wrong = 0;
    for (size_t start = 0; start < test_set.size(); start += static_cast<size_t>(batch)) {
        const size_t end = std::min(test_set.size(), start + static_cast<size_t>(batch));
        std::vector<Tensor> imgs;
        imgs.reserve(end - start);
        for (size_t i = start; i < end; ++i) imgs.push_back(test_set[i].image);
        Tensor probs = forward_probs(stack_images(imgs));
        const int k = probs.shape[1];
        for (size_t i = start; i < end; ++i) {
            const double* row = probs.data.data() + (i - start) * static_cast<size_t>(k);
            int arg = 0;
            for (int j = 1; j < k; ++j)
                if (row[j] > row[arg]) arg = j;
            if (!test_set[i].label) throw std::invalid_argument("evaluate: unlabeled sample in test set");
            if (arg != *test_set[i].label) ++wrong;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(test_set.size());
}

void NetworkState::recalibrate_bn(const std::vector<Sample>& labeled, Rng& rng, int passes, int batch) {
    if (labeled.empty()) throw std::invalid_argument("recalibrate_bn: empty labeled pool");
    const bool with_replacement = static_cast<int>(labeled.size()) < batch;
    ForwardOptions opts;
    opts.use_batch_stats = true;
    opts.update_running = true;
    for (int pass = 0; pass < passes; ++pass) {
        std::vector<Tensor> imgs;
        imgs.reserve(static_cast<size_t>(batch));
        if (with_replacement) {
            for (int i = 0; i < batch; ++i)
                imgs.push_back(labeled[static_cast<size_t>(rng.uniform_int(labeled.size()))].image);
        } else {
            std::vector<int> order = rng.permutation(static_cast<int>(labeled.size()));
            for (int i = 0; i < batch; ++i) imgs.push_back(labeled[static_cast<size_t>(order[static_cast<size_t>(i)])].image);
        }
        Graph g;
        BoundNet bound(g, *this, false);
        bound.run(stack_images(imgs), opts);
    }
}

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ofstream& f, std::uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
std::uint32_t get_u32(std::ifstream& f) {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
std::uint64_t get_u64(std::ifstream& f) {
    std::uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

}  // namespace

void NetworkState::save_checkpoint(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write("MXGW", 4);
    put_u32(f, 1);  // version
    put_u32(f, static_cast<std::uint32_t>(cfg_.arch));
    put_u32(f, static_cast<std::uint32_t>(cfg_.num_classes));
    put_u32(f, static_cast<std::uint32_t>(cfg_.image_side));
    put_u32(f, static_cast<std::uint32_t>(cfg_.image_channels));
    put_u32(f, (cfg_.weight_norm ? 1u : 0u) | (cfg_.final_bn ? 2u : 0u));
    const std::vector<double> theta = snapshot();
    put_u64(f, theta.size());
    f.write(reinterpret_cast<const char*>(theta.data()), static_cast<std::streamsize>(theta.size() * 8));
    std::uint32_t n_bn = 0;
    for (const LayerParams& p : params_)
        if (p.has_bn) ++n_bn;
    put_u32(f, n_bn);
    for (const LayerParams& p : params_) {
        if (!p.has_bn) continue;
        put_u32(f, static_cast<std::uint32_t>(p.bn.mean.size()));
        f.write(reinterpret_cast<const char*>(p.bn.mean.data()), static_cast<std::streamsize>(p.bn.mean.size() * 8));
        f.write(reinterpret_cast<const char*>(p.bn.stddev.data()),
                static_cast<std::streamsize>(p.bn.stddev.size() * 8));
    }
    if (!f) throw std::runtime_error("write failed on " + path);
}

NetworkState NetworkState::load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "MXGW", 4) != 0) throw std::runtime_error(path + ": not a MXGW checkpoint");
    const std::uint32_t version = get_u32(f);
    if (version != 1) throw std::runtime_error(path + ": unsupported checkpoint version");
    NetworkConfig cfg;
    cfg.arch = static_cast<Arch>(get_u32(f));
    cfg.num_classes = static_cast<int>(get_u32(f));
    cfg.image_side = static_cast<int>(get_u32(f));
    cfg.image_channels = static_cast<int>(get_u32(f));
    const std::uint32_t flags = get_u32(f);
    cfg.weight_norm = (flags & 1u) != 0;
    cfg.final_bn = (flags & 2u) != 0;
    NetworkState net = build(cfg, 0);
    const std::uint64_t len = get_u64(f);
    if (static_cast<std::int64_t>(len) != net.theta_size())
        throw std::runtime_error(path + ": theta length mismatch");
    std::vector<double> theta(len);
    f.read(reinterpret_cast<char*>(theta.data()), static_cast<std::streamsize>(len * 8));
    net.load(theta);
    const std::uint32_t n_bn = get_u32(f);
    std::uint32_t seen = 0;
    for (LayerParams& p : net.params_) {
        if (!p.has_bn) continue;
        if (seen++ >= n_bn) throw std::runtime_error(path + ": missing BN statistics");
        const std::uint32_t c = get_u32(f);
        if (c != p.bn.mean.size()) throw std::runtime_error(path + ": BN channel mismatch");
        f.read(reinterpret_cast<char*>(p.bn.mean.data()), static_cast<std::streamsize>(c * 8));
        f.read(reinterpret_cast<char*>(p.bn.stddev.data()), static_cast<std::streamsize>(c * 8));
    }
    if (!f) throw std::runtime_error(path + ": truncated checkpoint");
    net.set_mode(NetMode::eval);
    return net;
}

}  // namespace mixgda
