#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixgda/rng.hpp"
#include "mixgda/tensor.hpp"

namespace mixgda {

inline constexpr std::uint16_t kUnlabeled = 0xFFFF;

/// One image with pixels in [-1,1], stored {H,W,C}.
struct Sample {
    Tensor image;
    std::optional<int> label;
};

enum class CifarVariant { cifar10, cifar100 };

/// CIFAR binary records: 1 label byte (cifar100: coarse byte then fine byte)
/// followed by 3072 channel-major pixel bytes. Pixels map by p/127.5 - 1.
std::vector<Sample> load_cifar_binary(const std::string& path, CifarVariant variant);

/// Raw container: little-endian header {"MXGD", u32 count, u16 w, u16 h,
/// u16 c, u16 K}, then per record a u16 label (0xFFFF = unlabeled) and
/// w*h*c channel-major pixel bytes.
struct RawDataset {
    std::vector<Sample> samples;
    int width = 0, height = 0, channels = 0, num_classes = 0;
};
RawDataset load_raw(const std::string& path);
void save_raw(const std::string& path, const std::vector<Sample>& samples, int w, int h, int c, int k);

struct SyntheticSpec {
    int n = 0;
    int num_classes = 2;
    int side = 32;
    int channels = 3;
    double noise = 0.35;
    double angle_jitter = 0.2;  // radians, per-sample orientation wobble
    std::uint64_t seed = 0;
};
/// Deterministic class-separable images: class-dependent oriented bars plus
/// seeded Gaussian noise, clamped to [-1,1]. Labels stratified round-robin.
std::vector<Sample> make_synthetic(const SyntheticSpec& spec);

struct SplitPools {
    std::vector<Sample> labeled;    // D_L
    std::vector<Sample> unlabeled;  // D_UL, labels stripped
    std::uint64_t seed = 0;
};

/// Class-stratified selection of n_labeled samples; the remainder becomes the
/// unlabeled pool with labels removed.
SplitPools split(const std::vector<Sample>& pool, int n_labeled, int num_classes, std::uint64_t seed);

/// Optional horizontal flip (p = 0.5 when enabled) followed by per-axis
/// integer translation uniform in [-max_shift, max_shift], zero padded.
Sample default_augment(const Sample& s, bool flip_enabled, int max_shift, Rng& rng);

struct LabeledDraw {
    Tensor original;   // x^(org)
    Tensor augmented;  // x
    int label = 0;
};
struct UnlabeledDraw {
    Tensor original;
    Tensor augmented;
};
struct Minibatch {
    std::vector<LabeledDraw> labeled;
    std::vector<UnlabeledDraw> unlabeled;
};

/// Epoch-cycling sampler: labeled stream shuffles D_L, unlabeled stream
/// shuffles D_L union D_UL; both reshuffle when exhausted.
class MinibatchSampler {
public:
    MinibatchSampler(const SplitPools& pools, bool flip_enabled, int max_shift, std::uint64_t seed);

    Minibatch next(int m_labeled, int m_unlabeled);

private:
    int next_labeled_index();
    int next_unlabeled_index();

    const SplitPools& pools_;
    bool flip_enabled_;
    int max_shift_;
    Rng rng_;
    std::vector<int> labeled_order_, unlabeled_order_;
    size_t labeled_pos_ = 0, unlabeled_pos_ = 0;
};

/// Stacks images into one {N,H,W,C} tensor.
Tensor stack_images(const std::vector<Tensor>& images);

}  // namespace mixgda
