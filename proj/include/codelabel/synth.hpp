#pragma once

// Synthetic source/target pairs with known class-specific temporal regimes.
//
// Every patch of length m is one emission of a shape primitive; within a
// (class, channel) the primitive sequence is a Markov chain with the class's
// regime matrix. The target domain can receive a per-channel affine amplitude
// shift, additive noise, a different class mix, and regimes blended toward
// uniform.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "codelabel/dataset.hpp"
#include "codelabel/matrix.hpp"
#include "codelabel/records.hpp"

namespace codelabel {

enum class Primitive { UpRamp, DownRamp, Flat, Sine, Peak, Valley };
inline constexpr std::size_t kMaxPrimitives = 6;

// Shape of a primitive over one patch, range roughly [-1, 1].
std::vector<double> primitive_shape(Primitive p, std::size_t patch_length, double sine_frequency);

struct ChannelShift {
    double scale = 1.0;
    double offset = 0.0;
};

struct SynthConfig {
    std::size_t n_classes = 4;
    std::size_t n_channels = 3;
    std::size_t length = 128;
    std::size_t patch_length = 8;
    std::size_t n_primitives = 4;
    double sine_frequency = 1.0;
    // K * D regime matrices (index k * D + d), each n_primitives square and
    // row-stochastic. Empty means "generate separable regimes".
    std::vector<Matrix> class_regimes;
    double regime_strength = 0.8;
    double base_noise = 0.1;                // both domains
    std::vector<ChannelShift> target_shift;  // per channel; empty = identity
    std::vector<double> target_noise;        // per channel std; empty = none
    double target_regime_mix = 0.0;          // blend of target regimes toward uniform
    std::vector<double> source_class_probs;  // empty = balanced round robin
    std::vector<double> target_class_probs;
    std::size_t n_source = 200;
    std::size_t n_target = 200;
    std::uint64_t seed = 0;

    // Throws Error(Usage) on an invalid configuration (non-stochastic regime,
    // T not divisible by m, negative magnitudes, ...).
    void validate() const;
};

struct SynthOutput {
    DomainDataset source;
    DomainDataset target;             // unlabeled
    std::vector<std::size_t> target_truth;  // sealed labels, same order as target
};

// For each channel, a random Latin square of successor maps (classes beyond
// n_primitives get further distinct random permutations); the successor
// gets `strength`, the rest is spread evenly.
std::vector<Matrix> separable_regimes(std::size_t n_classes, std::size_t n_channels, std::size_t n_primitives,
                                      double strength, std::uint64_t seed);

SynthOutput generate(const SynthConfig& config);

// Copy of `dataset` with N(0, magnitude^2) noise added to one channel. A fixed
// seed draws the same unit noise at every magnitude, so a sweep over
// magnitudes differs only in scale.
DomainDataset inject_channel_noise(const DomainDataset& dataset, std::size_t channel, double magnitude,
                                   std::uint64_t seed);

records::json synth_config_to_json(const SynthConfig& config);
// Missing keys keep their defaults.
SynthConfig synth_config_from_json(const records::json& j);

records::Document truth_to_document(const DomainDataset& target, const std::vector<std::size_t>& truth,
                                    const records::json& extra_meta = records::json::object());

}  // namespace codelabel
