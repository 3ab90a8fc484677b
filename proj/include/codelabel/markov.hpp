#pragma once

// First-order Markov transition matrices over coarse code sequences.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "codelabel/matrix.hpp"
#include "codelabel/records.hpp"
#include "codelabel/rvq.hpp"

namespace codelabel {

inline constexpr double kDefaultSmoothing = 1e-8;

class TransitionMatrix {
public:
    TransitionMatrix() = default;
    explicit TransitionMatrix(Matrix probs);

    static TransitionMatrix uniform(std::size_t n);

    std::size_t size() const noexcept { return probs_.rows(); }
    double operator()(std::size_t from, std::size_t to) const { return probs_(from, to); }
    std::span<const double> row(std::size_t from) const { return probs_.row(from); }
    const Matrix& probs() const noexcept { return probs_; }

    // Largest |row sum - 1|.
    double max_row_error() const;
    bool strictly_positive() const;

    friend bool operator==(const TransitionMatrix&, const TransitionMatrix&) = default;

private:
    Matrix probs_;
};

// Raw transition counts; additive across sequences.
class TransitionCounts {
public:
    explicit TransitionCounts(std::size_t n_states) : n_(n_states), counts_(n_states * n_states, 0) {}

    std::size_t size() const noexcept { return n_; }
    std::uint64_t operator()(std::size_t from, std::size_t to) const { return counts_[from * n_ + to]; }
    std::uint64_t departures(std::size_t from) const;

    // Throws Error(Data) on an index >= n or a sequence shorter than 2.
    void add_sequence(std::span<const CodeIndex> sequence);
    TransitionCounts& operator+=(const TransitionCounts& other);

    // count(i->j) / count(i departing); rows never departed are uniform.
    TransitionMatrix to_matrix() const;

    friend bool operator==(const TransitionCounts&, const TransitionCounts&) = default;

private:
    std::size_t n_;
    std::vector<std::uint64_t> counts_;
};

TransitionMatrix estimate_tm(std::span<const std::span<const CodeIndex>> sequences, std::size_t n_states);
TransitionMatrix estimate_tm(const std::vector<std::vector<CodeIndex>>& sequences, std::size_t n_states);

// (p + eps) / (row_sum + n * eps), strictly positive and row-stochastic.
TransitionMatrix smooth(const TransitionMatrix& tm, double epsilon = kDefaultSmoothing);

// K x D transition matrices built from labeled source code grids.
struct ClassChannelTM {
    std::size_t n_classes = 0;
    std::size_t n_channels = 0;
    std::size_t n_states = 0;
    std::vector<TransitionMatrix> tms;       // index k * D + d
    std::vector<std::size_t> empty_classes;  // classes with no instances (uniform fallback)

    const TransitionMatrix& at(std::size_t k, std::size_t d) const { return tms[k * n_channels + d]; }
};

// One transition matrix per channel, class labels ignored.
struct ChannelTM {
    std::size_t n_channels = 0;
    std::size_t n_states = 0;
    std::vector<TransitionMatrix> tms;

    const TransitionMatrix& at(std::size_t d) const { return tms[d]; }
};

ClassChannelTM build_class_tm(std::span<const CodeGrid> codes, std::span<const std::size_t> labels,
                              std::size_t n_classes, std::size_t n_channels, std::size_t n_states);
ChannelTM build_channel_tm(std::span<const CodeGrid> codes, std::size_t n_channels, std::size_t n_states);

ClassChannelTM smooth(const ClassChannelTM& model, double epsilon = kDefaultSmoothing);
ChannelTM smooth(const ChannelTM& model, double epsilon = kDefaultSmoothing);

enum class LikelihoodNorm {
    SequenceLength,   // 1/N over the N-1 transitions
    TransitionCount,  // 1/(N-1)
};

// Normalized log-likelihood of a coarse sequence under `tm`. Throws
// Error(Data) if the sequence visits a zero-probability transition (smooth
// the matrix first) and Error(Usage) for sequences shorter than 2.
double log_likelihood(std::span<const CodeIndex> sequence, const TransitionMatrix& tm,
                      LikelihoodNorm norm = LikelihoodNorm::SequenceLength);

// Persisted transition model. Matrices are stored unsmoothed; epsilon is the
// smoothing applied before any likelihood or transport computation.
struct TransitionBundle {
    ClassChannelTM class_tms;
    ChannelTM source_channel_tms;
    std::optional<ChannelTM> target_channel_tms;
    double epsilon = kDefaultSmoothing;
};

records::Document transitions_to_document(const TransitionBundle& bundle,
                                          const records::json& extra_meta = records::json::object());
TransitionBundle transitions_from_document(const records::Document& doc);

}  // namespace codelabel
