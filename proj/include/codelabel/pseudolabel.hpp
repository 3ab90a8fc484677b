#pragma once

// Channel-weighted Bayesian pseudo-labels for unlabeled target instances.

#include <cstddef>
#include <span>
#include <vector>

#include "codelabel/dataset.hpp"
#include "codelabel/markov.hpp"
#include "codelabel/matrix.hpp"
#include "codelabel/records.hpp"
#include "codelabel/rvq.hpp"
#include "codelabel/transport.hpp"

namespace codelabel {

inline constexpr double kPriorFloor = 1e-12;

// Class prior p(k) with temperature tau; enters posteriors as ln p(k) / tau.
class LabelPrior {
public:
    static LabelPrior uniform(std::size_t n_classes, double tau = 1.0);
    // Entries below 1e-12 are raised to 1e-12 and the vector renormalised.
    // Throws Error(Usage) if the input is not a distribution within 1e-6 or
    // tau is not positive.
    static LabelPrior from_probs(std::vector<double> probs, double tau = 1.0);

    std::size_t size() const noexcept { return probs_.size(); }
    const std::vector<double>& probs() const noexcept { return probs_; }
    double tau() const noexcept { return tau_; }
    double log_weight(std::size_t k) const { return log_probs_[k] / tau_; }

private:
    LabelPrior(std::vector<double> probs, double tau);

    std::vector<double> probs_;
    std::vector<double> log_probs_;
    double tau_ = 1.0;
};

// posterior_k proportional to exp(loglik_k + ln p(k) / tau), normalised with
// log-sum-exp.
std::vector<double> channel_posterior(std::span<const double> logliks, const LabelPrior& prior);

struct PseudoLabel {
    std::vector<double> scores;      // (1/D) sum_d w_d posterior[d][k]
    std::size_t label = 0;           // argmax of scores, ties to the lowest index
    double confidence = 0.0;         // max score
    Matrix per_channel_posteriors;   // D x K
};

PseudoLabel aggregate(const Matrix& posteriors, std::span<const double> weights);

struct LabelOptions {
    LikelihoodNorm norm = LikelihoodNorm::SequenceLength;
    unsigned threads = 1;
};

// Labels one encoded instance against a smoothed class model.
PseudoLabel label_codes(const CodeGrid& codes, const ClassChannelTM& smoothed_model, const ChannelWeights& weights,
                        const LabelPrior& prior, LikelihoodNorm norm = LikelihoodNorm::SequenceLength);

// patchify -> embed -> encode -> per-(channel, class) log-likelihood ->
// channel posteriors -> weighted aggregate, for every target instance in
// order. The model must be smoothed (strictly positive). Labels stored on the
// target instances are never read.
std::vector<PseudoLabel> label_dataset(const DomainDataset& target, const ResidualQuantizer& q,
                                       const ClassChannelTM& smoothed_model, const ChannelWeights& weights,
                                       const LabelPrior& prior, std::size_t patch_length,
                                       const LabelOptions& options = {});

// Indices of the ceil(r_top * n) most confident labels, most confident first
// (ties to the lower index). With batch_size > 0 the selection is made inside
// each consecutive batch instead, and batches are concatenated in order.
std::vector<std::size_t> top_r_select(std::span<const PseudoLabel> labels, double r_top, std::size_t batch_size = 0);

records::json pseudo_label_json(const std::string& id, const PseudoLabel& label, std::span<const double> weights);

}  // namespace codelabel
