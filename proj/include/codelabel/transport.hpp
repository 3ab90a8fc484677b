#pragma once

// Exact optimal transport between transition rows and the channel alignment
// weights derived from it.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "codelabel/markov.hpp"
#include "codelabel/matrix.hpp"
#include "codelabel/rvq.hpp"

namespace codelabel {

struct CostMatrix {
    Matrix costs;

    std::size_t rows() const noexcept { return costs.rows(); }
    std::size_t cols() const noexcept { return costs.cols(); }
    double operator()(std::size_t i, std::size_t j) const { return costs(i, j); }
};

// costs(i, j) = 1 - cos(e_i, e_j), clamped to [0, 2], zero diagonal.
// Throws Error(Data) on a zero-norm code vector.
CostMatrix cosine_cost(const Codebook& coarse);

struct TransportPlan {
    Matrix plan;
    double cost = 0.0;
    std::size_t pivots = 0;
    double min_reduced_cost = 0.0;  // >= -tolerance certifies optimality
};

// Solves min <plan, M> subject to plan 1 = p, plan^T 1 = q, plan >= 0 with the
// transportation simplex: north-west-corner start, stepping-stone pivots,
// Bland's rule for entering and leaving cells. Marginals are perturbed
// internally (supplies + delta, last demand + m * delta) so every basis is
// non-degenerate; the reported plan is re-solved on the optimal basis with the
// unperturbed marginals. Throws Error(Data) when p or q has a negative entry or
// does not sum to 1 within 1e-9.
TransportPlan solve_emd(std::span<const double> p, std::span<const double> q, const CostMatrix& M);

struct ChannelWeights {
    std::vector<double> w;          // per channel, in (0, 1]
    std::vector<double> mean_cost;  // per channel mean of the n_c row transport costs
    double sigma = 0.2;
};

inline constexpr double kDefaultSigma = 0.2;

// exp(-(mean_cost / sigma)^2), floored at the smallest normal double so the
// weight stays positive.
double alignment_score(double mean_cost, double sigma);

// For every channel d and code i, transports source row i into target row i of
// channel d and averages the n_c costs. Channels are solved in parallel on up
// to `threads` workers; results do not depend on the thread count.
ChannelWeights channel_weights(const ChannelTM& source, const ChannelTM& target, const CostMatrix& M, double sigma,
                               unsigned threads = 1);

ChannelWeights uniform_channel_weights(std::size_t n_channels, double sigma);

// Tab-separated report: channel, mean transport cost, weight, rank (0 = lowest
// weight). Lines starting with '#' carry provenance.
std::string alignment_report(const ChannelWeights& weights, const std::string& provenance = {});

}  // namespace codelabel
