#include "codelabel/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "codelabel/error.hpp"
#include "codelabel/parallel.hpp"

namespace codelabel {

using records::json;

LabelPrior::LabelPrior(std::vector<double> probs, double tau) : probs_(std::move(probs)), tau_(tau) {
    log_probs_.reserve(probs_.size());
    for (double p : probs_) log_probs_.push_back(std::log(p));
}

LabelPrior LabelPrior::uniform(std::size_t n_classes, double tau) {
    if (n_classes == 0) fail_usage("prior needs at least one class");
    return from_probs(std::vector<double>(n_classes, 1.0 / static_cast<double>(n_classes)), tau);
}

LabelPrior LabelPrior::from_probs(std::vector<double> probs, double tau) {
    if (!(tau > 0.0)) fail_usage("prior temperature tau must be positive");
    if (probs.empty()) fail_usage("prior needs at least one class");
    double sum = 0.0;
    for (double p : probs) {
        if (!std::isfinite(p) || p < 0.0) fail_usage("prior entries must be finite and non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) fail_usage("prior must sum to 1 (got " + std::to_string(sum) + ")");
    for (double& p : probs) p = std::max(p, kPriorFloor);
    sum = std::accumulate(probs.begin(), probs.end(), 0.0);
    for (double& p : probs) p /= sum;
    return LabelPrior(std::move(probs), tau);
}

std::vector<double> channel_posterior(std::span<const double> logliks, const LabelPrior& prior) {
    if (logliks.size() != prior.size()) fail_data("channel_posterior: class count mismatch");
    std::vector<double> post(logliks.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < post.size(); ++k) {
        if (!std::isfinite(logliks[k])) fail_data("channel_posterior: non-finite log-likelihood");
        post[k] = logliks[k] + prior.log_weight(k);
        top = std::max(top, post[k]);
    }
    double total = 0.0;
    for (double& v : post) {
        v = std::exp(v - top);
        total += v;
    }
    for (double& v : post) v /= total;
    return post;
}

PseudoLabel aggregate(const Matrix& posteriors, std::span<const double> weights) {
    if (posteriors.rows() != weights.size()) fail_data("aggregate: posterior rows and channel weights differ");
    if (posteriors.rows() == 0 || posteriors.cols() == 0) fail_data("aggregate: empty posterior matrix");
    const std::size_t D = posteriors.rows(), K = posteriors.cols();
    PseudoLabel out;
    out.scores.assign(K, 0.0);
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t k = 0; k < K; ++k) out.scores[k] += weights[d] * posteriors(d, k);
    for (double& s : out.scores) s /= static_cast<double>(D);
    out.label = static_cast<std::size_t>(std::max_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
    out.confidence = out.scores[out.label];
    out.per_channel_posteriors = posteriors;
    return out;
}

PseudoLabel label_codes(const CodeGrid& codes, const ClassChannelTM& smoothed_model, const ChannelWeights& weights,
                        const LabelPrior& prior, LikelihoodNorm norm) {
    const std::size_t D = smoothed_model.n_channels, K = smoothed_model.n_classes;
    if (codes.n_channels != D) fail_data("label_codes: instance has " + std::to_string(codes.n_channels) +
                                         " channels, model has " + std::to_string(D));
    if (weights.w.size() != D) fail_data("label_codes: channel weight count mismatch");
    if (prior.size() != K) fail_data("label_codes: prior has " + std::to_string(prior.size()) + " classes, model has " +
                                     std::to_string(K));
    Matrix posteriors(D, K);
    std::vector<double> logliks(K);
    for (std::size_t d = 0; d < D; ++d) {
        const auto seq = codes.coarse_channel(d);
        for (std::size_t k = 0; k < K; ++k) logliks[k] = log_likelihood(seq, smoothed_model.at(k, d), norm);
        const auto post = channel_posterior(logliks, prior);
        std::copy(post.begin(), post.end(), posteriors.row(d).begin());
    }
    return aggregate(posteriors, weights.w);
}

std::vector<PseudoLabel> label_dataset(const DomainDataset& target, const ResidualQuantizer& q,
                                       const ClassChannelTM& smoothed_model, const ChannelWeights& weights,
                                       const LabelPrior& prior, std::size_t patch_length, const LabelOptions& options) {
    if (target.role != DomainRole::Target) fail_usage("label_dataset expects a target-role dataset");
    if (patch_length != q.patch_length())
        fail_data("patch length " + std::to_string(patch_length) + " does not match the quantizer's " +
                  std::to_string(q.patch_length()));
    if (smoothed_model.n_states != q.n_coarse()) fail_data("transition model and quantizer disagree on n_c");
    if (target.n_channels != smoothed_model.n_channels)
        fail_data("target has " + std::to_string(target.n_channels) + " channels, model has " +
                  std::to_string(smoothed_model.n_channels));
    std::vector<PseudoLabel> out(target.size());
    parallel_for(target.size(), options.threads, [&](std::size_t i) {
        out[i] = label_codes(q.encode_instance(target.instances[i]), smoothed_model, weights, prior, options.norm);
    });
    return out;
}

std::vector<std::size_t> top_r_select(std::span<const PseudoLabel> labels, double r_top, std::size_t batch_size) {
    if (labels.empty()) fail_data("top_r_select: no labels");
    if (!(r_top > 0.0 && r_top <= 1.0)) fail_usage("r_top must lie in (0, 1]");
    const std::size_t n = labels.size();
    const std::size_t batch = batch_size == 0 ? n : batch_size;
    std::vector<std::size_t> selected;
    for (std::size_t begin = 0; begin < n; begin += batch) {
        const std::size_t end = std::min(n, begin + batch);
        std::vector<std::size_t> idx(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return labels[a].confidence > labels[b].confidence; });
        const double want = std::ceil(r_top * static_cast<double>(idx.size()) - 1e-9);
        const auto keep = std::min(idx.size(), static_cast<std::size_t>(std::max(1.0, want)));
        selected.insert(selected.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    return selected;
}

json pseudo_label_json(const std::string& id, const PseudoLabel& label, std::span<const double> weights) {
    json posts = json::array();
    for (std::size_t d = 0; d < label.per_channel_posteriors.rows(); ++d) {
        auto r = label.per_channel_posteriors.row(d);
        posts.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"id", id},
            {"label", label.label},
            {"confidence", label.confidence},
            {"scores", label.scores},
            {"per_channel_posteriors", std::move(posts)},
            {"channel_weights", std::vector<double>(weights.begin(), weights.end())}};
}

}  // namespace codelabel
