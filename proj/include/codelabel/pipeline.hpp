#pragma once

// End-to-end orchestration: fit on a labeled source corpus, label a target
// corpus, evaluate against sealed truth, and generate synthetic corpora.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "codelabel/dataset.hpp"
#include "codelabel/diagnostics.hpp"
#include "codelabel/markov.hpp"
#include "codelabel/pseudolabel.hpp"
#include "codelabel/records.hpp"
#include "codelabel/rvq.hpp"
#include "codelabel/synth.hpp"
#include "codelabel/transport.hpp"

namespace codelabel {

struct RunConfig {
    std::size_t patch_length = 8;
    std::size_t n_coarse = 8;
    std::size_t n_fine = 64;
    EmbedMode embed_mode = EmbedMode::ZNorm;
    std::size_t d_dim = 0;
    double epsilon = kDefaultSmoothing;
    double sigma = kDefaultSigma;
    double tau = 1.0;
    double r_top = 0.5;
    bool use_ca = true;
    std::optional<std::vector<double>> prior;  // nullopt = uniform
    std::size_t max_iters = 300;
    std::uint64_t seed = 0;
    std::size_t batch_size = 0;  // top-r selection batch; 0 = whole dataset
    LikelihoodNorm likelihood_norm = LikelihoodNorm::SequenceLength;

    // Paths. Output locations are not echoed into artifacts.
    std::string source;
    std::string target;
    std::string model;
    std::string labels;
    std::string truth;
    std::string subset;
    std::string out;

    // Execution only; never changes results and is not echoed.
    unsigned threads = 1;

    void validate() const;
    // Every configuration value except `out` and `threads`.
    records::json provenance() const;
};

// Starts from defaults and applies the keys present in `j`. Unknown keys are a
// usage error so typos in sweep configs do not pass silently.
RunConfig run_config_from_json(const records::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

// In-memory pipeline -------------------------------------------------------

struct SourceModel {
    ResidualQuantizer quantizer;
    TransitionBundle transitions;  // unsmoothed, target TMs unset
    FitTrace trace;
    CodeUsage usage;
};

SourceModel fit_source(const DomainDataset& source, const RunConfig& cfg);

struct TargetLabeling {
    ChannelTM target_channel_tms;
    ChannelWeights weights;
    std::vector<PseudoLabel> labels;
    std::vector<std::size_t> selected;  // top-r indices
};

TargetLabeling label_target(const ResidualQuantizer& q, const TransitionBundle& transitions,
                            const DomainDataset& target, const RunConfig& cfg);

LabelPrior make_prior(const RunConfig& cfg, std::size_t n_classes);

// File-backed commands -------------------------------------------------------

inline constexpr const char* kQuantizerFile = "quantizer.jsonl";
inline constexpr const char* kTransitionsFile = "transitions.jsonl";
inline constexpr const char* kPseudoLabelFile = "pseudo_labels.jsonl";
inline constexpr const char* kAlignmentFile = "alignment.tsv";
inline constexpr const char* kTopRFile = "top_r.jsonl";
inline constexpr const char* kEvalTextFile = "eval.tsv";
inline constexpr const char* kEvalRecordFile = "eval.jsonl";

struct FitSummary {
    CodeUsage usage;
    FitTrace trace;
    std::vector<std::size_t> empty_classes;
    std::string text;  // human-readable summary
};

// Reads cfg.source, writes <cfg.out>/quantizer.jsonl and transitions.jsonl.
FitSummary cmd_fit(const RunConfig& cfg);

struct LabelSummary {
    ChannelWeights weights;
    std::size_t n_labels = 0;
    std::size_t n_selected = 0;
    std::string text;
};

// Reads cfg.target and the bundles in cfg.model; writes pseudo_labels.jsonl,
// alignment.tsv, top_r.jsonl and a transitions.jsonl that includes the
// target channel TMs into cfg.out.
LabelSummary cmd_label(const RunConfig& cfg);

struct EvalSummary {
    MetricReport all;
    std::optional<MetricReport> selected;
    std::string text;
};

// Scores cfg.labels against cfg.truth, optionally also restricted to the
// indices in cfg.subset. Writes eval.tsv / eval.jsonl when cfg.out is set.
EvalSummary cmd_eval(const RunConfig& cfg);

struct SynthRequest {
    SynthConfig config;
    std::string out;
    std::optional<std::size_t> corrupt_channel;
    std::vector<double> corrupt_magnitudes;
};

// Writes source.jsonl, target.jsonl, target_truth.jsonl and, for each corrupt
// magnitude i, target_noise_<i>.jsonl. Returns the written paths.
std::vector<std::filesystem::path> cmd_synth(const SynthRequest& request);

}  // namespace codelabel
