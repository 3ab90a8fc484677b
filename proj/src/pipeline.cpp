#include "codelabel/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "codelabel/error.hpp"
#include "codelabel/parallel.hpp"

namespace codelabel {

using records::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
    if (patch_length < 2) fail_usage("patch_length must be >= 2");
    if (n_coarse < 2) fail_usage("n_coarse must be >= 2");
    if (n_fine < 2) fail_usage("n_fine must be >= 2");
    if (embed_mode == EmbedMode::Projection && d_dim == 0) fail_usage("projection embedding needs d_dim > 0");
    if (!(epsilon > 0.0)) fail_usage("epsilon must be positive");
    if (!(sigma > 0.0)) fail_usage("sigma must be positive");
    if (!(tau > 0.0)) fail_usage("tau must be positive");
    if (!(r_top > 0.0 && r_top <= 1.0)) fail_usage("r_top must lie in (0, 1]");
    if (max_iters == 0) fail_usage("max_iters must be positive");
    if (prior) LabelPrior::from_probs(*prior, tau);
}

json RunConfig::provenance() const {
    json j = {
        {"patch_length", patch_length},
        {"n_coarse", n_coarse},
        {"n_fine", n_fine},
        {"embed_mode", to_string(embed_mode)},
        {"d_dim", d_dim},
        {"epsilon", epsilon},
        {"sigma", sigma},
        {"tau", tau},
        {"r_top", r_top},
        {"use_ca", use_ca},
        {"max_iters", max_iters},
        {"seed", seed},
        {"batch_size", batch_size},
        {"likelihood_norm", likelihood_norm == LikelihoodNorm::SequenceLength ? "sequence_length" : "transition_count"},
        {"source", source},
        {"target", target},
        {"model", model},
        {"labels", labels},
        {"truth", truth},
        {"subset", subset},
    };
    j["prior"] = prior ? json(*prior) : json("uniform");
    return j;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
    if (!j.is_object()) fail_usage("run config must be a JSON object");
    static const std::set<std::string> known = {
        "patch_length", "n_coarse", "n_fine", "embed_mode", "d_dim",  "epsilon", "sigma",  "tau",
        "r_top",        "use_ca",   "prior",  "max_iters",  "seed",   "batch_size", "likelihood_norm",
        "source",       "target",   "model",  "labels",     "truth",  "subset", "out",    "threads"};
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) fail_usage("unknown config field '" + key + "'");
    try {
        c.patch_length = j.value("patch_length", c.patch_length);
        c.n_coarse = j.value("n_coarse", c.n_coarse);
        c.n_fine = j.value("n_fine", c.n_fine);
        if (j.contains("embed_mode")) c.embed_mode = parse_embed_mode(j["embed_mode"].get<std::string>());
        c.d_dim = j.value("d_dim", c.d_dim);
        c.epsilon = j.value("epsilon", c.epsilon);
        c.sigma = j.value("sigma", c.sigma);
        c.tau = j.value("tau", c.tau);
        c.r_top = j.value("r_top", c.r_top);
        c.use_ca = j.value("use_ca", c.use_ca);
        if (j.contains("prior")) {
            const json& p = j["prior"];
            if (p.is_string()) {
                if (p.get<std::string>() != "uniform") fail_usage("prior must be \"uniform\" or a probability vector");
                c.prior.reset();
            } else {
                c.prior = p.get<std::vector<double>>();
            }
        }
        c.max_iters = j.value("max_iters", c.max_iters);
        c.seed = j.value("seed", c.seed);
        c.batch_size = j.value("batch_size", c.batch_size);
        if (j.contains("likelihood_norm")) {
            const auto s = j["likelihood_norm"].get<std::string>();
            if (s == "sequence_length")
                c.likelihood_norm = LikelihoodNorm::SequenceLength;
            else if (s == "transition_count")
                c.likelihood_norm = LikelihoodNorm::TransitionCount;
            else
                fail_usage("likelihood_norm must be sequence_length or transition_count");
        }
        c.source = j.value("source", c.source);
        c.target = j.value("target", c.target);
        c.model = j.value("model", c.model);
        c.labels = j.value("labels", c.labels);
        c.truth = j.value("truth", c.truth);
        c.subset = j.value("subset", c.subset);
        c.out = j.value("out", c.out);
        c.threads = j.value("threads", c.threads);
    } catch (const json::exception& e) {
        fail_usage(std::string("run config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const fs::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) fail_usage("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail_usage("config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j, std::move(base));
}

LabelPrior make_prior(const RunConfig& cfg, std::size_t n_classes) {
    if (!cfg.prior) return LabelPrior::uniform(n_classes, cfg.tau);
    if (cfg.prior->size() != n_classes)
        fail_usage("prior has " + std::to_string(cfg.prior->size()) + " entries for " + std::to_string(n_classes) +
                   " classes");
    return LabelPrior::from_probs(*cfg.prior, cfg.tau);
}

// ---------------------------------------------------------------------------
// In-memory pipeline

namespace {

std::vector<CodeGrid> encode_all(const ResidualQuantizer& q, const DomainDataset& ds, unsigned threads) {
    std::vector<CodeGrid> codes(ds.size());
    parallel_for(ds.size(), threads, [&](std::size_t i) { codes[i] = q.encode_instance(ds.instances[i]); });
    return codes;
}

}  // namespace

SourceModel fit_source(const DomainDataset& source, const RunConfig& cfg) {
    cfg.validate();
    if (source.role != DomainRole::Source) fail_data("fit needs a source-role corpus");
    source.validate();
    if (source.size() == 0) fail_data("source corpus is empty");

    const EmbedSpec spec{cfg.embed_mode, cfg.embed_mode == EmbedMode::Projection ? cfg.d_dim : 0, cfg.seed};
    const Embedder embedder(cfg.patch_length, spec);
    std::vector<LatentGrid> latents(source.size());
    parallel_for(source.size(), cfg.threads, [&](std::size_t i) {
        latents[i] = embedder.embed(patchify(source.instances[i], cfg.patch_length));
    });

    FitOptions options;
    options.n_coarse = cfg.n_coarse;
    options.n_fine = cfg.n_fine;
    options.max_iters = cfg.max_iters;
    options.seed = cfg.seed;
    FitResult fitted = fit(latents, options, cfg.patch_length, spec);
    const ResidualQuantizer& q = fitted.quantizer;

    std::vector<CodeGrid> codes(source.size());
    parallel_for(source.size(), cfg.threads, [&](std::size_t i) { codes[i] = q.encode(latents[i]); });
    std::vector<std::size_t> labels;
    labels.reserve(source.size());
    for (const auto& inst : source.instances) labels.push_back(*inst.label);

    TransitionBundle bundle;
    bundle.epsilon = cfg.epsilon;
    bundle.class_tms = build_class_tm(codes, labels, source.n_classes, source.n_channels, q.n_coarse());
    bundle.source_channel_tms = build_channel_tm(codes, source.n_channels, q.n_coarse());
    CodeUsage usage = code_stats(codes, q, latents);
    return SourceModel{std::move(fitted.quantizer), std::move(bundle), std::move(fitted.trace), std::move(usage)};
}

TargetLabeling label_target(const ResidualQuantizer& q, const TransitionBundle& transitions,
                            const DomainDataset& target, const RunConfig& cfg) {
    cfg.validate();
    if (target.role != DomainRole::Target) fail_data("label needs a target-role corpus");
    const auto& cl = transitions.class_tms;
    if (target.n_channels != cl.n_channels)
        fail_data("dimension mismatch: target has " + std::to_string(target.n_channels) + " channels, model has " +
                  std::to_string(cl.n_channels));
    if (cl.n_states != q.n_coarse()) fail_data("dimension mismatch: transition model and quantizer disagree on n_c");
    if (target.length < 2 * q.patch_length())
        fail_data("target series of length " + std::to_string(target.length) + " yield fewer than 2 patches");

    TargetLabeling out;
    const auto codes = encode_all(q, target, cfg.threads);
    out.target_channel_tms = build_channel_tm(codes, target.n_channels, q.n_coarse());
    if (cfg.use_ca) {
        const CostMatrix M = cosine_cost(q.coarse());
        out.weights = channel_weights(smooth(transitions.source_channel_tms, cfg.epsilon),
                                      smooth(out.target_channel_tms, cfg.epsilon), M, cfg.sigma, cfg.threads);
    } else {
        out.weights = uniform_channel_weights(target.n_channels, cfg.sigma);
    }
    const ClassChannelTM model = smooth(cl, cfg.epsilon);
    const LabelPrior prior = make_prior(cfg, cl.n_classes);
    out.labels.resize(target.size());
    parallel_for(target.size(), cfg.threads, [&](std::size_t i) {
        out.labels[i] = label_codes(codes[i], model, out.weights, prior, cfg.likelihood_norm);
    });
    if (!out.labels.empty()) out.selected = top_r_select(out.labels, cfg.r_top, cfg.batch_size);
    return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

json command_meta(const char* command, const json& config) {
    return {{"tool", "codelabel"}, {"command", command}, {"config", config}};
}

fs::path require_path(const std::string& p, const char* what) {
    if (p.empty()) fail_usage(std::string("missing required path: ") + what);
    return fs::path(p);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_usage("cannot write " + path.string());
    out << text;
}

std::string fmt(double v, int precision = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

std::string tm_summary(const ClassChannelTM& cl) {
    std::ostringstream out;
    for (std::size_t k = 0; k < cl.n_classes; ++k)
        for (std::size_t d = 0; d < cl.n_channels; ++d) {
            const auto& tm = cl.at(k, d);
            // Strongest transition out of each state.
            out << "  class " << k << " channel " << d << ":";
            for (std::size_t i = 0; i < tm.size(); ++i) {
                auto r = tm.row(i);
                const auto j = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
                out << ' ' << i << "->" << j << '(' << fmt(r[j], 2) << ')';
            }
            out << '\n';
        }
    return out.str();
}

}  // namespace

FitSummary cmd_fit(const RunConfig& cfg) {
    const fs::path source_path = require_path(cfg.source, "source corpus");
    const fs::path out_dir = require_path(cfg.out, "output directory");
    const DomainDataset source = load_corpus(source_path);
    SourceModel model = fit_source(source, cfg);

    const json meta = command_meta("fit", cfg.provenance());
    records::write_file(out_dir / kQuantizerFile, quantizer_to_document(model.quantizer, meta));
    records::write_file(out_dir / kTransitionsFile, transitions_to_document(model.transitions, meta));

    FitSummary s;
    s.usage = model.usage;
    s.trace = model.trace;
    s.empty_classes = model.transitions.class_tms.empty_classes;
    std::ostringstream text;
    text << "fitted n_c=" << model.quantizer.n_coarse() << " n_f=" << model.quantizer.n_fine()
         << " d_dim=" << model.quantizer.dim() << " on " << source.size() << " instances ("
         << model.usage.total << " patches)\n";
    text << "coarse dead codes: " << fmt(model.usage.coarse_dead_pct, 1) << "%  fine dead codes: "
         << fmt(model.usage.fine_dead_pct, 1) << "%\n";
    text << "reconstruction mse: " << fmt(*model.usage.recon_mse, 6)
         << "  coarse-only mse: " << fmt(*model.usage.coarse_only_mse, 6) << '\n';
    text << "lloyd iterations: coarse " << model.trace.coarse_objective.size()
         << (model.trace.coarse_converged ? " (converged)" : " (max_iters)") << ", fine "
         << model.trace.fine_objective.size() << (model.trace.fine_converged ? " (converged)" : " (max_iters)") << '\n';
    for (std::size_t k : s.empty_classes)
        text << "warning: class " << k << " has no source instances; its transition matrices are uniform\n";
    text << "class-wise transition summary (most likely successor per state):\n"
         << tm_summary(model.transitions.class_tms);
    s.text = text.str();
    return s;
}

LabelSummary cmd_label(const RunConfig& base_cfg) {
    const fs::path target_path = require_path(base_cfg.target, "target corpus");
    const fs::path model_dir = require_path(base_cfg.model, "model directory");
    const fs::path out_dir = require_path(base_cfg.out, "output directory");

    const ResidualQuantizer q = quantizer_from_document(records::read_file(model_dir / kQuantizerFile, "quantizer"));
    TransitionBundle bundle = transitions_from_document(records::read_file(model_dir / kTransitionsFile, "transitions"));
    const DomainDataset target = load_corpus(target_path);

    // The frozen bundle defines the quantization settings.
    RunConfig cfg = base_cfg;
    cfg.patch_length = q.patch_length();
    cfg.n_coarse = q.n_coarse();
    cfg.n_fine = q.n_fine();
    cfg.embed_mode = q.embedder().spec().mode;
    cfg.d_dim = q.embedder().spec().mode == EmbedMode::Projection ? q.dim() : 0;
    cfg.epsilon = bundle.epsilon;

    const TargetLabeling result = label_target(q, bundle, target, cfg);
    json meta = command_meta("label", cfg.provenance());
    meta["n_classes"] = bundle.class_tms.n_classes;
    meta["n_channels"] = target.n_channels;

    records::Document labels_doc;
    labels_doc.kind = "pseudo_labels";
    labels_doc.meta = meta;
    labels_doc.meta["channel_weights"] = result.weights.w;
    for (std::size_t i = 0; i < result.labels.size(); ++i)
        labels_doc.records.push_back({0, pseudo_label_json(target.instances[i].id, result.labels[i], result.weights.w)});
    records::write_file(out_dir / kPseudoLabelFile, labels_doc);

    records::Document top_doc;
    top_doc.kind = "top_r";
    top_doc.meta = meta;
    for (std::size_t r = 0; r < result.selected.size(); ++r) {
        const std::size_t i = result.selected[r];
        top_doc.records.push_back(
            {0, {{"rank", r}, {"index", i}, {"id", target.instances[i].id}, {"confidence", result.labels[i].confidence}}});
    }
    records::write_file(out_dir / kTopRFile, top_doc);

    write_text(out_dir / kAlignmentFile, alignment_report(result.weights, "config " + meta.dump()));

    bundle.target_channel_tms = result.target_channel_tms;
    records::write_file(out_dir / kTransitionsFile, transitions_to_document(bundle, meta));

    LabelSummary s;
    s.weights = result.weights;
    s.n_labels = result.labels.size();
    s.n_selected = result.selected.size();
    std::ostringstream text;
    text << "labeled " << s.n_labels << " target instances; top-r selected " << s.n_selected << " (r_top=" << cfg.r_top
         << ")\n";
    text << "channel alignment (" << (cfg.use_ca ? "optimal transport" : "disabled, w=1") << "):\n";
    for (std::size_t d = 0; d < s.weights.w.size(); ++d)
        text << "  channel " << d << ": mean cost " << fmt(s.weights.mean_cost[d], 6) << "  w=" << fmt(s.weights.w[d], 6)
             << '\n';
    s.text = text.str();
    return s;
}

EvalSummary cmd_eval(const RunConfig& cfg) {
    const auto labels_doc = records::read_file(require_path(cfg.labels, "pseudo-label file"), "pseudo_labels");
    const auto truth_doc = records::read_file(require_path(cfg.truth, "truth file"), "truth");

    std::map<std::string, std::size_t> truth_by_id;
    std::size_t n_classes = truth_doc.meta.value("n_classes", std::size_t{0});
    try {
        for (const auto& rec : truth_doc.records) {
            const auto id = records::require(rec, "id").get<std::string>();
            const auto y = records::require(rec, "label").get<std::size_t>();
            if (!truth_by_id.emplace(id, y).second) fail_data("truth file: duplicate id '" + id + "'");
            n_classes = std::max(n_classes, y + 1);
        }
        n_classes = std::max(n_classes, labels_doc.meta.value("n_classes", std::size_t{0}));
    } catch (const json::exception& e) {
        fail_data(std::string("truth file: ") + e.what());
    }

    std::vector<std::size_t> pred, truth;
    std::set<std::string> seen;
    try {
        for (const auto& rec : labels_doc.records) {
            const auto id = records::require(rec, "id").get<std::string>();
            auto it = truth_by_id.find(id);
            if (it == truth_by_id.end()) fail_data("id mismatch: '" + id + "' has no truth label");
            if (!seen.insert(id).second) fail_data("pseudo-label file: duplicate id '" + id + "'");
            pred.push_back(records::require(rec, "label").get<std::size_t>());
            truth.push_back(it->second);
            n_classes = std::max(n_classes, pred.back() + 1);
        }
    } catch (const json::exception& e) {
        fail_data(std::string("pseudo-label file: ") + e.what());
    }
    if (seen.size() != truth_by_id.size())
        fail_data("id mismatch: " + std::to_string(truth_by_id.size() - seen.size()) +
                  " truth ids have no pseudo-label");

    EvalSummary s;
    s.all = accuracy_mf1(pred, truth, n_classes);
    if (!cfg.subset.empty()) {
        const auto subset_doc = records::read_file(cfg.subset, "top_r");
        std::vector<std::size_t> sp, st;
        for (const auto& rec : subset_doc.records) {
            const auto i = records::require(rec, "index").get<std::size_t>();
            if (i >= pred.size()) fail_data("subset index " + std::to_string(i) + " out of range");
            sp.push_back(pred[i]);
            st.push_back(truth[i]);
        }
        if (!sp.empty()) s.selected = accuracy_mf1(sp, st, n_classes);
    }

    const json meta = command_meta("eval", cfg.provenance());
    std::string text = metric_report_text(s.all, "all", "config " + meta.dump());
    if (s.selected) {
        std::string sel = metric_report_text(*s.selected, "top_r");
        text += sel.substr(sel.find('\n') + 1);
    }
    s.text = text;
    if (!cfg.out.empty()) {
        const fs::path out_dir(cfg.out);
        write_text(out_dir / kEvalTextFile, text);
        records::Document doc;
        doc.kind = "eval";
        doc.meta = meta;
        doc.records.push_back({0, {{"subset", "all"}, {"metrics", metric_report_json(s.all)}}});
        if (s.selected) doc.records.push_back({0, {{"subset", "top_r"}, {"metrics", metric_report_json(*s.selected)}}});
        records::write_file(out_dir / kEvalRecordFile, doc);
    }
    return s;
}

std::vector<fs::path> cmd_synth(const SynthRequest& request) {
    const fs::path out_dir = require_path(request.out, "output directory");
    const SynthOutput data = generate(request.config);
    json meta = {{"tool", "codelabel"}, {"command", "synth"}, {"config", synth_config_to_json(request.config)}};

    std::vector<fs::path> written;
    auto save = [&](const fs::path& name, const DomainDataset& ds, json m) {
        save_corpus(out_dir / name, ds, m);
        written.push_back(out_dir / name);
    };
    save("source.jsonl", data.source, meta);
    save("target.jsonl", data.target, meta);
    records::write_file(out_dir / "target_truth.jsonl", truth_to_document(data.target, data.target_truth, meta));
    written.push_back(out_dir / "target_truth.jsonl");

    if (request.corrupt_channel) {
        if (request.corrupt_magnitudes.empty()) fail_usage("corrupt channel given without noise magnitudes");
        for (std::size_t i = 0; i < request.corrupt_magnitudes.size(); ++i) {
            json m = meta;
            m["corrupt_channel"] = *request.corrupt_channel;
            m["corrupt_magnitude"] = request.corrupt_magnitudes[i];
            const DomainDataset noisy = inject_channel_noise(data.target, *request.corrupt_channel,
                                                             request.corrupt_magnitudes[i], request.config.seed + 1000);
            save("target_noise_" + std::to_string(i) + ".jsonl", noisy, m);
        }
    }
    return written;
}

}  // namespace codelabel
