// codelabel command line: synth, fit, label, eval.
//
// Each subcommand takes an optional --config JSON file whose keys mirror the
// configuration field names; explicit flags override the file.

#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "codelabel/error.hpp"
#include "codelabel/pipeline.hpp"

namespace {

using codelabel::records::json;

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) codelabel::fail_usage("cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        codelabel::fail_usage("config " + path + ": " + e.what());
    }
}

// Flags collected into a JSON overlay so the same parser handles file and
// command line values.
struct Overlay {
    json values = json::object();

    template <class T>
    void bind(CLI::App* app, const std::string& flag, const std::string& key, T& storage, const std::string& help) {
        auto* opt = app->add_option(flag, storage, help);
        options.push_back({opt, key, [&storage] { return json(storage); }});
    }

    void collect() {
        for (auto& o : options)
            if (o.opt->count() > 0) values[o.key] = o.get();
    }

    struct Entry {
        CLI::Option* opt;
        std::string key;
        std::function<json()> get;
    };
    std::vector<Entry> options;
};

struct RunFlags {
    std::string config;
    std::size_t patch_length = 0, n_coarse = 0, n_fine = 0, d_dim = 0, max_iters = 0, batch_size = 0;
    std::string embed_mode, likelihood_norm, prior;
    double epsilon = 0, sigma = 0, tau = 0, r_top = 0;
    bool use_ca = true;
    std::uint64_t seed = 0;
    std::string source, target, model, labels, truth, subset, out;
    unsigned threads = 1;
    Overlay overlay;
    CLI::Option* prior_opt = nullptr;
};

void add_run_flags(CLI::App* app, RunFlags& f, bool quantization, bool labeling) {
    app->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
    auto& o = f.overlay;
    if (quantization) {
        o.bind(app, "--patch-length", "patch_length", f.patch_length, "patch length m");
        o.bind(app, "--n-coarse", "n_coarse", f.n_coarse, "coarse codebook size");
        o.bind(app, "--n-fine", "n_fine", f.n_fine, "fine codebook size");
        o.bind(app, "--embed-mode", "embed_mode", f.embed_mode, "znorm | raw | projection");
        o.bind(app, "--d-dim", "d_dim", f.d_dim, "latent dimension for projection embedding");
        o.bind(app, "--max-iters", "max_iters", f.max_iters, "Lloyd iteration cap");
        o.bind(app, "--seed", "seed", f.seed, "random seed");
        o.bind(app, "--epsilon", "epsilon", f.epsilon, "transition smoothing");
        o.bind(app, "--source", "source", f.source, "labeled source corpus");
    }
    if (labeling) {
        o.bind(app, "--sigma", "sigma", f.sigma, "alignment kernel bandwidth");
        o.bind(app, "--tau", "tau", f.tau, "prior temperature");
        o.bind(app, "--r-top", "r_top", f.r_top, "fraction kept by top-r selection");
        o.bind(app, "--use-ca", "use_ca", f.use_ca, "channel alignment on/off (true|false)");
        o.bind(app, "--batch-size", "batch_size", f.batch_size, "top-r batch size (0 = whole corpus)");
        o.bind(app, "--likelihood-norm", "likelihood_norm", f.likelihood_norm, "sequence_length | transition_count");
        f.prior_opt = app->add_option("--prior", f.prior, "\"uniform\" or comma separated class probabilities");
        o.bind(app, "--target", "target", f.target, "target corpus");
        o.bind(app, "--model", "model", f.model, "directory holding the fitted bundles");
    }
    app->add_option("--out", f.out, "output directory");
    app->add_option("--threads", f.threads, "worker threads (results do not depend on it)")
        ->check(CLI::Range(1u, 1024u));
}

json parse_prior_flag(const std::string& s) {
    if (s == "uniform") return "uniform";
    json v = json::array();
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            double x = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            v.push_back(x);
        } catch (const std::exception&) {
            codelabel::fail_usage("--prior: cannot parse '" + item + "'");
        }
    }
    return v;
}

codelabel::RunConfig resolve(RunFlags& f, const CLI::App* app) {
    codelabel::RunConfig cfg;
    if (!f.config.empty()) cfg = codelabel::run_config_from_json(read_json(f.config));
    f.overlay.collect();
    json overlay = f.overlay.values;
    if (f.prior_opt && f.prior_opt->count() > 0) overlay["prior"] = parse_prior_flag(f.prior);
    cfg = codelabel::run_config_from_json(overlay, cfg);
    if (app->get_option("--out")->count() > 0) cfg.out = f.out;
    if (app->get_option("--threads")->count() > 0) cfg.threads = f.threads;
    cfg.validate();
    return cfg;
}

struct SynthFlags {
    std::string config;
    std::size_t n_classes = 0, n_channels = 0, length = 0, patch_length = 0, n_primitives = 0, n_source = 0,
                n_target = 0;
    double regime_strength = 0, base_noise = 0, target_regime_mix = 0;
    std::vector<double> target_noise, target_class_probs, source_class_probs;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t corrupt_channel = 0;
    std::vector<double> corrupt_magnitudes;
    Overlay overlay;
};

codelabel::SynthRequest resolve_synth(SynthFlags& f, const CLI::App* app) {
    static const std::set<std::string> known = {
        "n_classes",  "n_channels", "length",   "patch_length", "n_primitives",  "sine_frequency",
        "class_regimes", "regime_strength", "base_noise", "target_shift", "target_noise", "target_regime_mix",
        "source_class_probs", "target_class_probs", "n_source", "n_target", "seed", "out", "corrupt_channel",
        "corrupt_magnitudes"};
    json j = json::object();
    if (!f.config.empty()) j = read_json(f.config);
    if (!j.is_object()) codelabel::fail_usage("synth config must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) codelabel::fail_usage("unknown synth config field '" + key + "'");
    f.overlay.collect();
    for (const auto& [key, value] : f.overlay.values.items()) j[key] = value;

    codelabel::SynthRequest req;
    try {
        req.out = j.value("out", std::string());
        if (app->get_option("--out")->count() > 0) req.out = f.out;
        if (j.contains("corrupt_channel")) req.corrupt_channel = j["corrupt_channel"].get<std::size_t>();
        if (app->get_option("--corrupt-channel")->count() > 0) req.corrupt_channel = f.corrupt_channel;
        req.corrupt_magnitudes = j.value("corrupt_magnitudes", std::vector<double>{});
        if (app->get_option("--corrupt-magnitudes")->count() > 0) req.corrupt_magnitudes = f.corrupt_magnitudes;
    } catch (const json::exception& e) {
        codelabel::fail_usage(std::string("synth config: ") + e.what());
    }
    j.erase("out");
    j.erase("corrupt_channel");
    j.erase("corrupt_magnitudes");
    req.config = codelabel::synth_config_from_json(j);
    req.config.validate();
    if (req.corrupt_channel && *req.corrupt_channel >= req.config.n_channels)
        codelabel::fail_usage("--corrupt-channel out of range");
    return req;
}

int run(int argc, char** argv) {
    CLI::App app{"Unsupervised pseudo-labeling of time series via code transitions"};
    app.require_subcommand(1);

    SynthFlags sf;
    auto* synth = app.add_subcommand("synth", "generate a labeled source / unlabeled target corpus pair");
    synth->add_option("--config", sf.config, "JSON synth configuration")->check(CLI::ExistingFile);
    sf.overlay.bind(synth, "--n-classes", "n_classes", sf.n_classes, "number of classes");
    sf.overlay.bind(synth, "--n-channels", "n_channels", sf.n_channels, "number of channels");
    sf.overlay.bind(synth, "--length", "length", sf.length, "series length");
    sf.overlay.bind(synth, "--patch-length", "patch_length", sf.patch_length, "primitive length");
    sf.overlay.bind(synth, "--n-primitives", "n_primitives", sf.n_primitives, "shape primitives in use (<= 6)");
    sf.overlay.bind(synth, "--regime-strength", "regime_strength", sf.regime_strength, "successor probability");
    sf.overlay.bind(synth, "--base-noise", "base_noise", sf.base_noise, "noise std in both domains");
    sf.overlay.bind(synth, "--target-noise", "target_noise", sf.target_noise, "per-channel target noise std");
    sf.overlay.bind(synth, "--target-regime-mix", "target_regime_mix", sf.target_regime_mix,
                    "blend of target regimes toward uniform");
    sf.overlay.bind(synth, "--source-class-probs", "source_class_probs", sf.source_class_probs, "source class mix");
    sf.overlay.bind(synth, "--target-class-probs", "target_class_probs", sf.target_class_probs, "target class mix");
    sf.overlay.bind(synth, "--n-source", "n_source", sf.n_source, "source instances");
    sf.overlay.bind(synth, "--n-target", "n_target", sf.n_target, "target instances");
    sf.overlay.bind(synth, "--seed", "seed", sf.seed, "random seed");
    synth->add_option("--out", sf.out, "output directory");
    synth->add_option("--corrupt-channel", sf.corrupt_channel, "channel receiving extra noise");
    synth->add_option("--corrupt-magnitudes", sf.corrupt_magnitudes, "noise std per corrupted variant");

    RunFlags ff, lf, ef;
    auto* fit = app.add_subcommand("fit", "fit quantizer and transition model on the source corpus");
    add_run_flags(fit, ff, true, false);
    auto* label = app.add_subcommand("label", "pseudo-label the target corpus");
    add_run_flags(label, lf, false, true);
    auto* eval = app.add_subcommand("eval", "score pseudo-labels against truth");
    add_run_flags(eval, ef, false, false);
    ef.overlay.bind(eval, "--labels", "labels", ef.labels, "pseudo-label file");
    ef.overlay.bind(eval, "--truth", "truth", ef.truth, "truth file");
    ef.overlay.bind(eval, "--subset", "subset", ef.subset, "top-r index file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (synth->parsed()) {
        for (const auto& p : codelabel::cmd_synth(resolve_synth(sf, synth))) std::cout << "wrote " << p.string() << '\n';
    } else if (fit->parsed()) {
        std::cout << codelabel::cmd_fit(resolve(ff, fit)).text;
    } else if (label->parsed()) {
        std::cout << codelabel::cmd_label(resolve(lf, label)).text;
    } else if (eval->parsed()) {
        std::cout << codelabel::cmd_eval(resolve(ef, eval)).text;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const codelabel::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
}
