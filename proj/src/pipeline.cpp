#include "parnn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <thread>
#include <vector>

#include "json.hpp"
#include "parnn/data.hpp"
#include "parnn/metrics.hpp"
#include "parnn/model.hpp"
#include "parnn/prior.hpp"
#include "parnn/rng.hpp"
#include "parnn/train.hpp"
#include "parnn/uq.hpp"

namespace parnn {

namespace {

using nlohmann::json;

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    return j;
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end())
            throw ConfigError("unknown key \"" + key + "\" in " + context);
    }
}

template <typename T>
T get_required(const json& obj, const char* key, const std::string& context) {
    if (!obj.contains(key))
        throw ConfigError("missing key \"" + std::string(key) + "\" in " + context);
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for \"" + std::string(key) + "\" in " + context);
    }
}

template <typename T>
T get_optional(const json& obj, const char* key, T fallback, const std::string& context) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for \"" + std::string(key) + "\" in " + context);
    }
}

struct Splits {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

struct DataConfig {
    std::string kind;
    std::string csv_path;
    std::size_t n = 0;
    std::size_t burn_in = 200;
    std::size_t window = 1;
    std::size_t M_l = 1;
    Splits splits;
    double phi = 0.9;
    std::size_t sequences = 0;
    std::size_t length = 0;
    std::size_t horizon = 1;
    std::set<std::size_t> true_lags;
};

DataConfig parse_data(const json& j) {
    check_keys(j,
               {"kind", "csv_path", "n", "burn_in", "window", "M_l", "splits", "phi",
                "sequences", "length", "horizon", "true_lags"},
               "data");
    DataConfig d;
    d.kind = get_required<std::string>(j, "kind", "data");
    if (d.kind != "expar" && d.kind != "nlar" && d.kind != "csv" && d.kind != "ar1_panel")
        throw ConfigError("data.kind must be one of expar, nlar, csv, ar1_panel");
    d.csv_path = get_optional<std::string>(j, "csv_path", "", "data");
    if (d.kind == "csv" && d.csv_path.empty())
        throw ConfigError("data.kind csv requires csv_path");
    if (!d.csv_path.empty() && !std::filesystem::exists(d.csv_path))
        throw ConfigError("data.csv_path does not exist: " + d.csv_path);
    d.n = get_optional<std::size_t>(j, "n", 0, "data");
    d.burn_in = get_optional<std::size_t>(j, "burn_in", 200, "data");
    d.window = get_optional<std::size_t>(j, "window", 1, "data");
    d.M_l = get_optional<std::size_t>(j, "M_l", 1, "data");
    d.phi = get_optional<double>(j, "phi", 0.9, "data");
    d.sequences = get_optional<std::size_t>(j, "sequences", 0, "data");
    d.length = get_optional<std::size_t>(j, "length", 0, "data");
    d.horizon = get_optional<std::size_t>(j, "horizon", 1, "data");
    if (j.contains("splits")) {
        const json& s = j.at("splits");
        check_keys(s, {"train", "val", "test"}, "data.splits");
        d.splits.train = get_required<std::size_t>(s, "train", "data.splits");
        d.splits.val = get_optional<std::size_t>(s, "val", 0, "data.splits");
        d.splits.test = get_optional<std::size_t>(s, "test", 0, "data.splits");
    }
    if (j.contains("true_lags")) {
        for (auto v : get_required<std::vector<std::size_t>>(j, "true_lags", "data"))
            d.true_lags.insert(v);
    }
    return d;
}

std::set<std::size_t> default_true_lags(const std::string& kind) {
    if (kind == "nlar") return {1, 2, 3, 7};
    if (kind == "expar") return {1};
    return {};
}

NetworkSpec parse_model(const json& j, std::size_t input_dim, std::size_t output_dim) {
    check_keys(j, {"kind", "widths", "activations", "warmup"}, "model");
    NetworkSpec spec;
    spec.kind = [&] {
        const auto k = get_required<std::string>(j, "kind", "model");
        try {
            return net_kind_from_string(k);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    }();
    auto hidden = get_required<std::vector<std::size_t>>(j, "widths", "model");
    spec.layer_widths.push_back(input_dim);
    spec.layer_widths.insert(spec.layer_widths.end(), hidden.begin(), hidden.end());
    spec.layer_widths.push_back(output_dim);
    for (const auto& a : get_required<std::vector<std::string>>(j, "activations", "model")) {
        try {
            spec.activations.push_back(activation_from_string(a));
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    }
    spec.warmup = get_optional<std::size_t>(j, "warmup", 0, "model");
    try {
        spec.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    return spec;
}

struct PriorConfig {
    double lambda_n;
    double sigma1_sq;
    double sigma0_end_sq;
    std::optional<double> sigma0_init_sq;
    std::optional<double> target_sparsity;
};

PriorConfig parse_prior(const json& j) {
    check_keys(j, {"lambda_n", "sigma1_sq", "sigma0_init_sq", "target_sparsity", "sigma0_end_sq"},
               "prior");
    PriorConfig p;
    p.lambda_n = get_required<double>(j, "lambda_n", "prior");
    p.sigma1_sq = get_required<double>(j, "sigma1_sq", "prior");
    p.sigma0_end_sq = get_required<double>(j, "sigma0_end_sq", "prior");
    if (j.contains("sigma0_init_sq"))
        p.sigma0_init_sq = get_required<double>(j, "sigma0_init_sq", "prior");
    if (j.contains("target_sparsity"))
        p.target_sparsity = get_required<double>(j, "target_sparsity", "prior");
    if (p.sigma0_init_sq.has_value() == p.target_sparsity.has_value())
        throw ConfigError("prior: exactly one of sigma0_init_sq / target_sparsity required");
    return p;
}

AnnealSchedule parse_schedule(const json& j, const PriorConfig& prior) {
    check_keys(j, {"T1", "T2", "T3", "temp_const", "base_temperature"}, "schedule");
    AnnealSchedule s;
    s.T1 = get_required<std::size_t>(j, "T1", "schedule");
    s.T2 = get_required<std::size_t>(j, "T2", "schedule");
    s.T3 = get_required<std::size_t>(j, "T3", "schedule");
    s.temp_const = get_required<double>(j, "temp_const", "schedule");
    s.base_temperature = get_optional<double>(j, "base_temperature", 1.0, "schedule");
    s.sigma0_init_sq = prior.sigma0_init_sq.value_or(prior.sigma1_sq * 0.5);  // placeholder
    s.sigma0_end_sq = prior.sigma0_end_sq;
    try {
        s.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("schedule: ") + e.what());
    }
    return s;
}

struct TrainSection {
    TrainConfig cfg;
    std::size_t refine_iterations = 0;
};

TrainSection parse_train(const json& j) {
    check_keys(j,
               {"lr", "momentum", "batch_size", "iterations", "gradient_clip",
                "refine_iterations", "log_every"},
               "train");
    TrainSection t;
    t.cfg.learning_rate = get_required<double>(j, "lr", "train");
    t.cfg.momentum = get_required<double>(j, "momentum", "train");
    t.cfg.batch_size = get_required<std::size_t>(j, "batch_size", "train");
    t.cfg.total_iterations = get_required<std::size_t>(j, "iterations", "train");
    t.cfg.gradient_clip = get_optional<double>(j, "gradient_clip", 0.0, "train");
    t.cfg.log_every = get_optional<std::size_t>(j, "log_every", 100, "train");
    t.refine_iterations = get_optional<std::size_t>(j, "refine_iterations", 0, "train");
    try {
        t.cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("train: ") + e.what());
    }
    return t;
}

struct UqSection {
    double alpha = 0.1;
    HessianOptions hessian;
};

UqSection parse_uq(const json& j) {
    check_keys(j, {"alpha", "horizon", "hessian"}, "uq");
    UqSection u;
    u.alpha = get_required<double>(j, "alpha", "uq");
    if (!(u.alpha > 0.0 && u.alpha < 1.0)) throw ConfigError("uq.alpha must be in (0,1)");
    if (j.contains("hessian")) {
        const json& h = j.at("hessian");
        check_keys(h, {"fd_step", "jitter_start"}, "uq.hessian");
        u.hessian.fd_step = get_optional<double>(h, "fd_step", 1e-5, "uq.hessian");
        u.hessian.jitter_start = get_optional<double>(h, "jitter_start", 1e-8, "uq.hessian");
    }
    return u;
}

std::filesystem::path resolve_out_dir(const json& config, const CommandOptions& opts) {
    std::string dir = opts.out_dir;
    if (dir.empty()) dir = get_optional<std::string>(config, "out_dir", "", "config");
    if (dir.empty()) throw ConfigError("no output directory (config out_dir or --out)");
    std::filesystem::create_directories(dir);
    return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << "\n";
}

SeriesDataset make_series(const DataConfig& d, std::uint64_t seed) {
    if (d.kind == "expar") return gen_expar(d.n, seed, d.burn_in);
    if (d.kind == "nlar") return gen_nlar(d.n, seed, d.burn_in);
    if (d.kind == "csv") return read_csv(d.csv_path);
    throw ConfigError("data.kind " + d.kind + " does not produce a single series");
}

struct SplitWindows {
    std::vector<Window> train, val, test;
};

// Window targets are assigned to train/val/test by their index in the raw
// series, so the three blocks are contiguous slices of one realization.
SplitWindows split_windows(const std::vector<Window>& all, const DataConfig& d) {
    SplitWindows out;
    const std::size_t first_target = d.M_l + d.window - 1;
    for (std::size_t i = 0; i < all.size(); ++i) {
        const std::size_t target_idx = first_target + i;
        if (target_idx < d.splits.train)
            out.train.push_back(all[i]);
        else if (target_idx < d.splits.train + d.splits.val)
            out.val.push_back(all[i]);
        else
            out.test.push_back(all[i]);
    }
    if (out.train.size() < 2) throw ConfigError("data.splits.train leaves too few windows");
    return out;
}

struct TrainedModel {
    NetworkSpec spec;
    ParamVector params;
    StructureMask mask;
    double sigma0_init_sq;
    double kept_fraction;
    std::vector<TrainLogEntry> log;
    Standardization standardization{0.0, 1.0};
};

// Annealed training + sparsify + refine on pre-built windows.
TrainedModel train_on_windows(const NetworkSpec& spec, std::span<const Window> train_windows,
                              const PriorConfig& prior_cfg, AnnealSchedule sched,
                              const TrainSection& train_cfg, std::uint64_t seed) {
    TrainedModel out;
    out.spec = spec;
    TrainConfig cfg = train_cfg.cfg;
    cfg.seed = seed;

    ParamVector params = init_params(spec, seed);
    MixturePrior prior_template{prior_cfg.lambda_n, prior_cfg.sigma1_sq * 0.5,
                                prior_cfg.sigma1_sq};

    if (prior_cfg.target_sparsity) {
        // Run the prior-free phase alone, pick sigma0_init^2 to match the
        // target sparsity on the warmed-up weights, then resume at T1.
        TrainConfig head = cfg;
        head.total_iterations = std::min(sched.T1, cfg.total_iterations);
        auto warm = run_prior_annealing(spec, std::move(params), train_windows, prior_template,
                                        sched, head);
        auto cal = calibrate_sigma0_init(warm.params.values, prior_template,
                                         *prior_cfg.target_sparsity, 1e-3);
        sched.sigma0_init_sq = std::max(cal.sigma0_init_sq, sched.sigma0_end_sq);
        out.log = std::move(warm.log);
        params = std::move(warm.params);
        cfg.start_iteration = head.total_iterations;
    }
    out.sigma0_init_sq = sched.sigma0_init_sq;

    auto trained =
        run_prior_annealing(spec, std::move(params), train_windows, prior_template, sched, cfg);
    out.log.insert(out.log.end(), trained.log.begin(), trained.log.end());

    const MixturePrior end_prior =
        prior_template.with_sigma0(sched.sigma0_end_sq);
    auto sparse = sparsify(trained.params, end_prior);
    out.mask = sparse.mask;
    out.kept_fraction = sparse.kept_fraction;

    if (train_cfg.refine_iterations > 0) {
        TrainConfig rcfg = cfg;
        rcfg.start_iteration = 0;
        rcfg.total_iterations = train_cfg.refine_iterations;
        auto refined = refine(spec, std::move(trained.params), out.mask, train_windows, rcfg);
        out.log.insert(out.log.end(), refined.log.begin(), refined.log.end());
        out.params = std::move(refined.params);
    } else {
        zero_masked(trained.params.values, out.mask);
        out.params = std::move(trained.params);
    }
    return out;
}

// Mean squared error in the original (destandardized) scale.
double scaled_mse(const TrainedModel& model, std::span<const Window> windows) {
    std::vector<double> preds, targets;
    preds.reserve(windows.size());
    targets.reserve(windows.size());
    const auto& st = model.standardization;
    for (const Window& w : windows) {
        preds.push_back(predict(model.spec, model.params, model.mask, w.inputs)[0] * st.sd +
                        st.mean);
        targets.push_back(w.target[0] * st.sd + st.mean);
    }
    return mspe(preds, targets);
}

std::string log_to_jsonl(const std::vector<TrainLogEntry>& log) {
    std::string out;
    for (const auto& e : log) {
        json j{{"iter", e.iter},        {"phase", e.phase},
               {"loss", e.loss},        {"eta", e.eta},
               {"sigma0_sq", e.sigma0_sq}, {"temperature", e.temperature}};
        out += j.dump();
        out += "\n";
    }
    return out;
}

struct SeriesRun {
    TrainedModel model;
    SplitWindows windows;
    std::set<std::size_t> selected;
    std::optional<std::size_t> ar_order;
    std::size_t hidden_links = 0;
    double msfe_value = 0.0;
    std::optional<double> mspe_value;
};

SeriesRun run_series_pipeline(const DataConfig& data_cfg, const json& model_j,
                              const PriorConfig& prior_cfg, const AnnealSchedule& sched,
                              const TrainSection& train_cfg, std::uint64_t seed) {
    SeriesDataset series = make_series(data_cfg, seed);
    const std::size_t total = data_cfg.splits.train + data_cfg.splits.val + data_cfg.splits.test;
    if (series.size() < total) throw ConfigError("data: splits exceed series length");
    standardize(series, data_cfg.splits.train);

    auto all = window_series(series, data_cfg.window, data_cfg.M_l);
    SeriesRun run;
    run.windows = split_windows(all, data_cfg);

    const std::size_t exo = series.exogenous.empty() ? 0 : series.exogenous.front().size();
    NetworkSpec spec = parse_model(model_j, data_cfg.window + exo, 1);
    spec.exo_dim = exo;

    run.model = train_on_windows(spec, run.windows.train, prior_cfg, sched, train_cfg, seed);
    run.model.standardization = *series.standardization;

    run.selected = selected_input_lags(run.model.mask, spec);
    if (!run.selected.empty()) run.ar_order = *run.selected.rbegin();
    if (spec.kind == NetKind::ElmanRNN)
        run.hidden_links = count_hidden_links(run.model.mask, spec);
    run.msfe_value = scaled_mse(run.model, run.windows.train);
    if (!run.windows.test.empty()) run.mspe_value = scaled_mse(run.model, run.windows.test);
    return run;
}

json run_summary(const SeriesRun& run) {
    json j;
    j["msfe"] = run.msfe_value;
    if (run.mspe_value)
        j["mspe"] = *run.mspe_value;
    else
        j["mspe"] = nullptr;
    j["kept_fraction"] = run.model.kept_fraction;
    j["selected_lags"] = std::vector<std::size_t>(run.selected.begin(), run.selected.end());
    if (run.ar_order)
        j["ar_order"] = *run.ar_order;
    else
        j["ar_order"] = nullptr;
    j["hidden_links"] = run.hidden_links;
    j["sigma0_init_sq"] = run.model.sigma0_init_sq;
    return j;
}

Checkpoint make_checkpoint(const TrainedModel& model, std::uint64_t seed,
                           const DataConfig& data_cfg) {
    json meta;
    meta["seed"] = seed;
    meta["sigma0_init_sq"] = model.sigma0_init_sq;
    meta["kept_fraction"] = model.kept_fraction;
    meta["window"] = data_cfg.window;
    meta["M_l"] = data_cfg.M_l;
    meta["standardization"] = {{"mean", model.standardization.mean},
                               {"sd", model.standardization.sd}};
    return Checkpoint{model.spec, model.params, model.mask, meta.dump()};
}

}  // namespace

void cmd_simulate(const CommandOptions& opts) {
    json config = load_config(opts.config_path);
    check_keys(config, {"seed", "out_dir", "data"}, "config");
    const auto seed = get_required<std::uint64_t>(config, "seed", "config");
    if (!config.contains("data")) throw ConfigError("missing key \"data\" in config");
    DataConfig d = parse_data(config.at("data"));
    auto out_dir = resolve_out_dir(config, opts);

    json manifest;
    manifest["kind"] = d.kind;
    manifest["seed"] = seed;
    if (d.kind == "ar1_panel") {
        if (d.sequences == 0 || d.length == 0)
            throw ConfigError("ar1_panel requires sequences and length");
        auto panel = gen_ar1_panel(d.sequences, d.length, d.horizon, d.phi, seed);
        std::ofstream out(out_dir / "panel.csv");
        if (!out) throw std::runtime_error("cannot open panel.csv");
        char buf[64];
        for (const auto& seq : panel.sequences) {
            for (std::size_t t = 0; t < seq.size(); ++t) {
                std::snprintf(buf, sizeof buf, "%.17g", seq[t]);
                out << (t ? "," : "") << buf;
            }
            out << "\n";
        }
        manifest["params"] = {{"phi", d.phi},
                              {"sequences", d.sequences},
                              {"length", d.length},
                              {"horizon", d.horizon}};
    } else {
        if (d.n == 0) throw ConfigError("simulate requires data.n >= 1");
        SeriesDataset series = make_series(d, seed);
        write_csv((out_dir / "data.csv").string(), series);
        manifest["n"] = d.n;
        manifest["burn_in"] = d.burn_in;
        if (d.kind == "nlar") {
            manifest["params"] = {
                {"intercept", -0.17}, {"lag1", 0.85},   {"lag2", 0.14},    {"lag3", -0.31},
                {"lag7", 0.08},       {"g1_coef", 12.80}, {"g2_coef", 2.44},
            };
        } else if (d.kind == "expar") {
            manifest["params"] = {{"linear", 0.8}, {"exp_coef", -1.1}, {"exp_rate", 50.0}};
        }
    }
    write_text(out_dir / "manifest.json", manifest.dump(2));
    if (opts.verbose) std::cerr << "simulate: wrote " << out_dir.string() << "\n";
}

void cmd_train(const CommandOptions& opts) {
    json config = load_config(opts.config_path);
    check_keys(config, {"seed", "out_dir", "data", "model", "prior", "schedule", "train"},
               "config");
    const auto seed = get_required<std::uint64_t>(config, "seed", "config");
    for (const char* key : {"data", "model", "prior", "schedule", "train"})
        if (!config.contains(key))
            throw ConfigError("missing key \"" + std::string(key) + "\" in config");
    DataConfig d = parse_data(config.at("data"));
    PriorConfig prior_cfg = parse_prior(config.at("prior"));
    AnnealSchedule sched = parse_schedule(config.at("schedule"), prior_cfg);
    TrainSection train_cfg = parse_train(config.at("train"));
    auto out_dir = resolve_out_dir(config, opts);

    try {
        SeriesRun run = run_series_pipeline(d, config.at("model"), prior_cfg, sched, train_cfg,
                                            seed);
        save_checkpoint(make_checkpoint(run.model, seed, d),
                        (out_dir / "checkpoint.json").string());
        write_text(out_dir / "train_log.jsonl", log_to_jsonl(run.model.log));
        write_text(out_dir / "summary.json", run_summary(run).dump(2));
        if (opts.verbose) std::cerr << "train: wrote " << out_dir.string() << "\n";
    } catch (const DivergenceError& e) {
        // Preserve the last finite parameters for post-mortem inspection.
        const std::size_t exo = 0;
        NetworkSpec spec = parse_model(config.at("model"), d.window + exo, 1);
        StructureMask full = StructureMask::ones(e.last_params.values.size());
        Checkpoint cp{spec, e.last_params, full, json{{"diverged_at", e.iteration}}.dump()};
        save_checkpoint(cp, (out_dir / "checkpoint_last_good.json").string());
        throw;
    }
}

void cmd_select_order(const CommandOptions& opts) {
    json config = load_config(opts.config_path);
    check_keys(config,
               {"seed", "out_dir", "replicates", "data", "model", "prior", "schedule", "train"},
               "config");
    const auto seed = get_required<std::uint64_t>(config, "seed", "config");
    const auto replicates = get_required<std::size_t>(config, "replicates", "config");
    if (replicates < 1) throw ConfigError("replicates must be >= 1");
    for (const char* key : {"data", "model", "prior", "schedule", "train"})
        if (!config.contains(key))
            throw ConfigError("missing key \"" + std::string(key) + "\" in config");
    DataConfig d = parse_data(config.at("data"));
    if (d.kind == "csv") throw ConfigError("select-order requires a generator data.kind");
    PriorConfig prior_cfg = parse_prior(config.at("prior"));
    AnnealSchedule sched = parse_schedule(config.at("schedule"), prior_cfg);
    TrainSection train_cfg = parse_train(config.at("train"));
    auto out_dir = resolve_out_dir(config, opts);

    std::vector<SeriesRun> runs(replicates);
    std::vector<std::exception_ptr> errors(replicates);
    std::vector<std::thread> workers;
    workers.reserve(replicates);
    const json model_j = config.at("model");
    for (std::size_t r = 0; r < replicates; ++r) {
        workers.emplace_back([&, r] {
            try {
                runs[r] = run_series_pipeline(d, model_j, prior_cfg, sched, train_cfg,
                                              derive_stream_seed(seed, "replicate") + r);
            } catch (...) {
                errors[r] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    SelectionResult sel;
    sel.true_lags = d.true_lags.empty() ? default_true_lags(d.kind) : d.true_lags;
    std::vector<double> mspes, msfes;
    for (std::size_t r = 0; r < replicates; ++r) {
        const SeriesRun& run = runs[r];
        sel.selected_lags.push_back(run.selected);
        sel.hidden_links.push_back(run.hidden_links);
        sel.ar_orders.push_back(run.ar_order);
        msfes.push_back(run.msfe_value);
        if (run.mspe_value) mspes.push_back(*run.mspe_value);
        save_checkpoint(make_checkpoint(run.model, seed, d),
                        (out_dir / ("checkpoint_" + std::to_string(r) + ".json")).string());
        write_text(out_dir / ("summary_" + std::to_string(r) + ".json"),
                   run_summary(run).dump(2));
    }
    write_text(out_dir / "selection_summary.json",
               selection_summary_json(sel, mspes, msfes));
    if (opts.verbose) std::cerr << "select-order: wrote " << out_dir.string() << "\n";
}

void cmd_uq(const CommandOptions& opts) {
    json config = load_config(opts.config_path);
    check_keys(config, {"seed", "out_dir", "checkpoint", "data", "uq"}, "config");
    const auto seed = get_required<std::uint64_t>(config, "seed", "config");
    const auto checkpoint_path = get_required<std::string>(config, "checkpoint", "config");
    if (!std::filesystem::exists(checkpoint_path))
        throw ConfigError("checkpoint does not exist: " + checkpoint_path);
    if (!config.contains("data") || !config.contains("uq"))
        throw ConfigError("cmd_uq requires data and uq sections");
    DataConfig d = parse_data(config.at("data"));
    UqSection uq = parse_uq(config.at("uq"));
    auto out_dir = resolve_out_dir(config, opts);
    Checkpoint cp = load_checkpoint(checkpoint_path);

    json summary;
    summary["alpha"] = uq.alpha;

    if (d.kind == "ar1_panel") {
        if (d.splits.train < 2 || d.splits.test < 1)
            throw ConfigError("panel uq requires train >= 2 and test >= 1 sequence splits");
        const std::size_t total = d.splits.train + d.splits.val + d.splits.test;
        auto panel = gen_ar1_panel(total, d.length, d.horizon, d.phi, seed);
        auto windows = panel_windows(panel);
        std::span<const Window> all(windows);
        auto train = all.subspan(0, d.splits.train);
        auto cal = all.subspan(d.splits.train, d.splits.val);
        auto test = all.subspan(d.splits.train + d.splits.val, d.splits.test);

        auto prep = prepare_multi_horizon(cp.spec, cp.params, cp.mask, train, uq.hessian);
        std::vector<IntervalReport> reports;
        std::vector<std::vector<double>> targets;
        IntervalReport flat;
        flat.alpha = uq.alpha;
        flat.sigma2_hat = prep.sigma2_vec;
        for (const Window& w : test) {
            auto rep = intervals_multi_horizon(cp.spec, cp.params, cp.mask, prep, w.inputs,
                                               uq.alpha);
            flat.entries.insert(flat.entries.end(), rep.entries.begin(), rep.entries.end());
            reports.push_back(std::move(rep));
            targets.push_back(w.target);
        }
        write_interval_csv((out_dir / "intervals.csv").string(), flat);

        std::vector<double> flat_targets;
        for (const auto& t : targets)
            flat_targets.insert(flat_targets.end(), t.begin(), t.end());
        auto cov = coverage_and_length(flat, flat_targets);
        summary["pa"] = {{"joint_coverage", joint_coverage(reports, targets)},
                         {"coverage", cov.coverage},
                         {"mean_width", cov.mean_width},
                         {"median_width", cov.median_width}};

        if (opts.baseline == "conformal") {
            if (cal.empty()) throw ConfigError("conformal baseline requires data.splits.val");
            std::vector<std::vector<double>> cal_preds, cal_targets;
            for (const Window& w : cal) {
                cal_preds.push_back(predict(cp.spec, cp.params, cp.mask, w.inputs));
                cal_targets.push_back(w.target);
            }
            std::vector<IntervalReport> creports;
            IntervalReport cflat;
            cflat.alpha = uq.alpha;
            for (const Window& w : test) {
                auto pred = predict(cp.spec, cp.params, cp.mask, w.inputs);
                auto rep = split_conformal_baseline(cal_preds, cal_targets, pred, uq.alpha,
                                                    d.horizon);
                cflat.entries.insert(cflat.entries.end(), rep.entries.begin(),
                                     rep.entries.end());
                cflat.degenerate = cflat.degenerate || rep.degenerate;
                creports.push_back(std::move(rep));
            }
            write_interval_csv((out_dir / "intervals_conformal.csv").string(), cflat);
            auto ccov = coverage_and_length(cflat, flat_targets);
            summary["conformal"] = {{"joint_coverage", joint_coverage(creports, targets)},
                                    {"coverage", ccov.coverage},
                                    {"mean_width", ccov.mean_width},
                                    {"median_width", ccov.median_width},
                                    {"degenerate", cflat.degenerate}};
        }
    } else {
        SeriesDataset series = make_series(d, seed);
        standardize(series, d.splits.train);
        auto all = window_series(series, d.window, d.M_l);
        SplitWindows windows = split_windows(all, d);
        if (windows.test.empty()) throw ConfigError("uq requires a nonempty test split");

        const auto& st = *series.standardization;
        auto prep =
            prepare_one_step(cp.spec, cp.params, cp.mask, windows.train, uq.hessian);
        IntervalReport report;
        report.alpha = uq.alpha;
        report.sigma2_hat = {prep.sigma2 * st.sd * st.sd};
        std::vector<double> targets;
        for (const Window& w : windows.test) {
            auto e = interval_one_step(cp.spec, cp.params, cp.mask, prep, w.inputs, uq.alpha);
            // affine map back to the original scale
            report.entries.push_back({e.center * st.sd + st.mean, e.lower * st.sd + st.mean,
                                      e.upper * st.sd + st.mean,
                                      e.varsigma2 * st.sd * st.sd});
            targets.push_back(w.target[0] * st.sd + st.mean);
        }
        write_interval_csv((out_dir / "intervals.csv").string(), report);
        auto cov = coverage_and_length(report, targets);
        summary["pa"] = {{"coverage", cov.coverage},
                         {"mean_width", cov.mean_width},
                         {"median_width", cov.median_width},
                         {"sigma2_hat", report.sigma2_hat[0]}};

        if (opts.baseline == "conformal") {
            if (windows.val.empty())
                throw ConfigError("conformal baseline requires data.splits.val");
            std::vector<std::vector<double>> cal_preds, cal_targets;
            for (const Window& w : windows.val) {
                auto p = predict(cp.spec, cp.params, cp.mask, w.inputs);
                cal_preds.push_back({p[0] * st.sd + st.mean});
                cal_targets.push_back({w.target[0] * st.sd + st.mean});
            }
            IntervalReport creport;
            creport.alpha = uq.alpha;
            for (const Window& w : windows.test) {
                auto p = predict(cp.spec, cp.params, cp.mask, w.inputs);
                auto rep = split_conformal_baseline(cal_preds, cal_targets,
                                                    {p[0] * st.sd + st.mean}, uq.alpha, 1);
                creport.entries.push_back(rep.entries[0]);
                creport.degenerate = creport.degenerate || rep.degenerate;
            }
            write_interval_csv((out_dir / "intervals_conformal.csv").string(), creport);
            auto ccov = coverage_and_length(creport, targets);
            summary["conformal"] = {{"coverage", ccov.coverage},
                                    {"mean_width", ccov.mean_width},
                                    {"median_width", ccov.median_width},
                                    {"degenerate", creport.degenerate}};
        }
    }
    write_text(out_dir / "uq_summary.json", summary.dump(2));
    if (opts.verbose) std::cerr << "uq: wrote " << out_dir.string() << "\n";
}

}  // namespace parnn
