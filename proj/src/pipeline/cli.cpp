#include "twoshot/pipeline/cli.hpp"

#include "twoshot/pipeline/checkpoint.hpp"
#include "twoshot/pipeline/evaluation.hpp"
#include "twoshot/pipeline/experiment.hpp"
#include "twoshot/pipeline/pca.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

namespace twoshot::pipeline {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::string> settings;
    std::vector<std::string> inputs;  // report
};

RunConfig resolve(const Options& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out_dir = *o.out;
    for (const auto& s : o.settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    validate(cfg);
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.out_dir);
    return (fs::path(cfg.out_dir) / name).string();
}

std::string train_dir(const RunConfig& cfg) { return (fs::path(cfg.data_dir) / "train").string(); }
std::string val_dir(const RunConfig& cfg) { return (fs::path(cfg.data_dir) / "val").string(); }

std::vector<video::VideoClip> load_clips(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("no dataset at '" + dir + "' (run gen-data first)");
    auto clips = video::load_dataset(dir);
    if (clips.empty()) throw std::runtime_error("dataset directory '" + dir + "' holds no clips");
    return clips;
}

ExperimentData load_data(const RunConfig& cfg, bool need_split) {
    ExperimentData d;
    d.train = load_clips(train_dir(cfg));
    d.validation = load_clips(val_dir(cfg));
    if (need_split) d.split = video::load_split(split_file(cfg));
    return d;
}

const std::string& require_path(const std::string& value, const char* key) {
    if (value.empty()) throw ConfigError(std::string("this mode needs '") + key + "' (use --set " + key + "=PATH)");
    return value;
}

// Loads cfg.checkpoint and checks its shapes against the configured model.
ad::ParameterSet<float> load_init(const RunConfig& cfg) {
    auto ckpt = load_checkpoint(require_path(cfg.checkpoint, "checkpoint"));
    if (!(infer_model_config(ckpt.params, cfg.model.max_objects) == cfg.model)) {
        throw ConfigError("checkpoint '" + cfg.checkpoint + "' does not match the configured model channels");
    }
    return std::move(ckpt.params);
}

void save_params(const ad::ParameterSet<float>& params, Phase phase, const RunConfig& cfg, const std::string& name) {
    Checkpoint c;
    c.iteration = static_cast<std::uint64_t>(cfg.iterations);
    c.phase = static_cast<std::uint8_t>(phase);
    c.params = params.clone();
    save_checkpoint(c, out_path(cfg, name));
}

void write_run(const RunConfig& cfg, const std::string& stem, const TrainResult& r, Phase phase) {
    save_params(r.student, phase, cfg, stem + (r.teacher ? "_student.tsvl" : ".tsvl"));
    if (r.teacher) save_params(*r.teacher, phase, cfg, stem + "_teacher.tsvl");
    write_text(out_path(cfg, stem + "_log.csv"), log_csv(r.log));
    write_text(out_path(cfg, stem + "_config.txt"), format_config(cfg));
    std::printf("%s: %d iterations, relaxed triplets %ld\n", stem.c_str(), cfg.iterations, r.relaxed_triplets);
}

void cmd_gen_data(const RunConfig& cfg) {
    const auto all = video::make_dataset(cfg.n_videos, cfg.data_seed);
    const auto part = video::partition_dataset(all, cfg.val_every);
    for (const auto& d : {train_dir(cfg), val_dir(cfg)}) {
        if (fs::exists(d)) fs::remove_all(d);
        fs::create_directories(d);
    }
    video::save_dataset(part.train, train_dir(cfg));
    video::save_dataset(part.validation, val_dir(cfg));
    std::printf("wrote %zu training and %zu validation clips to %s\n", part.train.size(), part.validation.size(),
                cfg.data_dir.c_str());
}

void cmd_split(const RunConfig& cfg) {
    const auto train = load_clips(train_dir(cfg));
    const auto split = video::make_two_shot_split(train, cfg.seed, cfg.n_shots);
    video::save_split(split, split_file(cfg));
    const auto st = video::dataset_stats(train, split);
    std::printf("split: %d videos, %d of %d frames labeled (%.2f%%) -> %s\n", st.videos, st.labeled_frames, st.frames,
                100.0 * st.labeled_fraction, split_file(cfg).c_str());
}

void cmd_train(const RunConfig& cfg, Phase phase) {
    const auto data = load_data(cfg, phase != Phase::oracle);
    std::optional<ad::ParameterSet<float>> init;
    if (!cfg.checkpoint.empty()) init = load_init(cfg);
    const auto r = train(cfg, phase, data.train, data.split, init ? &*init : nullptr);
    write_run(cfg, phase_name(phase), r, phase);
}

void cmd_build_bank(const RunConfig& cfg) {
    require_path(cfg.checkpoint, "checkpoint");
    const auto data = load_data(cfg, true);
    const auto params = load_init(cfg);
    bank::BuildStats stats;
    const auto b = build_bank_with(cfg.model, params, data, bank::mode_from_name(cfg.bank_mode), &stats);
    const auto path = out_path(cfg, "bank.plbk");
    bank::save_bank(b, path);
    std::printf("bank (%s): %d videos, %d pseudo frames, %d fallback frames, mean J %.4f -> %s\n", cfg.bank_mode.c_str(),
                stats.videos, stats.pseudo_frames, stats.fallback_frames,
                bank::bank_quality(b, data.train, data.split).mean_j, path.c_str());
}

void cmd_train_phase2(const RunConfig& cfg) {
    require_path(cfg.bank_path, "bank");
    if (!cfg.phase2_from_scratch) require_path(cfg.checkpoint, "checkpoint");
    const auto data = load_data(cfg, true);
    auto b = bank::load_bank(require_path(cfg.bank_path, "bank"));
    const double before = bank::bank_quality(b, data.train, data.split).mean_j;
    std::optional<ad::ParameterSet<float>> init;
    if (!cfg.phase2_from_scratch) init = load_init(cfg);
    const auto r = train(cfg, Phase::phase2, data.train, data.split, init ? &*init : nullptr, &b);
    write_run(cfg, "phase2", r, Phase::phase2);
    bank::save_bank(b, out_path(cfg, "phase2_bank.plbk"));
    std::printf("bank mean J %.4f -> %.4f, %ld labels changed\n", before,
                bank::bank_quality(b, data.train, data.split).mean_j, r.bank_pixels_changed);
}

void cmd_eval(const RunConfig& cfg) {
    require_path(cfg.checkpoint, "checkpoint");
    const auto clips = load_clips(val_dir(cfg));
    const auto ckpt = load_checkpoint(cfg.checkpoint);
    const auto model = infer_model_config(ckpt.params, cfg.model.max_objects);
    const auto res = evaluate_model(model, ckpt.params, clips);
    const auto path = out_path(cfg, "eval_" + fs::path(cfg.checkpoint).stem().string() + ".csv");
    metrics::write_eval_csv(res, path);
    std::printf("%s  -> %s\n", metrics::summary_line(res).c_str(), path.c_str());
}

void cmd_report(const RunConfig& cfg, const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw ConfigError("report needs at least one evaluation CSV");
    std::vector<ReportRow> rows;
    for (const auto& in : inputs) rows.push_back(read_eval_summary(in));
    write_text(out_path(cfg, "report.md"), report_markdown(rows));
    write_text(out_path(cfg, "report.csv"), report_csv(rows));
    std::cout << report_markdown(rows);
}

void cmd_pca(const RunConfig& cfg) {
    require_path(cfg.checkpoint, "checkpoint");
    const auto clips = load_clips(val_dir(cfg));
    const auto ckpt = load_checkpoint(cfg.checkpoint);
    const model::Segmenter<float> net(infer_model_config(ckpt.params, cfg.model.max_objects), ckpt.params);
    const auto points = pca_features(net, clips, cfg.pca_frames);
    const auto path = out_path(cfg, "pca.csv");
    write_text(path, pca_csv(points));
    std::printf("%zu projected features -> %s\n", points.size(), path.c_str());
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Two-shot video object segmentation on synthetic clips"};
    app.require_subcommand(1);
    Options o;
    app.add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "RNG seed (split drawing and training)");
    app.add_option("--out", o.out, "output directory");
    app.add_option("--set", o.settings, "override a config key, key=value (repeatable)");

    struct Mode {
        const char* name;
        const char* help;
    };
    const Mode modes[] = {
        {"gen-data", "generate the synthetic dataset into data_dir/{train,val}"},
        {"split", "draw the two-shot split of the training clips"},
        {"train-phase1", "two-shot training with pseudo labels (optionally from checkpoint)"},
        {"build-bank", "run a checkpoint over the training clips to build the pseudo-label bank"},
        {"train-phase2", "retrain on the bank from checkpoint, updating the bank online"},
        {"train-baseline", "naive two-shot baseline on the labeled frames only"},
        {"train-oracle", "fully supervised reference on every frame"},
        {"eval", "evaluate checkpoint on the validation clips"},
        {"report", "tabulate evaluation CSVs"},
        {"pca-vis", "2-D PCA projection of key features"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& m : modes) {
        auto* s = app.add_subcommand(m.name, m.help);
        s->fallthrough();
        subs[m.name] = s;
    }
    subs["report"]->add_option("csv", o.inputs, "evaluation CSV files")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const RunConfig cfg = resolve(o);
        const std::string mode = app.get_subcommands().front()->get_name();
        if (mode == "gen-data") cmd_gen_data(cfg);
        else if (mode == "split") cmd_split(cfg);
        else if (mode == "train-phase1") cmd_train(cfg, Phase::phase1);
        else if (mode == "build-bank") cmd_build_bank(cfg);
        else if (mode == "train-phase2") cmd_train_phase2(cfg);
        else if (mode == "train-baseline") cmd_train(cfg, Phase::naive);
        else if (mode == "train-oracle") cmd_train(cfg, Phase::oracle);
        else if (mode == "eval") cmd_eval(cfg);
        else if (mode == "report") cmd_report(cfg, o.inputs);
        else cmd_pca(cfg);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}

}  // namespace twoshot::pipeline
