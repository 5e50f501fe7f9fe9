#include "twoshot/pipeline/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace twoshot::pipeline {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError("config: bad value '" + value + "' for " + key);
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "off" || value == "no") return false;
    throw ConfigError("config: bad boolean '" + value + "' for " + key);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

template <typename T>
Setter number(T RunConfig::*field) {
    return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); };
}

template <typename T>
Setter model_number(T model::ModelConfig::*field) {
    return [field](RunConfig& c, const std::string& k, const std::string& v) { c.model.*field = parse_number<T>(k, v); };
}

Setter flag(bool RunConfig::*field) {
    return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_bool(k, v); };
}

Setter text(std::string RunConfig::*field) {
    return [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; };
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table{
        {"data_dir", text(&RunConfig::data_dir)},
        {"split", text(&RunConfig::split_path)},
        {"checkpoint", text(&RunConfig::checkpoint)},
        {"bank", text(&RunConfig::bank_path)},
        {"out", text(&RunConfig::out_dir)},
        {"seed", number(&RunConfig::seed)},
        {"data_seed", number(&RunConfig::data_seed)},
        {"n_videos", number(&RunConfig::n_videos)},
        {"val_every", number(&RunConfig::val_every)},
        {"n_shots", number(&RunConfig::n_shots)},
        {"tau1", number(&RunConfig::tau1)},
        {"tau2", number(&RunConfig::tau2)},
        {"alpha", number(&RunConfig::alpha)},
        {"use_mean_teacher", flag(&RunConfig::use_mean_teacher)},
        {"normalize_by_gated", flag(&RunConfig::normalize_by_gated)},
        {"k_start", number(&RunConfig::k_start)},
        {"k_end", number(&RunConfig::k_end)},
        {"iterations", number(&RunConfig::iterations)},
        {"batch_size", number(&RunConfig::batch_size)},
        {"learning_rate", number(&RunConfig::learning_rate)},
        {"momentum", number(&RunConfig::momentum)},
        {"optimizer",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v == "sgd") {
                 c.optimizer = OptimizerKind::sgd_momentum;
             } else if (v == "adam") {
                 c.optimizer = OptimizerKind::adam;
             } else {
                 throw ConfigError("config: bad value '" + v + "' for " + k);
             }
         }},
        {"log_every", number(&RunConfig::log_every)},
        {"augment", flag(&RunConfig::augment)},
        {"update_bank", flag(&RunConfig::update_bank)},
        {"phase2_from_scratch", flag(&RunConfig::phase2_from_scratch)},
        {"bank_from_teacher", flag(&RunConfig::bank_from_teacher)},
        {"bank_mode", text(&RunConfig::bank_mode)},
        {"pca_frames", number(&RunConfig::pca_frames)},
        {"key_channels", model_number(&model::ModelConfig::key_channels)},
        {"value_channels", model_number(&model::ModelConfig::value_channels)},
        {"hidden_channels", model_number(&model::ModelConfig::hidden_channels)},
        {"max_objects", model_number(&model::ModelConfig::max_objects)},
    };
    return table;
}

}  // namespace

void validate(const RunConfig& cfg) {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    require(cfg.tau1 > 0.0 && cfg.tau1 <= 1.0, "tau1 must be in (0, 1]");
    require(cfg.tau2 > 0.0 && cfg.tau2 <= 1.0, "tau2 must be in (0, 1]");
    require(cfg.alpha >= 0.0 && cfg.alpha < 1.0, "alpha must be in [0, 1)");
    require(cfg.k_start >= 1 && cfg.k_start <= cfg.k_end, "need 1 <= k_start <= k_end");
    require(cfg.iterations >= 1, "iterations must be >= 1");
    require(cfg.batch_size >= 1, "batch_size must be >= 1");
    require(cfg.learning_rate > 0.0, "learning_rate must be > 0");
    require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "momentum must be in [0, 1)");
    require(cfg.log_every >= 1, "log_every must be >= 1");
    require(cfg.n_videos >= 1, "n_videos must be >= 1");
    require(cfg.val_every >= 2, "val_every must be >= 2");
    require(cfg.n_shots >= 2, "n_shots must be >= 2");
    require(cfg.pca_frames >= 1, "pca_frames must be >= 1");
    require(cfg.bank_mode == "bidirectional" || cfg.bank_mode == "unidirectional",
            "bank_mode must be bidirectional or unidirectional");
    try {
        model::validate(cfg.model);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
}

RunConfig parse_config(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
}

RunConfig load_config(const std::string& path, RunConfig base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string format_config(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "data_dir = " << c.data_dir << "\n"
       << "split = " << c.split_path << "\n"
       << "checkpoint = " << c.checkpoint << "\n"
       << "bank = " << c.bank_path << "\n"
       << "out = " << c.out_dir << "\n"
       << "seed = " << c.seed << "\n"
       << "data_seed = " << c.data_seed << "\n"
       << "n_videos = " << c.n_videos << "\n"
       << "val_every = " << c.val_every << "\n"
       << "n_shots = " << c.n_shots << "\n"
       << "tau1 = " << c.tau1 << "\n"
       << "tau2 = " << c.tau2 << "\n"
       << "alpha = " << c.alpha << "\n"
       << "use_mean_teacher = " << (c.use_mean_teacher ? "true" : "false") << "\n"
       << "normalize_by_gated = " << (c.normalize_by_gated ? "true" : "false") << "\n"
       << "k_start = " << c.k_start << "\n"
       << "k_end = " << c.k_end << "\n"
       << "iterations = " << c.iterations << "\n"
       << "batch_size = " << c.batch_size << "\n"
       << "learning_rate = " << c.learning_rate << "\n"
       << "momentum = " << c.momentum << "\n"
       << "optimizer = " << (c.optimizer == OptimizerKind::adam ? "adam" : "sgd") << "\n"
       << "log_every = " << c.log_every << "\n"
       << "augment = " << (c.augment ? "true" : "false") << "\n"
       << "update_bank = " << (c.update_bank ? "true" : "false") << "\n"
       << "phase2_from_scratch = " << (c.phase2_from_scratch ? "true" : "false") << "\n"
       << "bank_from_teacher = " << (c.bank_from_teacher ? "true" : "false") << "\n"
       << "bank_mode = " << c.bank_mode << "\n"
       << "pca_frames = " << c.pca_frames << "\n"
       << "key_channels = " << c.model.key_channels << "\n"
       << "value_channels = " << c.model.value_channels << "\n"
       << "hidden_channels = " << c.model.hidden_channels << "\n"
       << "max_objects = " << c.model.max_objects << "\n";
    return os.str();
}

std::string split_file(const RunConfig& cfg) {
    return cfg.split_path.empty() ? cfg.data_dir + "/split.txt" : cfg.split_path;
}

}  // namespace twoshot::pipeline
