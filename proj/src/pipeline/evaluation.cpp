#include "twoshot/pipeline/evaluation.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace twoshot::pipeline {

metrics::SequencePredictor sequence_predictor(const model::Segmenter<float>& net) {
    return [&net](const video::VideoClip& clip, const video::LabelMap& first) {
        const auto seq = net.predict_sequence(clip, 0, first, model::Direction::forward, clip.num_objects);
        std::vector<video::LabelMap> out;
        out.reserve(seq.probs.size());
        for (const auto& p : seq.probs) out.push_back(p.hard_labels());
        return out;
    };
}

bank::DirectionalPredictor directional_predictor(const model::Segmenter<float>& net) {
    return [&net](const video::VideoClip& clip, int r, const video::LabelMap& mask, model::Direction d) {
        const auto seq = net.predict_sequence(clip, r, mask, d, clip.num_objects);
        std::vector<video::LabelMap> out;
        out.reserve(seq.probs.size());
        for (const auto& p : seq.probs) out.push_back(p.hard_labels());
        return out;
    };
}

metrics::EvalResult evaluate_model(const model::ModelConfig& cfg, const ad::ParameterSet<float>& params,
                                   const std::vector<video::VideoClip>& clips) {
    const model::Segmenter<float> net(cfg, params);
    return metrics::evaluate_dataset(clips, sequence_predictor(net));
}

ReportRow read_eval_summary(const std::string& csv_path, const std::string& run) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot read '" + csv_path + "'");
    std::string line, last;
    std::getline(in, line);
    if (line != "video_id,object_id,frame,J,F") throw std::runtime_error(csv_path + ": not an evaluation CSV");
    while (std::getline(in, line)) {
        if (!line.empty()) last = line;
    }
    ReportRow row;
    row.run = run.empty() ? std::filesystem::path(csv_path).stem().string() : run;
    if (std::sscanf(last.c_str(), "ALL,ALL,ALL,%lf,%lf", &row.j, &row.f) != 2) {
        throw std::runtime_error(csv_path + ": missing aggregate row");
    }
    row.g = 0.5 * (row.j + row.f);
    return row;
}

std::string report_markdown(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os << "| run | J | F | G |\n|---|---:|---:|---:|\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "| %s | %.4f | %.4f | %.4f |\n", r.run.c_str(), r.j, r.f, r.g);
        os << buf;
    }
    return os.str();
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream os;
    os << "run,J,F,G\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f\n", r.run.c_str(), r.j, r.f, r.g);
        os << buf;
    }
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace twoshot::pipeline
