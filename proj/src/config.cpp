#include "nr4der/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace nr4der::config {

void RunConfig::validate() const {
    if (!(train_ratio > 0.0 && train_ratio < 1.0))
        throw ConfigError("data.train_ratio must be in (0,1)");
    if (!(active_fraction > 0.0 && active_fraction < 1.0))
        throw ConfigError("data.active_fraction must be in (0,1)");
    if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("filter.delta must be in [0,1]");
    if (candidates < 1) throw ConfigError("filter.candidates must be >= 1");
    if (top_k < 1) throw ConfigError("rerank.k must be >= 1");
    if (mode != "det" && mode != "prob") throw ConfigError("rerank.mode must be det or prob");
    if (eval_ks.empty()) throw ConfigError("eval.ks must be nonempty");
    for (int k : eval_ks)
        if (k < 1) throw ConfigError("eval.ks entries must be >= 1");
    kcmp.validate();
    rerank.validate();
}

void RunConfig::finalize() {
    synth.seed = seed;
    kcmp.seed = seed;
    rerank.seed = seed;
    rerank.context_dim = kcmp.dim;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Field {
    enum Kind { Int, Size, Double, Bool, U64, Str, IntList } kind;
    void* ptr;
};

std::map<std::string, Field> field_map(RunConfig& c) {
    return {
        {"seed", {Field::U64, &c.seed}},
        {"data.train_ratio", {Field::Double, &c.train_ratio}},
        {"data.active_fraction", {Field::Double, &c.active_fraction}},
        {"synth.students", {Field::Int, &c.synth.students}},
        {"synth.concepts", {Field::Int, &c.synth.concepts}},
        {"synth.exercises", {Field::Int, &c.synth.exercises}},
        {"synth.skew", {Field::Double, &c.synth.skew}},
        {"synth.frontier_bias", {Field::Double, &c.synth.frontier_bias}},
        {"synth.max_length", {Field::Int, &c.synth.max_length}},
        {"synth.min_length", {Field::Int, &c.synth.min_length}},
        {"synth.gain", {Field::Double, &c.synth.gain}},
        {"synth.init_mastery_lo", {Field::Double, &c.synth.init_mastery_lo}},
        {"synth.init_mastery_hi", {Field::Double, &c.synth.init_mastery_hi}},
        {"kcmp.dim", {Field::Size, &c.kcmp.dim}},
        {"kcmp.emb_dim", {Field::Size, &c.kcmp.emb_dim}},
        {"kcmp.epochs", {Field::Int, &c.kcmp.epochs}},
        {"kcmp.batch", {Field::Int, &c.kcmp.batch_size}},
        {"kcmp.lr", {Field::Double, &c.kcmp.learning_rate}},
        {"enhancer.lambda_s", {Field::Double, &c.kcmp.lambda_s}},
        {"enhancer.beta", {Field::Double, &c.kcmp.beta}},
        {"enhancer.truncation", {Field::Int, &c.kcmp.truncation}},
        {"enhancer.enabled", {Field::Bool, &c.kcmp.enhancer_enabled}},
        {"filter.delta", {Field::Double, &c.delta}},
        {"filter.candidates", {Field::Int, &c.candidates}},
        {"filter.exclude_correct", {Field::Bool, &c.exclude_correct}},
        {"rerank.q_s", {Field::Size, &c.rerank.q_s}},
        {"rerank.q_e", {Field::Size, &c.rerank.q_e}},
        {"rerank.q_h", {Field::Size, &c.rerank.q_h}},
        {"rerank.heads", {Field::Size, &c.rerank.heads}},
        {"rerank.epochs", {Field::Int, &c.rerank.epochs}},
        {"rerank.batch", {Field::Int, &c.rerank.batch_size}},
        {"rerank.lr", {Field::Double, &c.rerank.learning_rate}},
        {"rerank.tail_fraction", {Field::Double, &c.rerank.tail_fraction}},
        {"rerank.k", {Field::Int, &c.top_k}},
        {"rerank.mode", {Field::Str, &c.mode}},
        {"eval.ks", {Field::IntList, &c.eval_ks}},
    };
}

void assign_field(const Field& f, const std::string& key, const std::string& value) {
    try {
        switch (f.kind) {
            case Field::Int:
                *static_cast<int*>(f.ptr) = std::stoi(value);
                break;
            case Field::Size:
                *static_cast<std::size_t*>(f.ptr) = std::stoul(value);
                break;
            case Field::Double:
                *static_cast<double*>(f.ptr) = std::stod(value);
                break;
            case Field::Bool:
                if (value == "true" || value == "1")
                    *static_cast<bool*>(f.ptr) = true;
                else if (value == "false" || value == "0")
                    *static_cast<bool*>(f.ptr) = false;
                else
                    throw ConfigError("expected bool");
                break;
            case Field::U64:
                *static_cast<std::uint64_t*>(f.ptr) = std::stoull(value);
                break;
            case Field::Str:
                *static_cast<std::string*>(f.ptr) = value;
                break;
            case Field::IntList: {
                auto* list = static_cast<std::vector<int>*>(f.ptr);
                list->clear();
                std::stringstream ss(value);
                std::string tok;
                while (std::getline(ss, tok, ','))
                    if (!tok.empty()) list->push_back(std::stoi(tok));
                break;
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("bad value for " + key + ": '" + value + "'");
    }
}

std::string field_to_string(const Field& f) {
    switch (f.kind) {
        case Field::Int:
            return std::to_string(*static_cast<const int*>(f.ptr));
        case Field::Size:
            return std::to_string(*static_cast<const std::size_t*>(f.ptr));
        case Field::Double:
            return fmt_double(*static_cast<const double*>(f.ptr));
        case Field::Bool:
            return *static_cast<const bool*>(f.ptr) ? "true" : "false";
        case Field::U64:
            return std::to_string(*static_cast<const std::uint64_t*>(f.ptr));
        case Field::Str:
            return *static_cast<const std::string*>(f.ptr);
        case Field::IntList: {
            const auto* list = static_cast<const std::vector<int>*>(f.ptr);
            std::string out;
            for (std::size_t i = 0; i < list->size(); ++i)
                out += (i ? "," : "") + std::to_string((*list)[i]);
            return out;
        }
    }
    return {};
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    auto fields = field_map(cfg);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t"));
        if (trimmed.empty() || trimmed[0] == '#') continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(line_no) + ": expected key=value");
        std::string key = trimmed.substr(0, eq);
        std::string value = trimmed.substr(eq + 1);
        key.erase(key.find_last_not_of(" \t") + 1);
        value.erase(0, value.find_first_not_of(" \t"));
        auto it = fields.find(key);
        if (it == fields.end())
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" +
                              key + "'");
        assign_field(it->second, key, value);
    }
    cfg.finalize();
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("config file not found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
    RunConfig copy = cfg;
    auto fields = field_map(copy);
    std::string out;
    for (const auto& [key, field] : fields)
        out += key + "=" + field_to_string(field) + "\n";
    return out;
}

void save_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write config: " + path);
    out << serialize_config(cfg);
}

void write_manifest(const Manifest& m, const std::string& path) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["command"] = m.command;
    j["seed"] = m.config.seed;
    j["wall_clock_seconds"] = m.wall_clock_seconds;
    j["outputs"] = m.outputs;
    nlohmann::json cfg;
    RunConfig copy = m.config;
    // reuse the flat key=value view for the snapshot
    std::istringstream lines(serialize_config(copy));
    std::string line;
    while (std::getline(lines, line)) {
        const auto eq = line.find('=');
        cfg[line.substr(0, eq)] = line.substr(eq + 1);
    }
    j["config"] = cfg;

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw MissingArtifactError("cannot write manifest: " + tmp);
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace nr4der::config
