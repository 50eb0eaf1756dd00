#include "nr4der/params.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nr4der::tensorkit {

Matrix& ParameterSet::create(const std::string& name, std::size_t rows, std::size_t cols) {
    if (has(name)) throw ConfigError("parameter already exists: " + name);
    Slot slot;
    slot.value = Matrix(rows, cols);
    slot.grad = Matrix(rows, cols);
    auto [it, ok] = slots_.emplace(name, std::move(slot));
    (void)ok;
    return it->second.value;
}

Matrix& ParameterSet::create_uniform(const std::string& name, std::size_t rows, std::size_t cols,
                                     std::size_t fan_in, std::mt19937_64& rng) {
    Matrix& m = create(name, rows, cols);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : m.raw()) v = dist(rng);
    return m;
}

Matrix& ParameterSet::value(const std::string& name) {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second.value;
}

const Matrix& ParameterSet::value(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second.value;
}

Matrix& ParameterSet::grad(const std::string& name) {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second.grad;
}

const Matrix& ParameterSet::grad(const std::string& name) const {
    auto it = slots_.find(name);
    if (it == slots_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second.grad;
}

void ParameterSet::zero_grads() {
    for (auto& [name, slot] : slots_) slot.grad.fill(0.0);
}

std::vector<std::string> ParameterSet::names() const {
    std::vector<std::string> out;
    out.reserve(slots_.size());
    for (const auto& [name, slot] : slots_) out.push_back(name);
    return out;
}

std::size_t ParameterSet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, slot] : slots_) n += slot.value.size();
    return n;
}

void Adam::step(ParameterSet& ps) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, slot] : ps.slots()) {
        auto it = moments_.find(name);
        if (it == moments_.end()) {
            Moments mo;
            mo.m = Matrix(slot.value.rows(), slot.value.cols());
            mo.v = Matrix(slot.value.rows(), slot.value.cols());
            it = moments_.emplace(name, std::move(mo)).first;
        }
        double* m = it->second.m.data();
        double* v = it->second.v.data();
        double* w = slot.value.data();
        const double* g = slot.grad.data();
        for (std::size_t i = 0; i < slot.value.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

namespace {
constexpr const char* kCheckpointMagic = "nr4der.params.v1";
}

void save_checkpoint(const ParameterSet& ps, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot open checkpoint for writing: " + path);
    out << kCheckpointMagic << "\n" << ps.slots().size() << "\n";
    char buf[64];
    for (const auto& [name, slot] : ps.slots()) {
        out << name << " " << slot.value.rows() << " " << slot.value.cols() << "\n";
        const double* d = slot.value.data();
        for (std::size_t i = 0; i < slot.value.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%a", d[i]);
            out << buf << (((i + 1) % slot.value.cols() == 0) ? '\n' : ' ');
        }
    }
    if (!out) throw NumericError("checkpoint write failed: " + path);
}

ParameterSet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("checkpoint not found: " + path);
    std::string magic;
    std::getline(in, magic);
    if (magic != kCheckpointMagic)
        throw ParseError("bad checkpoint header in " + path + ": '" + magic + "'");
    std::size_t count = 0;
    in >> count;
    ParameterSet ps;
    for (std::size_t p = 0; p < count; ++p) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(in >> name >> rows >> cols))
            throw ParseError("truncated checkpoint: " + path);
        Matrix& m = ps.create(name, rows, cols);
        double* d = m.data();
        for (std::size_t i = 0; i < m.size(); ++i) {
            std::string tok;
            if (!(in >> tok)) throw ParseError("truncated checkpoint values: " + path);
            char* end = nullptr;
            d[i] = std::strtod(tok.c_str(), &end);
            if (end == tok.c_str()) throw ParseError("bad value in checkpoint: " + tok);
        }
    }
    return ps;
}

}  // namespace nr4der::tensorkit
