#ifndef NR4DER_CONFIG_HPP
#define NR4DER_CONFIG_HPP

#include <string>
#include <vector>

#include "nr4der/kcmp.hpp"
#include "nr4der/reranker.hpp"
#include "nr4der/synthetic.hpp"

namespace nr4der::config {

// Every knob of a run, with defaults from the experiment protocol. The file
// form is flat `section.key=value` lines; parsing and serialization
// round-trip losslessly.
struct RunConfig {
    std::uint64_t seed = 42;

    // data
    double train_ratio = 0.8;       // 8:2
    double active_fraction = 0.05;  // top 5% by interaction count

    datamodel::SyntheticConfig synth;

    // filter / enhancer / kcmp
    kcmp::KcmpConfig kcmp;
    double delta = 0.7;
    int candidates = 50;  // L
    bool exclude_correct = true;

    reranker::RerankConfig rerank;
    int top_k = 10;
    std::string mode = "prob";  // det | prob

    std::vector<int> eval_ks = {1, 3, 5, 10};

    void validate() const;
    // Propagate the shared seed and coupled dimensions into the sub-configs.
    void finalize();
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

// Run provenance: config snapshot, produced files, wall clock. Written
// atomically (temp file + rename) at the end of a command.
struct Manifest {
    std::string command;
    RunConfig config;
    std::vector<std::string> outputs;
    double wall_clock_seconds = 0.0;
};

void write_manifest(const Manifest& m, const std::string& path);

}  // namespace nr4der::config

#endif
