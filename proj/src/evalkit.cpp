#include "nr4der/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace nr4der::evalkit {

double ndcg_at_k(const std::vector<int>& ranked, const std::unordered_set<int>& relevant,
                 int k) {
    if (k < 1) throw ConfigError("ndcg_at_k: k must be >= 1");
    if (relevant.empty()) return 0.0;
    const int depth = std::min<int>(k, static_cast<int>(ranked.size()));
    double dcg = 0.0;
    for (int r = 0; r < depth; ++r)
        if (relevant.count(ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    const int ideal = std::min<int>(k, static_cast<int>(relevant.size()));
    double idcg = 0.0;
    for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
}

double recall_at_k(const std::vector<int>& ranked, const std::unordered_set<int>& relevant,
                   int k) {
    if (k < 1) throw ConfigError("recall_at_k: k must be >= 1");
    if (relevant.empty()) return 0.0;
    const int depth = std::min<int>(k, static_cast<int>(ranked.size()));
    int hits = 0;
    for (int r = 0; r < depth; ++r)
        if (relevant.count(ranked[r])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double precision_at_k(const std::vector<int>& ranked, const std::unordered_set<int>& relevant,
                      int k) {
    if (k < 1) throw ConfigError("precision_at_k: k must be >= 1");
    const int depth = std::min<int>(k, static_cast<int>(ranked.size()));
    int hits = 0;
    for (int r = 0; r < depth; ++r)
        if (relevant.count(ranked[r])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(k);
}

double f1_at_k(const std::vector<int>& ranked, const std::unordered_set<int>& relevant, int k) {
    const double p = precision_at_k(ranked, relevant, k);
    const double r = recall_at_k(ranked, relevant, k);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

double div_count(const std::vector<int>& exercises, const Dataset& ds) {
    std::vector<std::uint8_t> covered(ds.concept_count(), 0);
    for (int e : exercises)
        for (int c : ds.exercise(e).concepts) covered[c] = 1;
    int n = 0;
    for (std::uint8_t b : covered) n += b;
    return static_cast<double>(n);
}

std::vector<int> weight_order_ranking(const filter::CandidateSet& cs) {
    std::vector<int> out;
    out.reserve(cs.exercises.size());
    for (const auto& we : cs.exercises) out.push_back(we.exercise);
    return out;
}

std::vector<int> random_ranking(const filter::CandidateSet& cs, std::mt19937_64& rng) {
    std::vector<int> out = weight_order_ranking(cs);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

std::vector<int> greedy_coverage_ranking(const filter::CandidateSet& cs, const Dataset& ds) {
    std::vector<int> pool = weight_order_ranking(cs);
    std::sort(pool.begin(), pool.end());
    std::vector<int> out;
    out.reserve(pool.size());
    std::vector<std::uint8_t> covered(ds.concept_count(), 0);
    std::vector<std::uint8_t> used(pool.size(), 0);
    for (std::size_t round = 0; round < pool.size(); ++round) {
        int best = -1;
        int best_gain = -1;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (used[i]) continue;
            int gain = 0;
            for (int c : ds.exercise(pool[i]).concepts)
                if (!covered[c]) ++gain;
            if (gain > best_gain) {
                best_gain = gain;
                best = static_cast<int>(i);
            }
        }
        used[best] = 1;
        out.push_back(pool[best]);
        for (int c : ds.exercise(pool[best]).concepts) covered[c] = 1;
    }
    return out;
}

std::vector<std::unordered_set<int>> relevance_from_test(const Dataset& students,
                                                         const Dataset& test) {
    std::vector<std::unordered_set<int>> out(students.student_count());
    for (int s = 0; s < students.student_count(); ++s) {
        const int t = test.student_index(students.student(s).student_id);
        if (t < 0) continue;
        for (const auto& it : test.student(t).items) out[s].insert(it.exercise);
    }
    return out;
}

std::string MetricReport::key(const std::string& group, const std::string& method,
                              const std::string& metric, int k) {
    return group + "|" + method + "|" + metric + "|" + std::to_string(k);
}

double MetricReport::value(const std::string& group, const std::string& method,
                           const std::string& metric, int k) const {
    auto it = cells.find(key(group, method, metric, k));
    if (it == cells.end()) throw ConfigError("MetricReport: no cell " + group + "/" + method +
                                             "/" + metric + "@" + std::to_string(k));
    return it->second.mean();
}

namespace {
const char* kMetricNames[] = {"ndcg", "f1", "recall", "div"};
}

void MetricReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write metric report: " + path);
    out << "group,method,metric,k,value,students\n";
    char buf[64];
    for (const auto& group : groups)
        for (const auto& method : methods)
            for (const char* metric : kMetricNames)
                for (int k : ks) {
                    const auto it = cells.find(key(group, method, metric, k));
                    if (it == cells.end()) continue;
                    std::snprintf(buf, sizeof(buf), "%.9g", it->second.mean());
                    out << group << "," << method << "," << metric << "," << k << "," << buf
                        << "," << it->second.count << "\n";
                }
}

void MetricReport::write_div_curve_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot write diversity curve: " + path);
    out << "method,k,div\n";
    char buf[64];
    for (const auto& method : methods)
        for (int k : ks) {
            const auto it = cells.find(key("overall", method, "div", k));
            if (it == cells.end()) continue;
            std::snprintf(buf, sizeof(buf), "%.9g", it->second.mean());
            out << method << "," << k << "," << buf << "\n";
        }
}

std::string MetricReport::to_text() const {
    std::ostringstream out;
    char buf[64];
    for (const auto& group : groups) {
        out << "== " << group << " ==\n";
        out << "method";
        for (const char* metric : kMetricNames)
            for (int k : ks) out << "  " << metric << "@" << k;
        out << "\n";
        for (const auto& method : methods) {
            out << method;
            for (const char* metric : kMetricNames)
                for (int k : ks) {
                    const auto it = cells.find(key(group, method, metric, k));
                    if (it == cells.end()) {
                        out << "  -";
                        continue;
                    }
                    std::snprintf(buf, sizeof(buf), "  %.4f", it->second.mean());
                    out << buf;
                }
            out << "\n";
        }
    }
    out << "(students without held-out relevance: " << students_without_relevance << ")\n";
    return out.str();
}

MetricReport evaluate(const std::map<std::string, std::vector<std::vector<int>>>& rankings,
                      const std::vector<std::unordered_set<int>>& relevant,
                      const Dataset& students, const LongTailSplit& split,
                      const std::vector<int>& ks) {
    const int n = students.student_count();
    if (static_cast<int>(relevant.size()) != n)
        throw ShapeError("evaluate: relevance not aligned with students");
    for (const auto& [method, lists] : rankings)
        if (static_cast<int>(lists.size()) != n)
            throw ShapeError("evaluate: rankings for '" + method +
                             "' not aligned with students");
    if (ks.empty()) throw ConfigError("evaluate: no cutoffs");

    MetricReport report;
    report.ks = ks;
    for (const auto& [method, lists] : rankings) report.methods.push_back(method);

    for (const auto& [method, lists] : rankings) {
        // metric layout per student: [ndcg..., f1..., recall..., div...]
        const std::size_t width = 4 * ks.size();
        std::vector<double> values(static_cast<std::size_t>(n) * width, 0.0);
#pragma omp parallel for schedule(static)
        for (int s = 0; s < n; ++s) {
            double* row = &values[static_cast<std::size_t>(s) * width];
            for (std::size_t i = 0; i < ks.size(); ++i) {
                const int k = ks[i];
                row[i] = ndcg_at_k(lists[s], relevant[s], k);
                row[ks.size() + i] = f1_at_k(lists[s], relevant[s], k);
                row[2 * ks.size() + i] = recall_at_k(lists[s], relevant[s], k);
                const int depth = std::min<int>(k, static_cast<int>(lists[s].size()));
                std::vector<int> top(lists[s].begin(), lists[s].begin() + depth);
                row[3 * ks.size() + i] = div_count(top, students);
            }
        }
        // serial deterministic reduction
        for (int s = 0; s < n; ++s) {
            const bool has_rel = !relevant[s].empty();
            const std::string group = split.active_student(s) ? "active" : "inactive";
            const double* row = &values[static_cast<std::size_t>(s) * width];
            for (std::size_t i = 0; i < ks.size(); ++i) {
                const int k = ks[i];
                struct Entry {
                    const char* metric;
                    double v;
                    bool needs_rel;
                };
                const Entry entries[] = {{"ndcg", row[i], true},
                                         {"f1", row[ks.size() + i], true},
                                         {"recall", row[2 * ks.size() + i], true},
                                         {"div", row[3 * ks.size() + i], false}};
                for (const Entry& e : entries) {
                    if (e.needs_rel && !has_rel) continue;
                    for (const std::string& g : {std::string("overall"), group}) {
                        auto& cell = report.cells[MetricReport::key(g, method, e.metric, k)];
                        cell.sum += e.v;
                        cell.count += 1;
                    }
                }
            }
        }
    }
    for (int s = 0; s < n; ++s)
        if (relevant[s].empty()) ++report.students_without_relevance;
    return report;
}

}  // namespace nr4der::evalkit
