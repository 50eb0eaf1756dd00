#include "nr4der/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace nr4der::datamodel {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

int parse_int(const std::string& s, const std::string& what, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    }
}

double parse_double(const std::string& s, const std::string& what, std::size_t line_no) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    }
}

}  // namespace

Dataset::Dataset(std::vector<Exercise> catalog, std::vector<InteractionSequence> students,
                 int concept_count)
    : catalog_(std::move(catalog)), students_(std::move(students)),
      concept_count_(concept_count) {
    std::sort(catalog_.begin(), catalog_.end(),
              [](const Exercise& a, const Exercise& b) { return a.id < b.id; });
    std::sort(students_.begin(), students_.end(),
              [](const InteractionSequence& a, const InteractionSequence& b) {
                  return a.student_id < b.student_id;
              });
    for (std::size_t i = 0; i < catalog_.size(); ++i)
        exercise_by_id_[catalog_[i].id] = static_cast<int>(i);
    for (std::size_t i = 0; i < students_.size(); ++i)
        student_by_id_[students_[i].student_id] = static_cast<int>(i);
    validate();
}

void Dataset::validate() const {
    if (exercise_by_id_.size() != catalog_.size())
        throw InconsistencyError("duplicate exercise ids in catalog");
    if (student_by_id_.size() != students_.size())
        throw InconsistencyError("duplicate student ids");
    for (const Exercise& e : catalog_) {
        if (e.coverage.size() != static_cast<std::size_t>(concept_count_))
            throw InconsistencyError("exercise " + e.id + ": coverage length mismatch");
        if (e.concepts.empty())
            throw InconsistencyError("exercise " + e.id + ": covers no concept");
    }
    for (const InteractionSequence& s : students_) {
        if (s.items.empty())
            throw InconsistencyError("student " + s.student_id + ": empty sequence");
        int prev = -1;
        for (const Interaction& it : s.items) {
            if (it.exercise < 0 || it.exercise >= exercise_count())
                throw InconsistencyError("student " + s.student_id +
                                         ": unresolved exercise index");
            if (it.correct != 0 && it.correct != 1)
                throw InconsistencyError("student " + s.student_id + ": correctness not 0/1");
            if (it.position <= prev)
                throw InconsistencyError("student " + s.student_id +
                                         ": positions not strictly increasing");
            prev = it.position;
        }
    }
}

std::size_t Dataset::interaction_count() const {
    std::size_t n = 0;
    for (const auto& s : students_) n += s.items.size();
    return n;
}

int Dataset::exercise_index(const std::string& id) const {
    auto it = exercise_by_id_.find(id);
    return it == exercise_by_id_.end() ? -1 : it->second;
}

int Dataset::student_index(const std::string& id) const {
    auto it = student_by_id_.find(id);
    return it == student_by_id_.end() ? -1 : it->second;
}

Dataset ingest_interactions(std::istream& log, std::istream& concept_map) {
    // Concept map first; M is the largest concept index + 1.
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(concept_map, line)) throw ParseError("concept map: empty file");
    ++line_no;
    {
        auto hdr = split_csv_line(line);
        if (hdr.size() != 2 || hdr[0] != "exercise_id" || hdr[1] != "concept_ids")
            throw ParseError("concept map line 1: expected header exercise_id,concept_ids");
    }
    std::vector<Exercise> catalog;
    std::unordered_map<std::string, bool> seen;
    int max_concept = -1;
    while (std::getline(concept_map, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 2)
            throw ParseError("concept map line " + std::to_string(line_no) +
                             ": expected 2 fields");
        Exercise e;
        e.id = fields[0];
        if (seen.count(e.id))
            throw ParseError("concept map line " + std::to_string(line_no) +
                             ": duplicate exercise id " + e.id);
        seen[e.id] = true;
        std::stringstream ss(fields[1]);
        std::string tok;
        while (std::getline(ss, tok, ';')) {
            if (tok.empty()) continue;
            int k = parse_int(tok, "concept id", line_no);
            if (k < 0)
                throw ParseError("concept map line " + std::to_string(line_no) +
                                 ": negative concept id");
            e.concepts.push_back(k);
            max_concept = std::max(max_concept, k);
        }
        if (e.concepts.empty())
            throw ParseError("concept map line " + std::to_string(line_no) + ": exercise " +
                             e.id + " covers no concept");
        std::sort(e.concepts.begin(), e.concepts.end());
        e.concepts.erase(std::unique(e.concepts.begin(), e.concepts.end()), e.concepts.end());
        catalog.push_back(std::move(e));
    }
    if (catalog.empty()) throw ParseError("concept map: no exercises");
    const int M = max_concept + 1;
    for (Exercise& e : catalog) {
        e.coverage.assign(M, 0);
        for (int k : e.concepts) e.coverage[k] = 1;
    }
    // Resolve interactions against the id-sorted order the Dataset will use.
    std::sort(catalog.begin(), catalog.end(),
              [](const Exercise& a, const Exercise& b) { return a.id < b.id; });
    std::unordered_map<std::string, int> exercise_lookup;
    for (std::size_t i = 0; i < catalog.size(); ++i)
        exercise_lookup[catalog[i].id] = static_cast<int>(i);

    // Interaction log.
    line_no = 0;
    if (!std::getline(log, line)) throw ParseError("interaction log: empty file");
    ++line_no;
    bool has_timestamp = false;
    {
        auto hdr = split_csv_line(line);
        if (hdr.size() == 4 && hdr[3] == "timestamp")
            has_timestamp = true;
        else if (hdr.size() != 3)
            throw ParseError("interaction log line 1: expected header "
                             "student_id,exercise_id,correct[,timestamp]");
        if (hdr[0] != "student_id" || hdr[1] != "exercise_id" || hdr[2] != "correct")
            throw ParseError("interaction log line 1: expected header "
                             "student_id,exercise_id,correct[,timestamp]");
    }
    struct Row {
        int exercise;
        int correct;
        double timestamp;
    };
    std::unordered_map<std::string, std::vector<Row>> per_student;
    std::vector<std::string> student_order;
    std::size_t rows = 0;
    while (std::getline(log, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != (has_timestamp ? 4u : 3u))
            throw ParseError("interaction log line " + std::to_string(line_no) +
                             ": wrong field count");
        const std::string& sid = fields[0];
        const std::string& eid = fields[1];
        auto eit = exercise_lookup.find(eid);
        if (eit == exercise_lookup.end())
            throw ParseError("interaction log line " + std::to_string(line_no) + ": exercise '" +
                             eid + "' not in concept map");
        int correct = parse_int(fields[2], "correct flag", line_no);
        if (correct != 0 && correct != 1)
            throw ParseError("interaction log line " + std::to_string(line_no) +
                             ": correct must be 0 or 1, got " + fields[2]);
        double ts = has_timestamp ? parse_double(fields[3], "timestamp", line_no) : 0.0;
        auto [it, inserted] = per_student.try_emplace(sid);
        if (inserted) student_order.push_back(sid);
        it->second.push_back({eit->second, correct, ts});
        ++rows;
    }
    if (rows == 0) throw ParseError("interaction log: no interactions");

    std::vector<InteractionSequence> students;
    students.reserve(student_order.size());
    for (const std::string& sid : student_order) {
        auto& rs = per_student[sid];
        if (has_timestamp)
            std::stable_sort(rs.begin(), rs.end(),
                             [](const Row& a, const Row& b) { return a.timestamp < b.timestamp; });
        InteractionSequence seq;
        seq.student_id = sid;
        int pos = 0;
        for (const Row& r : rs) seq.items.push_back({r.exercise, r.correct, pos++});
        students.push_back(std::move(seq));
    }
    return Dataset(std::move(catalog), std::move(students), M);
}

Dataset ingest_files(const std::string& log_path, const std::string& concepts_path) {
    std::ifstream log(log_path);
    if (!log) throw MissingArtifactError("interaction log not found: " + log_path);
    std::ifstream cm(concepts_path);
    if (!cm) throw MissingArtifactError("concept map not found: " + concepts_path);
    return ingest_interactions(log, cm);
}

void write_dataset(const Dataset& ds, const std::string& log_path,
                   const std::string& concepts_path) {
    std::ofstream cm(concepts_path);
    if (!cm) throw MissingArtifactError("cannot write concept map: " + concepts_path);
    cm << "exercise_id,concept_ids\n";
    for (const Exercise& e : ds.catalog()) {
        cm << e.id << ",";
        for (std::size_t i = 0; i < e.concepts.size(); ++i)
            cm << (i ? ";" : "") << e.concepts[i];
        cm << "\n";
    }
    std::ofstream log(log_path);
    if (!log) throw MissingArtifactError("cannot write interaction log: " + log_path);
    log << "student_id,exercise_id,correct\n";
    for (const InteractionSequence& s : ds.students())
        for (const Interaction& it : s.items)
            log << s.student_id << "," << ds.exercise(it.exercise).id << "," << it.correct
                << "\n";
}

LongTailSplit partition_students(const Dataset& ds, double active_fraction) {
    if (!(active_fraction > 0.0 && active_fraction < 1.0))
        throw ConfigError("active fraction must be in (0,1)");
    const int n = ds.student_count();
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    // longest first; ties broken by ascending student id (== ascending index)
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const std::size_t la = ds.student(a).size(), lb = ds.student(b).size();
        if (la != lb) return la > lb;
        return a < b;
    });
    const int active_count =
        static_cast<int>(std::ceil(active_fraction * static_cast<double>(n)));
    LongTailSplit split;
    split.active_fraction = active_fraction;
    split.is_active.assign(n, 0);
    for (int i = 0; i < n; ++i) {
        if (i < active_count) {
            split.active.push_back(order[i]);
            split.is_active[order[i]] = 1;
        } else {
            split.inactive.push_back(order[i]);
        }
    }
    std::sort(split.active.begin(), split.active.end());
    std::sort(split.inactive.begin(), split.inactive.end());
    return split;
}

TrainTestSplit split_train_test(const Dataset& ds, double train_ratio) {
    if (!(train_ratio > 0.0 && train_ratio < 1.0))
        throw ConfigError("train ratio must be in (0,1)");
    std::vector<InteractionSequence> train_students, test_students;
    std::vector<std::string> skipped;
    for (const InteractionSequence& s : ds.students()) {
        const std::size_t len = s.size();
        // nudge so that e.g. 10 * (1 - 0.8) = 1.999... still floors to 2
        std::size_t test_len = static_cast<std::size_t>(
            std::floor(static_cast<double>(len) * (1.0 - train_ratio) + 1e-9));
        if (len < 2)
            test_len = 0;
        else if (test_len == 0)
            test_len = 1;
        const std::size_t train_len = len - test_len;
        InteractionSequence tr{s.student_id,
                               {s.items.begin(), s.items.begin() + train_len}};
        train_students.push_back(std::move(tr));
        if (test_len == 0) {
            skipped.push_back(s.student_id);
        } else {
            InteractionSequence te{s.student_id,
                                   {s.items.begin() + train_len, s.items.end()}};
            test_students.push_back(std::move(te));
        }
    }
    TrainTestSplit out;
    out.train = Dataset(ds.catalog(), std::move(train_students), ds.concept_count());
    out.test = Dataset(ds.catalog(), std::move(test_students), ds.concept_count());
    out.skipped_students = std::move(skipped);
    return out;
}

InteractionSequence truncate_sequence(const InteractionSequence& seq, int keep) {
    if (keep < 1) throw ConfigError("truncate_sequence: keep must be >= 1");
    const std::size_t k = std::min<std::size_t>(seq.size(), static_cast<std::size_t>(keep));
    InteractionSequence out;
    out.student_id = seq.student_id;
    out.items.assign(seq.items.end() - static_cast<long>(k), seq.items.end());
    return out;
}

}  // namespace nr4der::datamodel
