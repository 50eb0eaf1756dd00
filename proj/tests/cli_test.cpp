// Exercises the installed CLI binary end to end: argument handling, exit
// codes and the Table-style ingest summary. The binary path comes from the
// build system.

#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#ifndef NR4DER_CLI_PATH
#define NR4DER_CLI_PATH "nr4der"
#endif

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(NR4DER_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    char buf[512];
    while (fgets(buf, sizeof(buf), pipe)) r.output += buf;
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("ingest prints a dataset summary and succeeds on a valid micro log") {
    const std::string dir = "/tmp/nr4der_cli_ingest";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    {
        std::ofstream log(dir + "/log.csv");
        log << "student_id,exercise_id,correct\nalice,e1,1\nalice,e2,0\nalice,e1,1\n";
        std::ofstream cm(dir + "/cm.csv");
        cm << "exercise_id,concept_ids\ne1,0\ne2,0;1\n";
    }
    RunResult r = run_cli("ingest --log " + dir + "/log.csv --concepts " + dir +
                          "/cm.csv --out " + dir + "/out");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("Students") != std::string::npos);
    CHECK(r.output.find("Exercises") != std::string::npos);
    CHECK(r.output.find("Interactions") != std::string::npos);
    CHECK(std::filesystem::exists(dir + "/out/interactions.csv"));
    CHECK(std::filesystem::exists(dir + "/out/manifest.json"));
    std::filesystem::remove_all(dir);
}

TEST_CASE("missing inputs exit with the missing-artifact code") {
    RunResult r = run_cli("ingest --log /nonexistent.csv --concepts /also_missing.csv "
                          "--out /tmp/nr4der_cli_x");
    CHECK(r.exit_code == 3);
}

TEST_CASE("malformed logs exit with the input code") {
    const std::string dir = "/tmp/nr4der_cli_bad";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    {
        std::ofstream log(dir + "/log.csv");
        log << "student_id,exercise_id,correct\nalice,e1,7\n";
        std::ofstream cm(dir + "/cm.csv");
        cm << "exercise_id,concept_ids\ne1,0\n";
    }
    RunResult r = run_cli("ingest --log " + dir + "/log.csv --concepts " + dir +
                          "/cm.csv --out " + dir + "/out");
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("correct") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("recommend without checkpoints exits with the missing-artifact code") {
    const std::string dir = "/tmp/nr4der_cli_norec";
    std::filesystem::remove_all(dir);
    RunResult synth = run_cli("synth --seed 3 --out " + dir + "/data");
    CHECK(synth.exit_code == 0);
    RunResult r = run_cli("recommend --data " + dir + "/data --models " + dir +
                          "/nomodels --out " + dir + "/recs");
    CHECK(r.exit_code == 3);
    std::filesystem::remove_all(dir);
}

TEST_CASE("unknown config keys exit with the input code") {
    const std::string dir = "/tmp/nr4der_cli_cfg";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    {
        std::ofstream cfg(dir + "/cfg.txt");
        cfg << "bogus.key=1\n";
    }
    RunResult r = run_cli("synth --config " + dir + "/cfg.txt --out " + dir + "/out");
    CHECK(r.exit_code == 2);
    std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
