#include "doctest.h"
#include "oracles.hpp"

#include "monoflow/cli.hpp"
#include "monoflow/report.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace monoflow;

namespace {

const std::string kPrograms = std::string(MONOFLOW_SOURCE_DIR) + "/programs/";

std::string readFile(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "monoflow_test_report";
    std::filesystem::create_directories(dir);
    return dir / name;
}

CheckReport runProgram(const std::string& file, int threads = 1) {
    const dsl::Program p = dsl::parse(readFile(kPrograms + file));
    const auto jobs = dsl::lower(p);
    RunOptions o;
    o.threads = threads;
    return runCheck(jobs.at(0), dsl::hashHex(dsl::fnv1a(dsl::format(p))), o);
}

}  // namespace

TEST_CASE("trace CSV layout") {
    FunctionalTrace tr;
    tr.times = {0.5, 1.0};
    tr.values = {1.0 / 3.0, 0.5};
    tr.truncation = {1e-20, 0.0};
    const std::string csv = traceCsv(tr);
    CHECK(csv == "t,F,delta,truncation_estimate\n"
                 "0.5,0.33333333333333331,,9.9999999999999995e-21\n"
                 "1,0.5,0.16666666666666669,0\n");
}

TEST_CASE("indexed paths") {
    CHECK(indexedPath("out/trace.csv", 0, 1) == "out/trace.csv");
    CHECK(indexedPath("out/trace.csv", 1, 3) == "out/trace.1.csv");
    CHECK(combine({Outcome::Pass, Outcome::Fail}) == Outcome::Fail);
    CHECK(combine({Outcome::Fail, Outcome::Reject}) == Outcome::Reject);
    CHECK(combine({}) == Outcome::Pass);
}

TEST_CASE("geometric mean program traces exp(-1/(16t))") {
    const CheckReport r = runProgram("gmean.mq");
    REQUIRE(r.verdict == Outcome::Pass);
    REQUIRE(r.trace);
    double err = 0.0;
    for (std::size_t i = 0; i < r.trace->times.size(); ++i)
        err = std::max(err, std::abs(r.trace->values[i] - std::exp(-1.0 / (16 * r.trace->times[i]))));
    CHECK(err <= 1e-6);
    CHECK(r.trace->worstViolation >= -1e-8);
    CHECK(r.points.count == 2048);
    CHECK(r.points.worstResidual >= -1e-7);
}

TEST_CASE("cosh-weighted kernel traces exp(t)") {
    const CheckReport r = runProgram("cosh_weight.mq");
    REQUIRE(r.verdict == Outcome::Pass);
    double err = 0.0;
    for (std::size_t i = 0; i < r.trace->times.size(); ++i)
        err = std::max(err, std::abs(r.trace->values[i] - std::exp(r.trace->times[i])));
    CHECK(err <= 1e-5);
    CHECK(r.trace->direction == Direction::Nondecreasing);
}

TEST_CASE("rejections are reported with the rule") {
    const CheckReport r = runProgram("anisotropic_conv.mq");
    CHECK(r.verdict == Outcome::Reject);
    CHECK(r.rejectedRule.value() == "R7-convolution");
    const auto j = checkJson(r);
    CHECK(j["verdict"] == "reject");
    CHECK(j["rejection"]["rule"] == "R7-convolution");
    CHECK(j["pointChecks"].is_null());
}

TEST_CASE("report JSON carries hash, certificate, point checks and trace") {
    const CheckReport r = runProgram("harmonic.mq");
    const auto j = programJson({r});
    const auto& c = j["reports"][0];
    CHECK(c["programHash"].get<std::string>().size() == 16);
    CHECK(c["certificate"]["kind"] == "super");
    CHECK(c["certificate"]["liYau"].is_null());
    CHECK(c["certificate"]["diffusion"] == nlohmann::ordered_json::parse("[[1.0]]"));
    CHECK(c["pointChecks"]["count"] == 2048);
    CHECK(c["pointChecks"]["worstLiYauGap"].is_null());
    CHECK(c["trace"]["direction"] == "nondecreasing");
    CHECK(j["verdict"] == "pass");
}

TEST_CASE("cli exit codes") {
    const std::string out = scratch("r.json").string(), csv = scratch("t.csv").string();
    CHECK(runCli({"monoflow", "check", kPrograms + "gmean.mq", "--out", out, "--trace", csv}) == 0);
    CHECK(readFile(csv).rfind("t,F,delta,truncation_estimate\n", 0) == 0);
    CHECK(nlohmann::json::parse(readFile(out))["reports"][0]["trace"]["csvPath"] == csv);
    CHECK(runCli({"monoflow", "check", kPrograms + "anisotropic_conv.mq"}) == 3);
    CHECK(runCli({"monoflow", "check", "/nonexistent/file.mq"}) == 2);
    CHECK(runCli({"monoflow"}) == 2);
    CHECK(runCli({"monoflow", "scenario", "nope"}) == 2);
    CHECK(runCli({"monoflow", "check", kPrograms + "gmean.mq", "--threads", "0"}) == 2);
    CHECK(runCli({"monoflow", "list"}) == 0);
    CHECK(runCli({"monoflow", "scenario", "qp"}) == 0);
    CHECK(runCli({"monoflow", "scenario", "lqnorm"}) == 0);

    const auto bad = scratch("bad.mq").string();
    std::ofstream(bad) << "let u = heat(A=[[1]], mix=[(1.0, [0.0])])";
    CHECK(runCli({"monoflow", "check", bad}) == 2);
    // violation: tolerance too strict for the quadrature noise of the trace
    CHECK(runCli({"monoflow", "check", kPrograms + "gmean.mq", "--grid", "5", "--box", "-1", "1", "--tol", "1e-300"}) ==
          1);

    setenv("MONOFLOW_SEED", "x1", 1);
    CHECK(runCli({"monoflow", "list"}) == 2);
    unsetenv("MONOFLOW_SEED");
}

TEST_CASE("reports are identical across thread counts") {
    const std::string a = scratch("a.json").string(), b = scratch("b.json").string();
    const std::string ca = scratch("a.csv").string(), cb = scratch("b.csv").string();
    REQUIRE(runCli({"monoflow", "check", kPrograms + "tensor_compose.mq", "--out", a, "--trace", ca, "--threads", "1"}) ==
            0);
    REQUIRE(runCli({"monoflow", "check", kPrograms + "tensor_compose.mq", "--out", b, "--trace", cb, "--threads", "8"}) ==
            0);
    CHECK(readFile(ca) == readFile(cb));
    // JSON embeds the CSV path, so compare with that field normalized
    auto ja = nlohmann::json::parse(readFile(a)), jb = nlohmann::json::parse(readFile(b));
    ja["reports"][0]["trace"]["csvPath"] = jb["reports"][0]["trace"]["csvPath"] = "";
    CHECK(ja.dump() == jb.dump());
}

TEST_CASE("seed changes sample points but not the verdict") {
    const std::string a = scratch("s0.json").string(), b = scratch("s5.json").string();
    unsetenv("MONOFLOW_SEED");
    REQUIRE(runCli({"monoflow", "check", kPrograms + "young.mq", "--out", a}) == 0);
    setenv("MONOFLOW_SEED", "5", 1);
    REQUIRE(runCli({"monoflow", "check", kPrograms + "young.mq", "--out", b}) == 0);
    unsetenv("MONOFLOW_SEED");
    const auto ja = nlohmann::json::parse(readFile(a)), jb = nlohmann::json::parse(readFile(b));
    CHECK(ja["reports"][0]["pointChecks"]["worstResidual"] != jb["reports"][0]["pointChecks"]["worstResidual"]);
    CHECK(ja["reports"][0]["trace"] == jb["reports"][0]["trace"]);
}
