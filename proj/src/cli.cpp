#include "monoflow/cli.hpp"

#include "monoflow/report.hpp"

#include "CLI11.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace monoflow {

namespace {

struct Flags {
    std::string out, trace;
    std::optional<double> tol, tmin, tmax;
    std::optional<int> grid, tsteps, krot, max4d;
    std::vector<double> box;
    int threads = 1;
};

void addFlags(CLI::App* app, Flags& f) {
    app->add_option("--out", f.out, "JSON report path");
    app->add_option("--trace", f.trace, "trace CSV path");
    app->add_option("--tol", f.tol, "verification tolerance")->check(CLI::PositiveNumber);
    app->add_option("--grid", f.grid, "quadrature nodes per axis")->check(CLI::Range(3, 100001));
    app->add_option("--box", f.box, "integration box LO HI on every axis")->expected(2);
    app->add_option("--tmin", f.tmin, "first trace time")->check(CLI::PositiveNumber);
    app->add_option("--tmax", f.tmax, "last trace time")->check(CLI::PositiveNumber);
    app->add_option("--tsteps", f.tsteps, "number of trace times")->check(CLI::Range(2, 100000));
    app->add_option("--threads", f.threads, "worker threads")->check(CLI::Range(1, 1024));
    app->add_option("--krot", f.krot, "rotation samples for group averages")->check(CLI::Range(1, 4096));
    app->add_option("--max4d", f.max4d, "nodes per axis cap for 4D quadrature")->check(CLI::Range(3, 201));
}

bool writeFile(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) return false;
    os << text;
    return static_cast<bool>(os);
}

std::string slurp(const std::string& path, bool& ok) {
    std::ifstream is(path, std::ios::binary);
    ok = static_cast<bool>(is);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int exitFor(Outcome o) {
    switch (o) {
    case Outcome::Pass: return 0;
    case Outcome::Fail: return 1;
    case Outcome::Reject: return 3;
    }
    return 1;
}

int runCheckCommand(const std::string& file, const Flags& f, unsigned long long seed) {
    bool ok = false;
    const std::string source = slurp(file, ok);
    if (!ok) {
        std::cerr << "error: cannot read " << file << "\n";
        return 2;
    }
    dsl::Program program;
    std::vector<dsl::CheckJob> jobs;
    try {
        program = dsl::parse(source);
        jobs = dsl::lower(program);
    } catch (const dsl::ParseError& e) {
        std::cerr << file << ":" << e.pos().line << ":" << e.pos().col << ": " << parseErrorKindName(e.kind())
                  << " error: " << e.message();
        if (!e.expected().empty()) {
            std::cerr << " (expected";
            for (const auto& x : e.expected()) std::cerr << " " << x;
            std::cerr << ")";
        }
        std::cerr << "\n";
        return 2;
    } catch (const dsl::LowerError& e) {
        std::cerr << file << ":" << e.pos().line << ":" << e.pos().col << ": " << e.message();
        if (!e.path().empty()) std::cerr << " (at " << e.path() << ")";
        std::cerr << "\n";
        return 2;
    }

    RunOptions opts;
    opts.tol = f.tol;
    opts.grid = f.grid;
    if (f.box.size() == 2) {
        if (!(f.box[0] < f.box[1])) {
            std::cerr << "error: --box needs LO < HI\n";
            return 2;
        }
        opts.box = std::make_pair(f.box[0], f.box[1]);
    }
    opts.tmin = f.tmin;
    opts.tmax = f.tmax;
    opts.tsteps = f.tsteps;
    opts.threads = f.threads;
    opts.seed = seed;

    const std::string hash = dsl::hashHex(dsl::fnv1a(dsl::format(program)));
    std::vector<CheckReport> reports;
    try {
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            CheckReport r = runCheck(jobs[i], hash, opts);
            if (!f.trace.empty() && r.trace) {
                r.csvPath = indexedPath(f.trace, i, jobs.size());
                if (!writeFile(r.csvPath, traceCsv(*r.trace))) {
                    std::cerr << "error: cannot write " << r.csvPath << "\n";
                    return 2;
                }
            }
            reports.push_back(std::move(r));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    std::vector<Outcome> verdicts;
    for (const auto& r : reports) {
        verdicts.push_back(r.verdict);
        std::cout << "check " << r.name << ": " << outcomeName(r.verdict);
        if (r.rejection) {
            std::cout << " (" << *r.rejection << ")";
            std::cerr << "rejected " << r.name << ": " << *r.rejection << "\n";
        } else {
            std::cout << " (" << certKindName(r.certificate->kind) << ", " << r.points.count
                      << " points, worst residual " << r.points.worstResidual;
            if (r.points.liYauChecked) std::cout << ", worst Li-Yau gap " << r.points.worstLiYauGap;
            if (r.trace)
                std::cout << ", trace " << directionName(r.trace->direction) << " worst violation "
                          << r.trace->worstViolation;
            std::cout << ")";
        }
        std::cout << "\n";
    }
    if (!f.out.empty() && !writeFile(f.out, programJson(reports).dump(2) + "\n")) {
        std::cerr << "error: cannot write " << f.out << "\n";
        return 2;
    }
    return exitFor(combine(verdicts));
}

std::string traceLabelPath(const std::string& base, const std::string& label) {
    std::string safe;
    for (char c : label) safe += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
    const std::filesystem::path p(base);
    std::filesystem::path out = p.parent_path() / p.stem();
    out += "." + safe + p.extension().string();
    return out.string();
}

int runScenarioCommand(const std::string& name, const Flags& f, unsigned long long seed) {
    const ScenarioInfo* info = findScenario(name);
    if (!info) {
        std::cerr << "error: unknown scenario '" << name << "' (see 'monoflow list')\n";
        return 2;
    }
    ScenarioSettings s;
    s.threads = f.threads;
    s.seed = seed;
    if (f.krot) s.kRot = *f.krot;
    if (f.max4d) s.max4d = *f.max4d;
    s.tol = f.tol;
    s.grid = f.grid;
    s.tmin = f.tmin;
    s.tmax = f.tmax;
    s.tsteps = f.tsteps;
    if (s.tmin && s.tmax && !(*s.tmin < *s.tmax)) {
        std::cerr << "error: --tmin must be below --tmax\n";
        return 2;
    }
    if (!f.box.empty()) std::cerr << "note: --box does not apply to scenarios\n";

    const ScenarioResult r = runScenario(name, s);
    for (const auto& c : r.checks) {
        std::cout << name << "/" << c.label << ": " << outcomeName(c.observed) << " (expected "
                  << outcomeName(c.expected) << (c.matches() ? "" : ", MISMATCH") << ") " << c.detail << "\n";
        if (c.observed == Outcome::Reject) std::cerr << "rejected " << name << "/" << c.label << ": " << c.detail << "\n";
    }
    std::cout << "scenario " << name << ": " << (r.ok() ? "pass" : "fail") << "\n";

    if (!f.trace.empty()) {
        for (const auto& t : r.traces) {
            const std::string path = traceLabelPath(f.trace, t.label);
            if (!writeFile(path, traceCsv(t.trace))) {
                std::cerr << "error: cannot write " << path << "\n";
                return 2;
            }
        }
    }
    if (!f.out.empty() && !writeFile(f.out, scenarioJson(r, info->summary).dump(2) + "\n")) {
        std::cerr << "error: cannot write " << f.out << "\n";
        return 2;
    }
    if (r.ok()) return 0;
    return r.unexpectedRejection() ? 3 : 1;
}

}  // namespace

int runCli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return runCli(static_cast<int>(argv.size()), argv.data());
}

int runCli(int argc, const char* const* argv) {
    CLI::App app{"monoflow: certified monotone quantities for heat flow"};
    app.require_subcommand(1);
    Flags f;
    std::string file, scenario;

    auto* check = app.add_subcommand("check", "certify and verify the checks of a .mq program");
    check->add_option("file", file, "program file")->required();
    addFlags(check, f);
    auto* scen = app.add_subcommand("scenario", "run a built-in scenario");
    scen->add_option("name", scenario, "scenario name")->required();
    addFlags(scen, f);
    auto* list = app.add_subcommand("list", "list built-in scenarios");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    unsigned long long seed = 0;
    if (const char* env = std::getenv("MONOFLOW_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            seed = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
        } catch (const std::exception&) {
            std::cerr << "error: MONOFLOW_SEED must be a nonnegative integer\n";
            return 2;
        }
    }

    if (*list) {
        for (const auto& s : scenarioTable()) std::cout << s.name << "  " << s.summary << "\n";
        return 0;
    }
    if (*check) return runCheckCommand(file, f, seed);
    return runScenarioCommand(scenario, f, seed);
}

}  // namespace monoflow
