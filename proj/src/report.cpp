#include "monoflow/report.hpp"

#include <cstdio>
#include <filesystem>

namespace monoflow {

namespace {

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

CheckReport runCheck(const dsl::CheckJob& job, const std::string& programHash, const RunOptions& opts) {
    CheckReport rep;
    rep.name = job.name;
    rep.programHash = programHash;
    const double tol = opts.tol.value_or(job.tol.value_or(1e-7));
    const double tmin = opts.tmin.value_or(job.tmin), tmax = opts.tmax.value_or(job.tmax);
    const int tsteps = opts.tsteps.value_or(job.tsteps);
    if (!(tmin > 0.0 && tmax > tmin && tsteps >= 2)) throw std::invalid_argument("time range needs 0 < tmin < tmax and tsteps >= 2");

    std::vector<Axis> axes = job.box;
    for (auto& a : axes) {
        if (opts.box) {
            a.lo = opts.box->first;
            a.hi = opts.box->second;
        }
        if (opts.grid) a.count = *opts.grid;
    }
    const int n = static_cast<int>(axes.size());
    Vec lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
        lo(i) = axes[i].lo;
        hi(i) = axes[i].hi;
    }

    try {
        rep.certificate = certify(job.node);
        const auto pts = samplePoints(job.node, geometricTimes(tmin, tmax, opts.pointTimes), opts.spacePoints,
                                      opts.seed, &lo, &hi, true);
        rep.points = checkPoints(job.node, *rep.certificate, pts, tol, opts.threads);
        std::optional<WeightSpec> weight;
        if (job.weight) weight = builtinWeight(*job.weight);
        std::vector<Vec> wsamples;
        for (const auto& p : pts) wsamples.push_back(p.x);
        const FunctionalSpec spec = monotoneFunctional(*rep.certificate, weight, wsamples);
        rep.trace = functionalTrace(job.node, spec, geometricTimes(tmin, tmax, tsteps), BoxQuadrature(axes),
                                    opts.threads);
        rep.verdict = rep.points.pass() && rep.trace->respects(tol) ? Outcome::Pass : Outcome::Fail;
    } catch (const RuleError& e) {
        rep.rejection = e.what();
        rep.rejectedRule = e.rule();
        rep.verdict = Outcome::Reject;
    }
    return rep;
}

std::string traceCsv(const FunctionalTrace& tr) {
    std::string out = "t,F,delta,truncation_estimate\n";
    for (std::size_t i = 0; i < tr.values.size(); ++i) {
        out += g17(tr.times[i]) + "," + g17(tr.values[i]) + ",";
        if (i > 0) out += g17(tr.values[i] - tr.values[i - 1]);
        out += "," + g17(i < tr.truncation.size() ? tr.truncation[i] : 0.0) + "\n";
    }
    return out;
}

nlohmann::ordered_json matrixJson(const SymMatrix& m) { return m.rows(); }

nlohmann::ordered_json certificateJson(const Certificate& c) {
    nlohmann::ordered_json j;
    j["kind"] = certKindName(c.kind);
    j["diffusion"] = matrixJson(c.diffusion);
    j["liYau"] = c.liYau ? matrixJson(*c.liYau) : nlohmann::ordered_json(nullptr);
    j["timePower"] = c.timePower;
    j["decouples"] = c.decouples;
    j["rules"] = c.rules;
    return j;
}

nlohmann::ordered_json checkJson(const CheckReport& r) {
    nlohmann::ordered_json j;
    j["check"] = r.name;
    j["programHash"] = r.programHash;
    j["certificate"] = r.certificate ? certificateJson(*r.certificate) : nlohmann::ordered_json(nullptr);
    if (r.rejection) {
        j["rejection"] = {{"rule", *r.rejectedRule}, {"message", *r.rejection}};
    } else {
        j["rejection"] = nullptr;
    }
    if (r.certificate && !r.rejection) {
        nlohmann::ordered_json pc;
        pc["count"] = r.points.count;
        pc["skipped"] = r.points.skipped;
        pc["worstResidual"] = r.points.worstResidual;
        pc["worstLiYauGap"] = r.points.liYauChecked ? nlohmann::ordered_json(r.points.worstLiYauGap) : nullptr;
        j["pointChecks"] = pc;
    } else {
        j["pointChecks"] = nullptr;
    }
    if (r.trace) {
        nlohmann::ordered_json tj;
        tj["direction"] = directionName(r.trace->direction);
        tj["worstViolation"] = r.trace->worstViolation;
        tj["maxAbs"] = r.trace->maxAbs();
        tj["tailWarning"] = r.trace->tailWarning;
        tj["csvPath"] = r.csvPath.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.csvPath);
        j["trace"] = tj;
    } else {
        j["trace"] = nullptr;
    }
    j["verdict"] = outcomeName(r.verdict);
    return j;
}

Outcome combine(const std::vector<Outcome>& outcomes) {
    Outcome worst = Outcome::Pass;
    for (Outcome o : outcomes) {
        if (o == Outcome::Reject) return Outcome::Reject;
        if (o == Outcome::Fail) worst = Outcome::Fail;
    }
    return worst;
}

nlohmann::ordered_json programJson(const std::vector<CheckReport>& reports) {
    nlohmann::ordered_json j;
    j["reports"] = nlohmann::ordered_json::array();
    std::vector<Outcome> v;
    for (const auto& r : reports) {
        j["reports"].push_back(checkJson(r));
        v.push_back(r.verdict);
    }
    j["verdict"] = outcomeName(combine(v));
    return j;
}

nlohmann::ordered_json scenarioJson(const ScenarioResult& r, const std::string& summary) {
    nlohmann::ordered_json j;
    j["scenario"] = r.name;
    j["summary"] = summary;
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : r.checks)
        j["checks"].push_back({{"label", c.label},
                               {"expected", outcomeName(c.expected)},
                               {"observed", outcomeName(c.observed)},
                               {"matches", c.matches()},
                               {"detail", c.detail}});
    j["traces"] = nlohmann::ordered_json::array();
    for (const auto& t : r.traces)
        j["traces"].push_back({{"label", t.label},
                               {"direction", directionName(t.trace.direction)},
                               {"worstViolation", t.trace.worstViolation},
                               {"maxAbs", t.trace.maxAbs()}});
    j["verdict"] = r.ok() ? "pass" : (r.unexpectedRejection() ? "reject" : "fail");
    return j;
}

std::string indexedPath(const std::string& path, std::size_t i, std::size_t n) {
    if (n <= 1) return path;
    const std::filesystem::path p(path);
    std::filesystem::path out = p.parent_path() / p.stem();
    out += "." + std::to_string(i) + p.extension().string();
    return out.string();
}

}  // namespace monoflow
