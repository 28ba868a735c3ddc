#pragma once

// Built-in scenarios. Each one evaluates a fixed set of labelled checks and
// compares the observed outcomes with an expectation table, so negative
// controls count as matches when they fail or are rejected as expected.

#include "monoflow/functional.hpp"
#include "monoflow/ou.hpp"
#include "monoflow/verify.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace monoflow {

enum class Outcome { Pass, Fail, Reject };
const char* outcomeName(Outcome o);

struct ScenarioSettings {
    int threads = 1;
    int kRot = 8;
    int max4d = 33;
    unsigned long long seed = 0;
    std::optional<double> tol;
    std::optional<int> grid;
    std::optional<double> tmin, tmax;
    std::optional<int> tsteps;
};

struct ScenarioCheck {
    std::string label;
    Outcome expected = Outcome::Pass;
    Outcome observed = Outcome::Fail;
    std::string detail;
    bool matches() const { return expected == observed; }
};

struct NamedTrace {
    std::string label;
    FunctionalTrace trace;
};

struct ScenarioResult {
    std::string name;
    std::vector<ScenarioCheck> checks;
    std::vector<NamedTrace> traces;
    bool ok() const;
    /// A rejection that the table did not expect.
    bool unexpectedRejection() const;
};

struct ScenarioInfo {
    std::string name;
    std::string summary;
    std::vector<std::pair<std::string, Outcome>> expectations;
};

const std::vector<ScenarioInfo>& scenarioTable();
const ScenarioInfo* findScenario(const std::string& name);
/// Throws std::invalid_argument for unknown names.
ScenarioResult runScenario(const std::string& name, const ScenarioSettings& s = {});

// ---------------------------------------------------------------- pieces shared with tests

/// u tensor u on R^4 averaged over the O(2) sampler: 1/4 sum_k w_k sqrt(U(rho_k x) U(x)).
NodePtr strichartzNode(const NodePtr& u2d, int kRot);

struct StrichartzResult {
    FunctionalTrace trace;            // int over R^4 of the averaged node
    std::vector<double> massSquared;  // (int u)^2 at each time
    std::vector<double> ratio;        // (int u~)^{1/4} / (int u)^{1/2}
};
StrichartzResult strichartzScenario(const NodePtr& u2d, const std::vector<double>& times, int kRot, int count4d,
                                    int threads = 1);

struct HyperTraces {
    std::vector<double> times;  // OU times
    FunctionalTrace native;     // int B(U_1(t, x_1), U_2(t, rho x_1 + sqrt(1 - rho^2) x_2)) d gamma
    FunctionalTrace heat;       // the same quantity from the heat-side geometric mean
    double maxRelDiff = 0.0;
};
/// (p, q) = (2, 4): exponents (3/4, 1/2), rho = 1/sqrt 3. Inputs are exponential OU fields on R.
HyperTraces hypercontractivityTraces(const std::vector<ExpTerm>& f1, const std::vector<ExpTerm>& f2,
                                     const std::vector<double>& times, int grid2d, int threads = 1);
/// The heat-side tree for the given heat atoms.
NodePtr hypercontractivityTree(const NodePtr& u1, const NodePtr& u2);

struct RegularizedBL {
    FunctionalTrace trace;  // t^beta int prod (u_j o L_j)^{p_j}, t >= 1
    double beta = 0.0;
    double limitConstant = 0.0;    // large-time limit of the trace
    double printedConstant = 0.0;  // prod det(A_j)^{p_j/2} / det(M)^{1/2} prod m_j^{p_j}
};
RegularizedBL regularizedBL(const NodePtr& gmeanNode, const std::vector<double>& times, int grid, int threads = 1);

}  // namespace monoflow
