#pragma once

// Certificate derivation: closure rules applied bottom-up as typing rules.

#include "monoflow/expr.hpp"
#include "monoflow/functional.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace monoflow {

enum class CertKind { Super, Sub, Exact };
const char* certKindName(CertKind k);

inline constexpr double kPsdTol = 1e-10;

struct Certificate {
    int n = 0;
    SymMatrix diffusion;               // M with dt u >= div(M^{-1} grad u) (reversed for Sub)
    CertKind kind = CertKind::Exact;
    std::optional<SymMatrix> liYau;    // K with D^2 log u >= -K / (2t)
    double timePower = 0.0;            // accumulated t^beta prefactor at the root
    bool decouples = true;             // false once a non-decoupling rule is used
    std::vector<std::string> rules;    // rules applied, bottom-up
};

class RuleError : public std::runtime_error {
public:
    RuleError(std::string rule, std::string condition, std::string path = "", double margin = 0.0)
        : std::runtime_error(compose(rule, condition, path)), rule_(std::move(rule)),
          condition_(std::move(condition)), path_(std::move(path)), margin_(margin) {}
    const std::string& rule() const { return rule_; }
    const std::string& condition() const { return condition_; }
    const std::string& path() const { return path_; }
    double margin() const { return margin_; }

private:
    static std::string compose(const std::string& r, const std::string& c, const std::string& p) {
        return r + ": " + c + (p.empty() ? "" : " (at " + p + ")");
    }
    std::string rule_, condition_, path_;
    double margin_;
};

/// Throws RuleError naming the first failed side condition.
Certificate certify(const NodePtr& node);

// ---------------------------------------------------------------- Brascamp-Lieb data

struct BLDatumResult {
    enum class Status { Equality, Inequality, Fail };
    Status status = Status::Fail;
    SymMatrix M;
    std::vector<double> margins;  // min eigenvalue of A_j^{-1} - L_j M^{-1} L_j^T per j
    double scalingGap = 0.0;      // sum p_j n_j - n
    double detM = 0.0;
    int failIndex = -1;           // 0-based
    std::string failReason;
};
const char* blStatusName(BLDatumResult::Status s);

BLDatumResult checkBLDatum(const std::vector<double>& p, const std::vector<LinearMap>& L,
                           const std::vector<SymMatrix>& A);

// ---------------------------------------------------------------- Bellman side conditions

struct LambdaCheck {
    bool ok = false;
    double worstEigenvalue = 0.0;  // most positive eigenvalue of D^2B - lambda diag(d_jB/x_j)
};

/// Deterministic positive sample points in R_+^m (log-uniform in [e^-3, e^3]).
std::vector<Vec> positiveSamples(int m, int count, unsigned long long seed = 0);

LambdaCheck checkLambdaConcavity(const BellmanSpec& B, double lambda, const std::vector<Vec>& samples);

struct GammaSpec {
    std::vector<int> dims;
    std::vector<std::vector<Mat>> blocks;  // blocks[j][k] is n_j x n_k

    static GammaSpec classical(int m, int n);
    /// Gamma_{jk} = L_j L_k^T.
    static GammaSpec fromMaps(const std::vector<LinearMap>& maps);
    /// m = 2, n_j = 1, Gamma = [[1, rho], [rho, 1]].
    static GammaSpec correlation(double rho);
    void validate() const;
};

struct GammaSample {
    Vec x;                  // point in R_+^m
    std::vector<Vec> v;     // v_j in R^{n_j}
};

struct GammaCheck {
    bool falsified = false;
    bool certificateKnown = false;
    double worstValue = 0.0;  // largest sampled value of sum_jk d_jk B <Gamma_jk v_k, v_j>
};

std::vector<GammaSample> gammaSamples(const GammaSpec& g, int count, unsigned long long seed = 0);
GammaCheck checkGammaConcave(const BellmanSpec& B, const GammaSpec& g, const std::vector<GammaSample>& samples);

// ---------------------------------------------------------------- functionals

/// Direction of t -> int u~ w: nondecreasing for super, nonincreasing for sub,
/// constant for exact without weight. A weight must satisfy
/// div(M^{-1} grad w) >= 0 at the sample points (RuleError otherwise).
FunctionalSpec monotoneFunctional(const Certificate& cert, const std::optional<WeightSpec>& weight = std::nullopt,
                                  const std::vector<Vec>& weightSamples = {});

}  // namespace monoflow
