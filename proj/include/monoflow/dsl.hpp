#pragma once

// The .mq program language: parser, canonical formatter and lowering to
// expression nodes.

#include "monoflow/expr.hpp"
#include "monoflow/quad.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace monoflow::dsl {

/// Numeric literal. Integer and a/b literals stay exact rationals.
struct Number {
    bool exact = false;
    long long num = 0;
    long long den = 1;
    double value = 0.0;

    static Number rational(long long n, long long d);
    static Number decimal(double v);
    double toDouble() const { return exact ? static_cast<double>(num) / static_cast<double>(den) : value; }
    bool operator==(const Number& o) const;
};

using NumVec = std::vector<Number>;
using NumMatrix = std::vector<NumVec>;

struct SourcePos {
    int line = 1;
    int col = 1;
};

class ParseError : public std::runtime_error {
public:
    enum class Kind { Lexical, Syntax, Arity, Dimension };
    ParseError(Kind kind, SourcePos pos, std::string message, std::vector<std::string> expected = {});
    Kind kind() const { return kind_; }
    SourcePos pos() const { return pos_; }
    const std::string& message() const { return message_; }
    const std::vector<std::string>& expected() const { return expected_; }

private:
    Kind kind_;
    SourcePos pos_;
    std::string message_;
    std::vector<std::string> expected_;
};
const char* parseErrorKindName(ParseError::Kind k);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct MixEntry {
    Number weight;
    NumVec center;
};

struct Expr {
    enum class Kind { Heat, Sum, Tensor, Compose, Pow, Wgm, Hsum, Lqnorm, Gmean, Conv, Gavg, Tpow, Shift, Ref };
    Kind kind = Kind::Ref;
    SourcePos pos;
    std::vector<ExprPtr> args;
    NumVec nums;                  // weights, exponents, parameters in source order
    std::vector<NumMatrix> mats;  // heat: A; compose: L; gmean: L_1, A_1, L_2, A_2, ...
    std::vector<MixEntry> mix;
    std::optional<Number> t0;
    NumVec vec;                   // shift offset
    long long count = 0;          // gavg
    std::string name;             // ref
};

struct BoxAxis {
    Number lo, hi;
    long long count = 0;
};

struct CheckOptions {
    Number tmin, tmax;
    long long tsteps = 0;
    std::vector<BoxAxis> box;
    std::optional<Number> tol;
    std::optional<std::string> weight;
};

struct Statement {
    enum class Kind { Let, Check };
    Kind kind = Kind::Let;
    SourcePos pos;
    std::string name;
    ExprPtr expr;        // let
    CheckOptions opts;   // check
};

struct Program {
    std::vector<Statement> statements;
};

Program parse(const std::string& source);
/// Canonical text; parse(format(p)) formats back to the same text.
std::string format(const Program& p);
std::string format(const Expr& e);
/// Structural equality ignoring source positions.
bool sameProgram(const Program& a, const Program& b);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& s);
std::string hashHex(std::uint64_t h);

class LowerError : public std::runtime_error {
public:
    LowerError(SourcePos pos, std::string message, std::string path);
    SourcePos pos() const { return pos_; }
    const std::string& message() const { return message_; }
    const std::string& path() const { return path_; }

private:
    SourcePos pos_;
    std::string message_;
    std::string path_;
};

struct CheckJob {
    std::string name;  // the checked binding
    SourcePos pos;
    NodePtr node;
    double tmin = 0.0, tmax = 0.0;
    int tsteps = 0;
    std::vector<Axis> box;
    std::optional<double> tol;
    std::optional<std::string> weight;
};

std::vector<CheckJob> lower(const Program& p);

/// Translate a node by a: x -> u(x - a), pushed down to atom centers.
NodePtr shiftNode(const NodePtr& node, const Vec& a);

}  // namespace monoflow::dsl
