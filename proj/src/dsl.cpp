#include "monoflow/dsl.hpp"

#include "monoflow/functional.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace monoflow::dsl {

// ---------------------------------------------------------------- numbers

Number Number::rational(long long n, long long d) {
    if (d == 0) throw std::invalid_argument("zero denominator");
    if (d < 0) n = -n, d = -d;
    const long long g = std::gcd(n < 0 ? -n : n, d);
    Number r;
    r.exact = true;
    r.num = g ? n / g : n;
    r.den = g ? d / g : d;
    r.value = static_cast<double>(r.num) / static_cast<double>(r.den);
    return r;
}

Number Number::decimal(double v) {
    Number r;
    r.exact = false;
    r.value = v;
    return r;
}

bool Number::operator==(const Number& o) const {
    if (exact != o.exact) return false;
    return exact ? (num == o.num && den == o.den) : value == o.value;
}

namespace {

std::string formatNumber(const Number& n) {
    if (n.exact) return n.den == 1 ? std::to_string(n.num) : std::to_string(n.num) + "/" + std::to_string(n.den);
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, n.value);
    std::string s(buf, res.ptr);
    // keep a decimal marker so the text re-reads as a decimal literal
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

}  // namespace

// ---------------------------------------------------------------- errors

ParseError::ParseError(Kind kind, SourcePos pos, std::string message, std::vector<std::string> expected)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << pos.line << ":" << pos.col << ": " << parseErrorKindName(kind) << " error: " << message;
          if (!expected.empty()) {
              os << " (expected ";
              for (std::size_t i = 0; i < expected.size(); ++i) os << (i ? ", " : "") << expected[i];
              os << ")";
          }
          return os.str();
      }()),
      kind_(kind), pos_(pos), message_(std::move(message)), expected_(std::move(expected)) {}

const char* parseErrorKindName(ParseError::Kind k) {
    switch (k) {
    case ParseError::Kind::Lexical: return "lexical";
    case ParseError::Kind::Syntax: return "syntax";
    case ParseError::Kind::Arity: return "arity";
    case ParseError::Kind::Dimension: return "dimension";
    }
    return "?";
}

LowerError::LowerError(SourcePos pos, std::string message, std::string path)
    : std::runtime_error(std::to_string(pos.line) + ":" + std::to_string(pos.col) + ": " + message +
                         (path.empty() ? "" : " [at " + path + "]")),
      pos_(pos), message_(std::move(message)), path_(std::move(path)) {}

// ---------------------------------------------------------------- lexer

namespace {

enum class Tok { Ident, Int, Decimal, Punct, End };

struct Token {
    Tok type = Tok::End;
    std::string text;
    SourcePos pos;
};

std::string describe(const Token& t) {
    switch (t.type) {
    case Tok::End: return "end of input";
    case Tok::Punct: return "'" + t.text + "'";
    default: return "'" + t.text + "'";
    }
}

std::vector<Token> lex(const std::string& src) {
    std::vector<Token> out;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto advance = [&](std::size_t k) {
        for (std::size_t j = 0; j < k; ++j) {
            if (src[i] == '\n') ++line, col = 1;
            else ++col;
            ++i;
        }
    };
    while (i < src.size()) {
        const char c = src[i];
        if (c == '#') {
            while (i < src.size() && src[i] != '\n') advance(1);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(1);
            continue;
        }
        Token t;
        t.pos = {line, col};
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
            t.type = Tok::Ident;
            t.text = src.substr(i, j - i);
            advance(j - i);
        } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                   (c == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            std::size_t j = i;
            bool decimal = false;
            while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            if (j < src.size() && src[j] == '.') {
                decimal = true;
                ++j;
                while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
            }
            if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
                if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
                    decimal = true;
                    while (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) ++k;
                    j = k;
                } else {
                    throw ParseError(ParseError::Kind::Lexical, {line, col + static_cast<int>(k - i)},
                                     "malformed exponent in number", {"digit"});
                }
            }
            if (j < src.size() && (std::isalpha(static_cast<unsigned char>(src[j])) || src[j] == '_'))
                throw ParseError(ParseError::Kind::Lexical, {line, col + static_cast<int>(j - i)},
                                 "identifier characters directly after a number");
            t.type = decimal ? Tok::Decimal : Tok::Int;
            t.text = src.substr(i, j - i);
            advance(j - i);
        } else if (std::string("()[],;:=/-").find(c) != std::string::npos) {
            t.type = Tok::Punct;
            t.text = std::string(1, c);
            advance(1);
        } else {
            std::string shown = std::isprint(static_cast<unsigned char>(c)) ? std::string(1, c)
                                                                            : "\\x" + std::to_string(int(static_cast<unsigned char>(c)));
            throw ParseError(ParseError::Kind::Lexical, {line, col}, "unexpected character '" + shown + "'");
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.type = Tok::End;
    end.pos = {line, col};
    out.push_back(end);
    return out;
}

const std::vector<std::string>& exprKeywords() {
    static const std::vector<std::string> k = {"heat", "sum",  "tensor", "compose", "pow",  "wgm",  "hsum",
                                               "lqnorm", "gmean", "conv", "gavg",   "tpow", "shift"};
    return k;
}

bool isReserved(const std::string& s) {
    if (s == "let" || s == "check") return true;
    for (const auto& k : exprKeywords())
        if (k == s) return true;
    return false;
}

// ---------------------------------------------------------------- parser

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : t_(std::move(toks)) {}

    Program program() {
        Program p;
        if (peek().type == Tok::End) fail("empty program", {"'let'", "'check'"});
        while (peek().type != Tok::End) p.statements.push_back(statement());
        return p;
    }

private:
    std::vector<Token> t_;
    std::size_t i_ = 0;

    const Token& peek(std::size_t k = 0) const { return t_[std::min(i_ + k, t_.size() - 1)]; }
    Token next() {
        Token t = peek();
        if (i_ < t_.size() - 1) ++i_;
        return t;
    }

    [[noreturn]] void fail(const std::string& msg, std::vector<std::string> expected,
                           ParseError::Kind kind = ParseError::Kind::Syntax) const {
        throw ParseError(kind, peek().pos, msg, std::move(expected));
    }
    [[noreturn]] void unexpected(std::vector<std::string> expected) const {
        fail("unexpected " + describe(peek()), std::move(expected));
    }

    bool isPunct(const std::string& p) const { return peek().type == Tok::Punct && peek().text == p; }
    bool isWord(const std::string& w) const { return peek().type == Tok::Ident && peek().text == w; }

    void punct(const std::string& p) {
        if (!isPunct(p)) unexpected({"'" + p + "'"});
        next();
    }
    void word(const std::string& w) {
        if (!isWord(w)) unexpected({"'" + w + "'"});
        next();
    }
    /// A ',' that separates required arguments of `what`; a ')' here is an arity error.
    void argComma(const std::string& what, int needed) {
        if (isPunct(")"))
            fail(what + " takes " + std::to_string(needed) + " arguments", {"','"}, ParseError::Kind::Arity);
        punct(",");
    }

    std::string ident() {
        if (peek().type != Tok::Ident) unexpected({"identifier"});
        if (isReserved(peek().text)) fail("'" + peek().text + "' is a reserved word", {"identifier"});
        return next().text;
    }

    long long integer() {
        if (peek().type != Tok::Int) unexpected({"integer"});
        const Token t = next();
        long long v = 0;
        auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (ec != std::errc()) throw ParseError(ParseError::Kind::Lexical, t.pos, "integer out of range");
        return v;
    }

    Number number() {
        bool neg = false;
        if (isPunct("-")) {
            next();
            neg = true;
        }
        if (peek().type == Tok::Decimal) {
            const Token t = next();
            double v = 0.0;
            auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
            if (ec != std::errc() || !std::isfinite(v))
                throw ParseError(ParseError::Kind::Lexical, t.pos, "number out of range");
            return Number::decimal(neg ? -v : v);
        }
        if (peek().type != Tok::Int) unexpected({"number"});
        long long n = integer();
        long long d = 1;
        if (isPunct("/")) {
            next();
            if (peek().type != Tok::Int) unexpected({"integer denominator"});
            const SourcePos dp = peek().pos;
            d = integer();
            if (d == 0) throw ParseError(ParseError::Kind::Lexical, dp, "zero denominator");
        }
        return Number::rational(neg ? -n : n, d);
    }

    NumVec vector() {
        NumVec v;
        punct("[");
        v.push_back(number());
        while (isPunct(",")) {
            next();
            v.push_back(number());
        }
        punct("]");
        return v;
    }

    NumMatrix matrix() {
        const SourcePos at = peek().pos;
        NumMatrix m;
        punct("[");
        m.push_back(vector());
        while (true) {
            if (isPunct(",")) next();  // optional row separator
            if (!isPunct("[")) break;
            m.push_back(vector());
        }
        if (!isPunct("]")) unexpected({"'['", "']'"});
        next();
        for (const auto& r : m)
            if (r.size() != m[0].size())
                throw ParseError(ParseError::Kind::Dimension, at, "matrix rows have different lengths");
        return m;
    }

    Statement statement() {
        Statement s;
        s.pos = peek().pos;
        if (isWord("let")) {
            next();
            s.kind = Statement::Kind::Let;
            s.name = ident();
            punct("=");
            s.expr = expr();
            punct(";");
        } else if (isWord("check")) {
            next();
            s.kind = Statement::Kind::Check;
            s.name = ident();
            s.opts = options();
            if (!isPunct(";")) {
                std::vector<std::string> exp = {"';'"};
                if (!s.opts.tol && !s.opts.weight) exp.push_back("'tol'");
                if (!s.opts.weight) exp.push_back("'weight'");
                unexpected(exp);
            }
            next();
        } else {
            unexpected({"'let'", "'check'"});
        }
        return s;
    }

    CheckOptions options() {
        CheckOptions o;
        word("t");
        punct("=");
        punct("[");
        o.tmin = number();
        punct(",");
        o.tmax = number();
        punct(",");
        o.tsteps = integer();
        punct("]");
        word("box");
        punct("=");
        punct("[");
        do {
            if (isPunct(",") && !o.box.empty()) next();
            BoxAxis a;
            punct("[");
            a.lo = number();
            punct(",");
            a.hi = number();
            punct(",");
            a.count = integer();
            punct("]");
            o.box.push_back(a);
        } while (isPunct("[") || (isPunct(",") && peek(1).type == Tok::Punct && peek(1).text == "["));
        punct("]");
        if (isWord("tol")) {
            next();
            punct("=");
            o.tol = number();
        }
        if (isWord("weight")) {
            next();
            punct("=");
            if (peek().type != Tok::Ident) unexpected({"weight name"});
            o.weight = next().text;
        }
        return o;
    }

    std::shared_ptr<Expr> make(Expr::Kind k, SourcePos pos) {
        auto e = std::make_shared<Expr>();
        e->kind = k;
        e->pos = pos;
        return e;
    }

    ExprPtr expr() {
        if (peek().type != Tok::Ident) {
            std::vector<std::string> exp;
            for (const auto& k : exprKeywords()) exp.push_back("'" + k + "'");
            exp.push_back("identifier");
            unexpected(exp);
        }
        const Token head = peek();
        const std::string& w = head.text;
        if (!isReserved(w) || w == "let" || w == "check") {
            auto e = make(Expr::Kind::Ref, head.pos);
            e->name = ident();
            return e;
        }
        next();
        punct("(");
        std::shared_ptr<Expr> e;
        if (w == "heat") {
            e = make(Expr::Kind::Heat, head.pos);
            word("A");
            punct("=");
            e->mats.push_back(matrix());
            punct(",");
            word("mix");
            punct("=");
            punct("[");
            do {
                if (!e->mix.empty()) next();
                MixEntry m;
                punct("(");
                m.weight = number();
                punct(",");
                m.center = vector();
                punct(")");
                e->mix.push_back(std::move(m));
            } while (isPunct(","));
            punct("]");
            if (isPunct(",")) {
                next();
                word("t0");
                punct("=");
                e->t0 = number();
            }
            const std::size_t n = e->mats[0].size();
            if (e->mats[0][0].size() != n)
                throw ParseError(ParseError::Kind::Dimension, head.pos, "heat matrix A must be square");
            for (const auto& m : e->mix)
                if (m.center.size() != n)
                    throw ParseError(ParseError::Kind::Dimension, head.pos,
                                     "mixture center has " + std::to_string(m.center.size()) +
                                         " entries but A is " + std::to_string(n) + "x" + std::to_string(n));
        } else if (w == "sum" || w == "wgm") {
            e = make(w == "sum" ? Expr::Kind::Sum : Expr::Kind::Wgm, head.pos);
            do {
                if (!e->args.empty()) next();
                e->nums.push_back(number());
                punct(":");
                e->args.push_back(expr());
            } while (isPunct(","));
        } else if (w == "tensor") {
            e = make(Expr::Kind::Tensor, head.pos);
            e->args.push_back(expr());
            argComma("tensor", 2);
            e->args.push_back(expr());
        } else if (w == "compose") {
            e = make(Expr::Kind::Compose, head.pos);
            e->mats.push_back(matrix());
            argComma("compose", 2);
            e->args.push_back(expr());
        } else if (w == "pow" || w == "tpow") {
            e = make(w == "pow" ? Expr::Kind::Pow : Expr::Kind::Tpow, head.pos);
            e->nums.push_back(number());
            argComma(w, 2);
            e->args.push_back(expr());
        } else if (w == "hsum") {
            e = make(Expr::Kind::Hsum, head.pos);
            e->args.push_back(expr());
            argComma("hsum", 2);
            e->args.push_back(expr());
        } else if (w == "lqnorm") {
            e = make(Expr::Kind::Lqnorm, head.pos);
            e->nums.push_back(number());
            argComma("lqnorm", 4);
            e->nums.push_back(number());
            argComma("lqnorm", 4);
            e->args.push_back(expr());
            argComma("lqnorm", 4);
            e->args.push_back(expr());
        } else if (w == "gmean") {
            e = make(Expr::Kind::Gmean, head.pos);
            do {
                if (!e->args.empty()) next();
                const SourcePos tp = peek().pos;
                e->nums.push_back(number());
                punct(":");
                word("L");
                punct("=");
                NumMatrix L = matrix();
                word("A");
                punct("=");
                NumMatrix A = matrix();
                punct(":");
                e->args.push_back(expr());
                if (A.size() != A[0].size())
                    throw ParseError(ParseError::Kind::Dimension, tp, "gmean A_j must be square");
                if (A.size() != L.size())
                    throw ParseError(ParseError::Kind::Dimension, tp,
                                     "gmean L_j has " + std::to_string(L.size()) + " rows but A_j is " +
                                         std::to_string(A.size()) + "x" + std::to_string(A.size()));
                e->mats.push_back(std::move(L));
                e->mats.push_back(std::move(A));
            } while (isPunct(","));
        } else if (w == "conv") {
            e = make(Expr::Kind::Conv, head.pos);
            word("p");
            punct("=");
            e->nums.push_back(number());
            punct(",");
            word("p1");
            punct("=");
            e->nums.push_back(number());
            punct(",");
            word("p2");
            punct("=");
            e->nums.push_back(number());
            argComma("conv", 5);
            e->args.push_back(expr());
            argComma("conv", 5);
            e->args.push_back(expr());
        } else if (w == "gavg") {
            e = make(Expr::Kind::Gavg, head.pos);
            e->count = integer();
            argComma("gavg", 2);
            e->args.push_back(expr());
        } else if (w == "shift") {
            e = make(Expr::Kind::Shift, head.pos);
            e->args.push_back(expr());
            argComma("shift", 2);
            e->vec = vector();
        }
        if (isPunct(",")) fail("too many arguments to " + w, {"')'"}, ParseError::Kind::Arity);
        punct(")");
        return e;
    }
};

// ---------------------------------------------------------------- formatter

void fmtVec(std::ostream& os, const NumVec& v) {
    os << "[";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << formatNumber(v[i]);
    os << "]";
}

void fmtMat(std::ostream& os, const NumMatrix& m) {
    os << "[";
    for (const auto& r : m) fmtVec(os, r);
    os << "]";
}

void fmtExpr(std::ostream& os, const Expr& e) {
    auto child = [&](std::size_t k) { fmtExpr(os, *e.args[k]); };
    switch (e.kind) {
    case Expr::Kind::Ref: os << e.name; return;
    case Expr::Kind::Heat:
        os << "heat(A=";
        fmtMat(os, e.mats[0]);
        os << ", mix=[";
        for (std::size_t i = 0; i < e.mix.size(); ++i) {
            os << (i ? ", " : "") << "(" << formatNumber(e.mix[i].weight) << ", ";
            fmtVec(os, e.mix[i].center);
            os << ")";
        }
        os << "]";
        if (e.t0) os << ", t0=" << formatNumber(*e.t0);
        os << ")";
        return;
    case Expr::Kind::Sum:
    case Expr::Kind::Wgm:
        os << (e.kind == Expr::Kind::Sum ? "sum(" : "wgm(");
        for (std::size_t i = 0; i < e.args.size(); ++i) {
            os << (i ? ", " : "") << formatNumber(e.nums[i]) << ": ";
            child(i);
        }
        os << ")";
        return;
    case Expr::Kind::Tensor:
    case Expr::Kind::Hsum:
        os << (e.kind == Expr::Kind::Tensor ? "tensor(" : "hsum(");
        child(0);
        os << ", ";
        child(1);
        os << ")";
        return;
    case Expr::Kind::Compose:
        os << "compose(";
        fmtMat(os, e.mats[0]);
        os << ", ";
        child(0);
        os << ")";
        return;
    case Expr::Kind::Pow:
    case Expr::Kind::Tpow:
        os << (e.kind == Expr::Kind::Pow ? "pow(" : "tpow(") << formatNumber(e.nums[0]) << ", ";
        child(0);
        os << ")";
        return;
    case Expr::Kind::Lqnorm:
        os << "lqnorm(" << formatNumber(e.nums[0]) << ", " << formatNumber(e.nums[1]) << ", ";
        child(0);
        os << ", ";
        child(1);
        os << ")";
        return;
    case Expr::Kind::Gmean:
        os << "gmean(";
        for (std::size_t i = 0; i < e.args.size(); ++i) {
            os << (i ? ", " : "") << formatNumber(e.nums[i]) << ": L=";
            fmtMat(os, e.mats[2 * i]);
            os << " A=";
            fmtMat(os, e.mats[2 * i + 1]);
            os << " : ";
            child(i);
        }
        os << ")";
        return;
    case Expr::Kind::Conv:
        os << "conv(p=" << formatNumber(e.nums[0]) << ", p1=" << formatNumber(e.nums[1])
           << ", p2=" << formatNumber(e.nums[2]) << ", ";
        child(0);
        os << ", ";
        child(1);
        os << ")";
        return;
    case Expr::Kind::Gavg:
        os << "gavg(" << e.count << ", ";
        child(0);
        os << ")";
        return;
    case Expr::Kind::Shift:
        os << "shift(";
        child(0);
        os << ", ";
        fmtVec(os, e.vec);
        os << ")";
        return;
    }
}

bool sameExpr(const Expr& a, const Expr& b) {
    if (a.kind != b.kind || a.nums != b.nums || a.mats != b.mats || a.t0 != b.t0 || a.vec != b.vec ||
        a.count != b.count || a.name != b.name || a.args.size() != b.args.size() || a.mix.size() != b.mix.size())
        return false;
    for (std::size_t i = 0; i < a.mix.size(); ++i)
        if (!(a.mix[i].weight == b.mix[i].weight) || a.mix[i].center != b.mix[i].center) return false;
    for (std::size_t i = 0; i < a.args.size(); ++i)
        if (!sameExpr(*a.args[i], *b.args[i])) return false;
    return true;
}

}  // namespace

Program parse(const std::string& source) { return Parser(lex(source)).program(); }

std::string format(const Expr& e) {
    std::ostringstream os;
    fmtExpr(os, e);
    return os.str();
}

std::string format(const Program& p) {
    std::ostringstream os;
    for (const auto& s : p.statements) {
        if (s.kind == Statement::Kind::Let) {
            os << "let " << s.name << " = ";
            fmtExpr(os, *s.expr);
            os << ";\n";
            continue;
        }
        const auto& o = s.opts;
        os << "check " << s.name << " t=[" << formatNumber(o.tmin) << ", " << formatNumber(o.tmax) << ", "
           << o.tsteps << "] box=[";
        for (const auto& a : o.box)
            os << "[" << formatNumber(a.lo) << ", " << formatNumber(a.hi) << ", " << a.count << "]";
        os << "]";
        if (o.tol) os << " tol=" << formatNumber(*o.tol);
        if (o.weight) os << " weight=" << *o.weight;
        os << ";\n";
    }
    return os.str();
}

bool sameProgram(const Program& a, const Program& b) {
    if (a.statements.size() != b.statements.size()) return false;
    for (std::size_t i = 0; i < a.statements.size(); ++i) {
        const Statement &x = a.statements[i], &y = b.statements[i];
        if (x.kind != y.kind || x.name != y.name) return false;
        if (x.kind == Statement::Kind::Let) {
            if (!sameExpr(*x.expr, *y.expr)) return false;
            continue;
        }
        const auto &o = x.opts, &q = y.opts;
        if (!(o.tmin == q.tmin) || !(o.tmax == q.tmax) || o.tsteps != q.tsteps || o.tol != q.tol ||
            o.weight != q.weight || o.box.size() != q.box.size())
            return false;
        for (std::size_t k = 0; k < o.box.size(); ++k)
            if (!(o.box[k].lo == q.box[k].lo) || !(o.box[k].hi == q.box[k].hi) || o.box[k].count != q.box[k].count)
                return false;
    }
    return true;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hashHex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------- shifting

NodePtr shiftNode(const NodePtr& node, const Vec& a) {
    if (a.size() != node->dim()) throw DimensionError("shift vector does not match the node dimension");
    if (a.cwiseAbs().maxCoeff() == 0.0) return node;
    const auto& ch = node->children();
    switch (node->kind()) {
    case NodeKind::Atom: {
        GaussianMixtureAtom atom = node->atom();
        for (auto& t : atom.terms) t.center += a;
        return makeAtom(std::move(atom));
    }
    case NodeKind::Sum: {
        std::vector<NodePtr> c;
        for (const auto& x : ch) c.push_back(shiftNode(x, a));
        return makeSum(node->coeffs(), std::move(c));
    }
    case NodeKind::Tensor: {
        const int k = ch[0]->dim();
        return makeTensor(shiftNode(ch[0], a.head(k)), shiftNode(ch[1], a.tail(a.size() - k)));
    }
    case NodeKind::Compose: {
        const LinearMap& L = node->maps()[0];
        return makeCompose(L, shiftNode(ch[0], L.mat() * a));
    }
    case NodeKind::Bellman: {
        std::vector<NodePtr> c;
        for (std::size_t j = 0; j < ch.size(); ++j)
            c.push_back(shiftNode(ch[j], node->hasMaps() ? Vec(node->maps()[j].mat() * a) : a));
        return makeBellman(node->bellman(), std::move(c), node->maps());
    }
    case NodeKind::GeomMean: {
        std::vector<GeomMeanTerm> terms;
        for (std::size_t j = 0; j < ch.size(); ++j)
            terms.push_back({node->coeffs()[j], node->maps()[j], node->mats()[j],
                             shiftNode(ch[j], node->maps()[j].mat() * a)});
        return makeGeomMean(std::move(terms));
    }
    case NodeKind::Convolution:
        return makeConvolution(node->convP(), node->convP1(), node->convP2(), shiftNode(ch[0], a), ch[1],
                               node->quadCount());
    case NodeKind::GroupAverage: {
        const GroupSampler& g = node->group();
        for (int k = 0; k < g.size(); ++k)
            if ((g.apply(k, a) - a).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + a.cwiseAbs().maxCoeff()))
                throw std::invalid_argument("shift of a group average needs a translation fixed by the group");
        return makeGroupAverage(node->groupPtr(), shiftNode(ch[0], a));
    }
    case NodeKind::TimePower: return makeTimePower(node->beta(), shiftNode(ch[0], a));
    }
    throw std::logic_error("unknown node kind");
}

// ---------------------------------------------------------------- lowering

namespace {

Mat toMat(const NumMatrix& m) {
    Mat out(static_cast<int>(m.size()), static_cast<int>(m[0].size()));
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m[i].size(); ++j) out(i, j) = m[i][j].toDouble();
    return out;
}

Vec toVec(const NumVec& v) {
    Vec out(static_cast<int>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(i) = v[i].toDouble();
    return out;
}

const char* exprName(Expr::Kind k) {
    switch (k) {
    case Expr::Kind::Heat: return "heat";
    case Expr::Kind::Sum: return "sum";
    case Expr::Kind::Tensor: return "tensor";
    case Expr::Kind::Compose: return "compose";
    case Expr::Kind::Pow: return "pow";
    case Expr::Kind::Wgm: return "wgm";
    case Expr::Kind::Hsum: return "hsum";
    case Expr::Kind::Lqnorm: return "lqnorm";
    case Expr::Kind::Gmean: return "gmean";
    case Expr::Kind::Conv: return "conv";
    case Expr::Kind::Gavg: return "gavg";
    case Expr::Kind::Tpow: return "tpow";
    case Expr::Kind::Shift: return "shift";
    case Expr::Kind::Ref: return "ref";
    }
    return "?";
}

class Lowerer {
public:
    std::map<std::string, NodePtr> env;

    NodePtr lower(const Expr& e, const std::string& path) {
        const std::string here = path + "/" + exprName(e.kind);
        std::vector<NodePtr> kids;
        for (std::size_t i = 0; i < e.args.size(); ++i)
            kids.push_back(lower(*e.args[i], here + "[" + std::to_string(i + 1) + "]"));
        try {
            return build(e, kids);
        } catch (const LowerError&) {
            throw;
        } catch (const std::exception& ex) {
            throw LowerError(e.pos, ex.what(), here);
        }
    }

private:
    NodePtr build(const Expr& e, const std::vector<NodePtr>& kids) {
        auto nums = [&] {
            std::vector<double> v;
            for (const auto& n : e.nums) v.push_back(n.toDouble());
            return v;
        };
        switch (e.kind) {
        case Expr::Kind::Ref: {
            auto it = env.find(e.name);
            if (it == env.end()) throw LowerError(e.pos, "undefined name '" + e.name + "'", "");
            return it->second;
        }
        case Expr::Kind::Heat: {
            GaussianMixtureAtom atom;
            atom.A = SymMatrix(toMat(e.mats[0]));
            if ((toMat(e.mats[0]) - atom.A.mat()).cwiseAbs().maxCoeff() > 0.0)
                throw std::invalid_argument("heat matrix A must be symmetric");
            for (const auto& m : e.mix)
                atom.terms.push_back({m.weight.toDouble(), toVec(m.center), e.t0 ? e.t0->toDouble() : 0.0});
            return makeAtom(std::move(atom));
        }
        case Expr::Kind::Sum: return makeSum(nums(), kids);
        case Expr::Kind::Tensor: return makeTensor(kids[0], kids[1]);
        case Expr::Kind::Compose: return makeCompose(LinearMap(toMat(e.mats[0])), kids[0]);
        case Expr::Kind::Pow: return makeBellman(BellmanSpec::power(e.nums[0].toDouble()), kids);
        case Expr::Kind::Wgm: return makeBellman(BellmanSpec::weightedGeomMean(nums()), kids);
        case Expr::Kind::Hsum: return makeBellman(BellmanSpec::harmonicSum(2), kids);
        case Expr::Kind::Lqnorm:
            return makeBellman(BellmanSpec::lqNorm(e.nums[0].toDouble(), e.nums[1].toDouble()), kids);
        case Expr::Kind::Gmean: {
            std::vector<GeomMeanTerm> terms;
            for (std::size_t j = 0; j < kids.size(); ++j) {
                const Mat A = toMat(e.mats[2 * j + 1]);
                if ((A - A.transpose()).cwiseAbs().maxCoeff() > 0.0)
                    throw std::invalid_argument("gmean A_" + std::to_string(j + 1) + " must be symmetric");
                terms.push_back({e.nums[j].toDouble(), LinearMap(toMat(e.mats[2 * j])), SymMatrix(A), kids[j]});
            }
            return makeGeomMean(std::move(terms));
        }
        case Expr::Kind::Conv:
            return makeConvolution(e.nums[0].toDouble(), e.nums[1].toDouble(), e.nums[2].toDouble(), kids[0], kids[1]);
        case Expr::Kind::Gavg: {
            if (e.count < 1 || e.count > 64) throw std::invalid_argument("gavg needs 1 <= k <= 64 rotations");
            const int d = kids[0]->dim();
            if (d == 2) return makeGroupAverage(o2Sample(static_cast<int>(e.count)), kids[0]);
            if (d == 4) return makeGroupAverage(groupO2Elements(static_cast<int>(e.count)), kids[0]);
            throw DimensionError("gavg is defined for 2D and 4D children only (got " + std::to_string(d) + "D)");
        }
        case Expr::Kind::Tpow: return makeTimePower(e.nums[0].toDouble(), kids[0]);
        case Expr::Kind::Shift: return shiftNode(kids[0], toVec(e.vec));
        }
        throw std::logic_error("unknown expression kind");
    }
};

}  // namespace

std::vector<CheckJob> lower(const Program& p) {
    Lowerer lw;
    std::vector<CheckJob> jobs;
    for (const auto& s : p.statements) {
        if (s.kind == Statement::Kind::Let) {
            if (lw.env.count(s.name)) throw LowerError(s.pos, "name '" + s.name + "' is already defined", s.name);
            lw.env[s.name] = lw.lower(*s.expr, s.name);
            continue;
        }
        auto it = lw.env.find(s.name);
        if (it == lw.env.end()) throw LowerError(s.pos, "check of undefined name '" + s.name + "'", "");
        const auto& o = s.opts;
        CheckJob job;
        job.name = s.name;
        job.pos = s.pos;
        job.node = it->second;
        job.tmin = o.tmin.toDouble();
        job.tmax = o.tmax.toDouble();
        if (!(job.tmin > 0.0)) throw LowerError(s.pos, "check times need t0 > 0", s.name);
        if (!(job.tmax > job.tmin)) throw LowerError(s.pos, "check times need t1 > t0", s.name);
        if (o.tsteps < 2 || o.tsteps > 100000) throw LowerError(s.pos, "check needs at least 2 time steps", s.name);
        job.tsteps = static_cast<int>(o.tsteps);
        if (static_cast<int>(o.box.size()) != job.node->dim())
            throw LowerError(s.pos,
                             "box has " + std::to_string(o.box.size()) + " axes but '" + s.name + "' is " +
                                 std::to_string(job.node->dim()) + "-dimensional",
                             s.name);
        for (const auto& a : o.box) {
            if (a.count < 3 || a.count % 2 == 0 || a.count > 100001)
                throw LowerError(s.pos, "box grid sizes must be odd and >= 3", s.name);
            if (!(a.hi.toDouble() > a.lo.toDouble())) throw LowerError(s.pos, "box axis needs lo < hi", s.name);
            job.box.push_back({a.lo.toDouble(), a.hi.toDouble(), static_cast<int>(a.count)});
        }
        if (o.tol) {
            job.tol = o.tol->toDouble();
            if (!(*job.tol > 0.0)) throw LowerError(s.pos, "tol must be positive", s.name);
        }
        if (o.weight) {
            try {
                builtinWeight(*o.weight);
            } catch (const std::exception& ex) {
                throw LowerError(s.pos, ex.what(), s.name);
            }
            job.weight = o.weight;
        }
        jobs.push_back(std::move(job));
    }
    if (jobs.empty()) throw LowerError({1, 1}, "program has no check statement", "");
    return jobs;
}

}  // namespace monoflow::dsl
