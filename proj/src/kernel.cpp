#include "geodot/kernel.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>

namespace geodot {

namespace {

// ----------------------------------------------------------------------
// Forward-mode dual numbers.  Dual<double> carries one directional
// derivative; Dual<Dual<double>> carries a second direction for Hessians.
// ----------------------------------------------------------------------
template <class T>
struct Dual {
    T v{};
    T d{};
    Dual() = default;
    Dual(double x) : v(x), d{} {}
    Dual(T xv, T xd) : v(std::move(xv)), d(std::move(xd)) {}
};

inline double scalar_of(double x) { return x; }
template <class T>
double scalar_of(const Dual<T>& x) { return scalar_of(x.v); }

template <class T> Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) { return {a.v + b.v, a.d + b.d}; }
template <class T> Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) { return {a.v - b.v, a.d - b.d}; }
template <class T> Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.d}; }
template <class T> Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
    return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T> Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
    if (scalar_of(b) == 0.0) throw DomainError("division by zero");
    T q = a.v / b.v;
    return {q, (a.d - q * b.d) / b.v};
}
template <class T> Dual<T> operator*(double a, const Dual<T>& b) { return Dual<T>(a) * b; }
template <class T> Dual<T> operator*(const Dual<T>& a, double b) { return a * Dual<T>(b); }
template <class T> Dual<T> operator/(double a, const Dual<T>& b) { return Dual<T>(a) / b; }

using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;

template <class T> Dual<T> sin(const Dual<T>& u) { return {sin(u.v), cos(u.v) * u.d}; }
template <class T> Dual<T> cos(const Dual<T>& u) { return {cos(u.v), -(sin(u.v) * u.d)}; }
template <class T> Dual<T> exp(const Dual<T>& u) { T e = exp(u.v); return {e, e * u.d}; }
template <class T> Dual<T> log(const Dual<T>& u) {
    if (scalar_of(u) <= 0.0) throw DomainError("log of a non-positive value");
    return {log(u.v), u.d / u.v};
}
template <class T> Dual<T> sqrt(const Dual<T>& u) {
    double sv = scalar_of(u);
    if (sv < 0.0) throw DomainError("sqrt of a negative value");
    if (sv == 0.0) throw DomainError("sqrt is not differentiable at zero");
    T r = sqrt(u.v);
    return {r, u.d / (2.0 * r)};
}

double plain_log(double x) {
    if (x <= 0.0) throw DomainError("log of a non-positive value");
    return std::log(x);
}
double plain_sqrt(double x) {
    if (x < 0.0) throw DomainError("sqrt of a negative value");
    return std::sqrt(x);
}
inline double checked_log(double x) { return plain_log(x); }
inline double checked_sqrt(double x) { return plain_sqrt(x); }
template <class T> Dual<T> checked_log(const Dual<T>& u) { return log(u); }
template <class T> Dual<T> checked_sqrt(const Dual<T>& u) { return sqrt(u); }

inline double checked_div(double a, double b) {
    if (b == 0.0) throw DomainError("division by zero");
    return a / b;
}
template <class T> Dual<T> checked_div(const Dual<T>& a, const Dual<T>& b) { return a / b; }

// Integer power by repeated multiplication (supports negative bases).
template <class S>
S ipow(const S& base, long long e) {
    if (e == 0) return S(1.0);
    bool neg = e < 0;
    unsigned long long k = neg ? static_cast<unsigned long long>(-e) : static_cast<unsigned long long>(e);
    if (neg && scalar_of(base) == 0.0) throw DomainError("division by zero");
    S acc(1.0);
    S sq = base;
    while (k) {
        if (k & 1ull) acc = acc * sq;
        sq = sq * sq;
        k >>= 1;
    }
    if (neg) return S(1.0) / acc;
    return acc;
}

} // namespace

// ----------------------------------------------------------------------
// Parser
// ----------------------------------------------------------------------
class Parser {
public:
    Parser(const std::string& src, int dim, KernelExpr& out)
        : src_(src), dim_(dim), k_(out) {}

    void run() {
        k_.root_ = parse_expr();
        skip_ws();
        if (pos_ != src_.size())
            throw ParseError("unexpected trailing input", pos_);
        finalize_pow_nodes();
    }

private:
    using Op = KernelExpr::Op;
    using Node = KernelExpr::Node;

    const std::string& src_;
    int dim_;
    KernelExpr& k_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) { ++pos_; return true; }
        return false;
    }
    void expect(char c, const char* what) {
        if (!eat(c)) throw ParseError(std::string("expected '") + c + "' " + what, pos_);
    }

    int add(Node n) {
        k_.nodes_.push_back(n);
        return static_cast<int>(k_.nodes_.size()) - 1;
    }
    int add_unary(Op op, int a) {
        Node n;
        n.op = op;
        n.a = a;
        n.is_const = k_.nodes_[a].is_const;
        return add(n);
    }
    int add_binary(Op op, int a, int b) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.is_const = k_.nodes_[a].is_const && k_.nodes_[b].is_const;
        return add(n);
    }

    int parse_expr() {
        int lhs = parse_term();
        for (;;) {
            skip_ws();
            if (eat('+')) lhs = add_binary(Op::Add, lhs, parse_term());
            else if (eat('-')) lhs = add_binary(Op::Sub, lhs, parse_term());
            else return lhs;
        }
    }
    int parse_term() {
        int lhs = parse_unary();
        for (;;) {
            skip_ws();
            if (eat('*')) lhs = add_binary(Op::Mul, lhs, parse_unary());
            else if (eat('/')) lhs = add_binary(Op::Div, lhs, parse_unary());
            else return lhs;
        }
    }
    int parse_unary() {
        skip_ws();
        if (eat('-')) return add_unary(Op::Neg, parse_unary());
        return parse_power();
    }
    int parse_power() {
        int base = parse_primary();
        skip_ws();
        if (eat('^')) return add_binary(Op::Pow, base, parse_unary());
        return base;
    }

    int parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            int e = parse_expr();
            expect(')', "to close parenthesis");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }

    int parse_number() {
        double val = 0.0;
        const char* first = src_.data() + pos_;
        const char* last = src_.data() + src_.size();
        auto [ptr, ec] = std::from_chars(first, last, val);
        if (ec != std::errc() || ptr == first)
            throw ParseError("malformed number", pos_);
        pos_ = static_cast<std::size_t>(ptr - src_.data());
        Node n;
        n.op = Op::Num;
        n.num = val;
        n.is_const = true;
        return add(n);
    }

    int parse_ident() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        std::string id = src_.substr(start, pos_ - start);

        if (id == "pi") {
            Node n;
            n.op = Op::Pi;
            n.is_const = true;
            return add(n);
        }
        if (id.size() > 1 && id[0] == 'x' &&
            id.find_first_not_of("0123456789", 1) == std::string::npos) {
            long idx = std::strtol(id.c_str() + 1, nullptr, 10);
            if (idx < 1 || idx > dim_)
                throw ParseError("variable index out of range (have x1..x" +
                                     std::to_string(dim_) + ")",
                                 start);
            Node n;
            n.op = Op::Var;
            n.var = static_cast<int>(idx - 1);
            n.is_const = false;
            return add(n);
        }

        Op fop;
        if (id == "sin") fop = Op::Sin;
        else if (id == "cos") fop = Op::Cos;
        else if (id == "exp") fop = Op::Exp;
        else if (id == "log") fop = Op::Log;
        else if (id == "sqrt") fop = Op::Sqrt;
        else if (id == "abs") fop = Op::Abs;
        else if (id == "norm") {
            expect('(', "after norm");
            skip_ws();
            std::size_t vstart = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            if (src_.substr(vstart, pos_ - vstart) != "x")
                throw ParseError("norm takes the literal token x (the full state vector)", vstart);
            expect(')', "to close norm");
            k_.uses_norm_ = true;
            Node n;
            n.op = Op::Norm;
            n.is_const = false;
            return add(n);
        } else {
            throw ParseError("unknown identifier '" + id + "'", start);
        }
        expect('(', ("after " + id).c_str());
        int arg = parse_expr();
        expect(')', "to close function argument");
        return add_unary(fop, arg);
    }

    // Constant integral exponents switch Pow nodes to repeated
    // multiplication; everything else uses exp(b*log(a)) at evaluation.
    void finalize_pow_nodes() {
        for (auto& n : k_.nodes_) {
            if (n.op != Op::Pow) continue;
            const Node& e = k_.nodes_[n.b];
            if (!e.is_const) continue;
            double ev;
            try {
                ev = k_.eval_node<double>(n.b, nullptr, nullptr);
            } catch (const std::exception&) {
                continue;
            }
            if (std::isfinite(ev) && ev == std::nearbyint(ev) && std::abs(ev) <= 1024.0) {
                n.var = 1; // marks integer-power mode
                n.num = ev;
            }
        }
    }
};

KernelExpr KernelExpr::parse(const std::string& src, int dim) {
    if (dim < 1) throw ParseError("dimension must be positive", 0);
    bool blank = true;
    for (char c : src)
        if (!std::isspace(static_cast<unsigned char>(c))) { blank = false; break; }
    if (blank) throw ParseError("empty expression", 0);
    KernelExpr k;
    k.dim_ = dim;
    k.src_ = src;
    Parser p(src, dim, k);
    p.run();
    return k;
}

// ----------------------------------------------------------------------
// Evaluation
// ----------------------------------------------------------------------
template <class S>
S KernelExpr::eval_node(int idx, const S* vars, bool* nonsmooth) const {
    const Node& n = nodes_[idx];
    switch (n.op) {
        case Op::Num: return S(n.num);
        case Op::Pi: return S(std::numbers::pi);
        case Op::Var: return vars[n.var];
        case Op::Norm: {
            S r2{};
            for (int i = 0; i < dim_; ++i) r2 = r2 + vars[i] * vars[i];
            if (scalar_of(r2) == 0.0) {
                if (nonsmooth) *nonsmooth = true;
                return S(0.0);
            }
            return checked_sqrt(r2);
        }
        case Op::Add: return eval_node(n.a, vars, nonsmooth) + eval_node(n.b, vars, nonsmooth);
        case Op::Sub: return eval_node(n.a, vars, nonsmooth) - eval_node(n.b, vars, nonsmooth);
        case Op::Mul: return eval_node(n.a, vars, nonsmooth) * eval_node(n.b, vars, nonsmooth);
        case Op::Div:
            return checked_div(eval_node(n.a, vars, nonsmooth), eval_node(n.b, vars, nonsmooth));
        case Op::Pow: {
            S base = eval_node(n.a, vars, nonsmooth);
            if (n.var == 1) return ipow(base, static_cast<long long>(n.num));
            S e = eval_node(n.b, vars, nonsmooth);
            if (scalar_of(base) <= 0.0)
                throw DomainError("power with non-integer exponent requires a positive base");
            return exp(e * checked_log(base));
        }
        case Op::Neg: return -eval_node(n.a, vars, nonsmooth);
        case Op::Sin: return sin(eval_node(n.a, vars, nonsmooth));
        case Op::Cos: return cos(eval_node(n.a, vars, nonsmooth));
        case Op::Exp: return exp(eval_node(n.a, vars, nonsmooth));
        case Op::Log: return checked_log(eval_node(n.a, vars, nonsmooth));
        case Op::Sqrt: return checked_sqrt(eval_node(n.a, vars, nonsmooth));
        case Op::Abs: {
            S u = eval_node(n.a, vars, nonsmooth);
            double sv = scalar_of(u);
            if (sv > 0.0) return u;
            if (sv < 0.0) return -u;
            if (nonsmooth) *nonsmooth = true;
            return S(0.0);
        }
    }
    throw std::logic_error("corrupt expression tree");
}

double KernelExpr::value_unchecked(const Eigen::VectorXd& x) const {
    if (x.size() != dim_)
        throw DomainError("point dimension mismatch: expected " + std::to_string(dim_));
    return eval_node<double>(root_, x.data(), nullptr);
}

double KernelExpr::value(const Eigen::VectorXd& x) const {
    double v = value_unchecked(x);
    if (!std::isfinite(v) || v <= 0.0) {
        std::ostringstream os;
        os << "kernel value " << v << " is not strictly positive at x = [" << x.transpose() << "]";
        throw PositivityError(os.str());
    }
    return v;
}

Eigen::VectorXd KernelExpr::gradient(const Eigen::VectorXd& x, bool* nonsmooth) const {
    if (x.size() != dim_)
        throw DomainError("point dimension mismatch: expected " + std::to_string(dim_));
    Eigen::VectorXd g(dim_);
    std::vector<Dual<double>> vars(dim_);
    for (int d = 0; d < dim_; ++d) {
        for (int i = 0; i < dim_; ++i) vars[i] = Dual<double>(x[i], i == d ? 1.0 : 0.0);
        g[d] = eval_node<Dual<double>>(root_, vars.data(), nonsmooth).d;
    }
    return g;
}

Eigen::MatrixXd KernelExpr::hessian(const Eigen::VectorXd& x, bool* nonsmooth) const {
    if (x.size() != dim_)
        throw DomainError("point dimension mismatch: expected " + std::to_string(dim_));
    using DD = Dual<Dual<double>>;
    Eigen::MatrixXd H(dim_, dim_);
    std::vector<DD> vars(dim_);
    for (int d1 = 0; d1 < dim_; ++d1) {
        for (int d2 = d1; d2 < dim_; ++d2) {
            for (int i = 0; i < dim_; ++i)
                vars[i] = DD(Dual<double>(x[i], i == d2 ? 1.0 : 0.0),
                             Dual<double>(i == d1 ? 1.0 : 0.0, 0.0));
            double h = eval_node<DD>(root_, vars.data(), nonsmooth).d.d;
            H(d1, d2) = h;
            H(d2, d1) = h;
        }
    }
    return H;
}

// ----------------------------------------------------------------------
// Printing
// ----------------------------------------------------------------------
namespace {
std::string fmt_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}
} // namespace

void KernelExpr::print_node(int idx, int ctx_prec, std::string& out) const {
    const Node& n = nodes_[idx];
    auto prec = [](Op op) {
        switch (op) {
            case Op::Add: case Op::Sub: return 1;
            case Op::Mul: case Op::Div: return 2;
            case Op::Neg: return 3;
            case Op::Pow: return 4;
            default: return 5;
        }
    };
    int p = prec(n.op);
    bool wrap = p < ctx_prec;
    if (wrap) out += '(';
    switch (n.op) {
        case Op::Num: out += fmt_double(n.num); break;
        case Op::Pi: out += "pi"; break;
        case Op::Var: out += "x" + std::to_string(n.var + 1); break;
        case Op::Norm: out += "norm(x)"; break;
        case Op::Add: print_node(n.a, 1, out); out += '+'; print_node(n.b, 2, out); break;
        case Op::Sub: print_node(n.a, 1, out); out += '-'; print_node(n.b, 2, out); break;
        case Op::Mul: print_node(n.a, 2, out); out += '*'; print_node(n.b, 3, out); break;
        case Op::Div: print_node(n.a, 2, out); out += '/'; print_node(n.b, 3, out); break;
        case Op::Pow: print_node(n.a, 5, out); out += '^'; print_node(n.b, 3, out); break;
        case Op::Neg: out += '-'; print_node(n.a, 4, out); break;
        case Op::Sin: out += "sin("; print_node(n.a, 0, out); out += ')'; break;
        case Op::Cos: out += "cos("; print_node(n.a, 0, out); out += ')'; break;
        case Op::Exp: out += "exp("; print_node(n.a, 0, out); out += ')'; break;
        case Op::Log: out += "log("; print_node(n.a, 0, out); out += ')'; break;
        case Op::Sqrt: out += "sqrt("; print_node(n.a, 0, out); out += ')'; break;
        case Op::Abs: out += "abs("; print_node(n.a, 0, out); out += ')'; break;
    }
    if (wrap) out += ')';
}

std::string KernelExpr::to_string() const {
    std::string out;
    print_node(root_, 0, out);
    return out;
}

// ----------------------------------------------------------------------
// Homotopy embedding
// ----------------------------------------------------------------------
HomotopyKernel::HomotopyKernel(std::shared_ptr<const KernelExpr> base, double alpha)
    : base_(std::move(base)), alpha_(alpha) {
    if (!base_) throw DomainError("homotopy kernel requires a base kernel");
    if (!(alpha_ >= 0.0 && alpha_ <= 1.0))
        throw DomainError("homotopy level must lie in [0, 1]");
}

double HomotopyKernel::value(const Eigen::VectorXd& x) const {
    if (alpha_ == 0.0) return 1.0;
    if (alpha_ == 1.0) return base_->value(x);
    double v = (1.0 - alpha_) + alpha_ * base_->value_unchecked(x);
    if (!std::isfinite(v) || v <= 0.0) {
        std::ostringstream os;
        os << "blended kernel value " << v << " is not strictly positive at x = ["
           << x.transpose() << "] (alpha = " << alpha_ << ")";
        throw PositivityError(os.str());
    }
    return v;
}

Eigen::VectorXd HomotopyKernel::gradient(const Eigen::VectorXd& x, bool* nonsmooth) const {
    if (alpha_ == 0.0) return Eigen::VectorXd::Zero(base_->dim());
    if (alpha_ == 1.0) return base_->gradient(x, nonsmooth);
    return alpha_ * base_->gradient(x, nonsmooth);
}

Eigen::MatrixXd HomotopyKernel::hessian(const Eigen::VectorXd& x, bool* nonsmooth) const {
    if (alpha_ == 0.0) return Eigen::MatrixXd::Zero(base_->dim(), base_->dim());
    if (alpha_ == 1.0) return base_->hessian(x, nonsmooth);
    return alpha_ * base_->hessian(x, nonsmooth);
}

} // namespace geodot
