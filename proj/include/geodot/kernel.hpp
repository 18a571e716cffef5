#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "geodot/errors.hpp"

namespace geodot {

// Parsed, differentiable representation of a weight kernel K(x) > 0 on R^n.
//
// Grammar (conventional precedence, ^ binds tighter than unary minus):
//   expr    := term (('+'|'-') term)*
//   term    := unary (('*'|'/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?            (right associative)
//   primary := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//   var     := 'x' digits                       (1-based, x1..xn)
//   func    := sin | cos | exp | log | sqrt | abs | norm
// norm takes the literal token `x` and denotes the Euclidean norm of the
// full state vector.
//
// Evaluation is pure; a KernelExpr is immutable after parse and may be used
// concurrently from any number of threads.
class KernelExpr {
public:
    static KernelExpr parse(const std::string& src, int dim);

    int dim() const { return dim_; }
    const std::string& source() const { return src_; }
    bool uses_norm() const { return uses_norm_; }

    // Reparseable canonical form; parse(to_string()) evaluates identically.
    std::string to_string() const;

    // K(x).  Throws PositivityError if the value is <= 0 or non-finite,
    // DomainError if a primitive leaves its domain.
    double value(const Eigen::VectorXd& x) const;

    // Forward-mode dual-number gradient / nested-dual Hessian.  At a point
    // where norm(x) (or abs) hits its kink the derivative contribution is
    // taken as zero and *nonsmooth is set.  The Hessian is symmetrized.
    Eigen::VectorXd gradient(const Eigen::VectorXd& x, bool* nonsmooth = nullptr) const;
    Eigen::MatrixXd hessian(const Eigen::VectorXd& x, bool* nonsmooth = nullptr) const;

    // Raw evaluation without the positivity check (used by the positivity
    // check itself and by tests).
    double value_unchecked(const Eigen::VectorXd& x) const;

private:
    enum class Op : std::uint8_t {
        Num, Pi, Var, Norm,
        Add, Sub, Mul, Div, Pow, Neg,
        Sin, Cos, Exp, Log, Sqrt, Abs
    };
    struct Node {
        Op op;
        double num = 0.0;   // Num payload
        int var = 0;        // Var payload (0-based)
        int a = -1, b = -1; // child indices
        bool is_const = true;
    };

    KernelExpr() = default;

    template <class S>
    S eval_node(int idx, const S* vars, bool* nonsmooth) const;

    void print_node(int idx, int parent_prec, std::string& out) const;

    int dim_ = 0;
    int root_ = -1;
    bool uses_norm_ = false;
    std::string src_;
    std::vector<Node> nodes_;

    friend class Parser;
};

// Homotopy embedding K_hat(x, alpha) = (1 - alpha) + alpha * K(x).
// alpha = 0 is identically 1 (the uniform environment); alpha = 1 is K.
class HomotopyKernel {
public:
    HomotopyKernel(std::shared_ptr<const KernelExpr> base, double alpha);

    double alpha() const { return alpha_; }
    const KernelExpr& base() const { return *base_; }
    bool uses_norm() const { return alpha_ > 0.0 && base_->uses_norm(); }

    // (1-alpha) + alpha*K(x); exact 1.0 at alpha = 0 and exact K(x) at
    // alpha = 1.  Throws PositivityError if the blend is <= 0 or non-finite.
    double value(const Eigen::VectorXd& x) const;
    // alpha * grad K(x), alpha * hess K(x).
    Eigen::VectorXd gradient(const Eigen::VectorXd& x, bool* nonsmooth = nullptr) const;
    Eigen::MatrixXd hessian(const Eigen::VectorXd& x, bool* nonsmooth = nullptr) const;

private:
    std::shared_ptr<const KernelExpr> base_;
    double alpha_;
};

} // namespace geodot
