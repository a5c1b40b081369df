#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fblab/errors.hpp"

// Coefficient expressions over the variables t, x1..xn, y, z1..zd, u1..uk.
// Operators: + - * / ^ (^ binds tighter than unary minus and associates
// right); functions: sin cos exp log tanh abs sqrt (unary), min max (binary).
// Scalar and batch evaluation are required to agree bit-for-bit: the batch
// path applies the same IEEE operation per element through the kernel layer
// and calls the same libm routines for transcendentals.

namespace fblab::expr {

struct Dims {
    int n = 1; // state
    int d = 1; // noise / z
    int k = 1; // control
};

enum class Op : std::uint8_t {
    number, variable,
    add, sub, mul, div, pow,
    neg,
    sin, cos, exp, log, tanh, abs, sqrt,
    min, max,
};

struct VarRef {
    char kind = 't'; // 't', 'x', 'y', 'z', 'u'
    int index = 0;   // zero-based; unused for t and y
};

struct Node {
    Op op = Op::number;
    double number = 0.0;
    VarRef var;
    int a = -1;
    int b = -1;
    std::uint32_t offset = 0; // byte position in the source, for diagnostics
};

/// One evaluation point.
struct Point {
    double t = 0.0;
    std::span<const double> x;
    double y = 0.0;
    std::span<const double> z;
    std::span<const double> u;
};

/// A batch binding is either a broadcast scalar or an array of length m.
struct Binding {
    const double* data = nullptr;
    double value = 0.0;

    static Binding scalar(double v) { return {nullptr, v}; }
    static Binding array(const double* p) { return {p, 0.0}; }
    static Binding array(std::span<const double> s) { return {s.data(), 0.0}; }
};

struct BatchPoint {
    std::size_t m = 0;
    Binding t;
    std::vector<Binding> x;
    Binding y;
    std::vector<Binding> z;
    std::vector<Binding> u;
};

/// Scratch buffer pool so batch evaluation does not allocate per node.
class Workspace {
public:
    std::vector<double> take(std::size_t m);
    void give(std::vector<double>&& buf);

private:
    std::vector<std::vector<double>> pool_;
};

class Expression {
public:
    Expression() = default;

    double evaluate(const Point& p) const;
    void eval_batch(const BatchPoint& p, std::span<double> out, Workspace& ws) const;

    /// Canonical form with minimal parentheses; parses back to the same tree.
    std::string print() const;

    bool uses(char kind) const; // any of 't','x','y','z','u'
    const Dims& dims() const { return dims_; }

    bool operator==(const Expression& other) const;

    const std::vector<Node>& nodes() const { return nodes_; }
    int root() const { return root_; }

    friend Expression parse(const std::string&, const Dims&);

private:
    std::vector<Node> nodes_;
    int root_ = -1;
    Dims dims_;
};

/// Throws SyntaxError, UnknownVariable or DimensionError.
Expression parse(const std::string& source, const Dims& dims);

} // namespace fblab::expr
