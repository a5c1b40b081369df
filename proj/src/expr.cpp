#include "fblab/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>

#include "fblab/kernels.hpp"

namespace fblab::expr {

namespace {

constexpr int kMaxDepth = 512;

struct FunctionInfo {
    const char* name;
    Op op;
    int arity;
};

constexpr FunctionInfo kFunctions[] = {
    {"sin", Op::sin, 1},  {"cos", Op::cos, 1},   {"exp", Op::exp, 1},
    {"log", Op::log, 1},  {"tanh", Op::tanh, 1}, {"abs", Op::abs, 1},
    {"sqrt", Op::sqrt, 1}, {"min", Op::min, 2},  {"max", Op::max, 2},
};

const FunctionInfo* find_function(const std::string& name) {
    for (const auto& f : kFunctions)
        if (name == f.name) return &f;
    return nullptr;
}

class Parser {
public:
    Parser(const std::string& src, const Dims& dims, std::vector<Node>& nodes)
        : src_(src), dims_(dims), nodes_(nodes) {}

    int run() {
        const int root = additive();
        skip_ws();
        if (pos_ != src_.size())
            throw SyntaxError(pos_, {"operator", "end of input"});
        return root;
    }

private:
    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    int make(Node n) {
        nodes_.push_back(n);
        return static_cast<int>(nodes_.size()) - 1;
    }

    struct DepthGuard {
        Parser& p;
        explicit DepthGuard(Parser& parser) : p(parser) {
            if (++p.depth_ > kMaxDepth)
                throw SyntaxError(p.pos_, {"expression nested at most " +
                                           std::to_string(kMaxDepth) + " levels deep"});
        }
        ~DepthGuard() { --p.depth_; }
    };

    int additive() {
        DepthGuard guard(*this);
        int lhs = multiplicative();
        for (;;) {
            skip_ws();
            const std::uint32_t at = static_cast<std::uint32_t>(pos_);
            if (eat('+'))
                lhs = make({Op::add, 0, {}, lhs, multiplicative(), at});
            else if (eat('-'))
                lhs = make({Op::sub, 0, {}, lhs, multiplicative(), at});
            else
                return lhs;
        }
    }

    int multiplicative() {
        DepthGuard guard(*this);
        int lhs = unary();
        for (;;) {
            skip_ws();
            const std::uint32_t at = static_cast<std::uint32_t>(pos_);
            if (eat('*'))
                lhs = make({Op::mul, 0, {}, lhs, unary(), at});
            else if (eat('/'))
                lhs = make({Op::div, 0, {}, lhs, unary(), at});
            else
                return lhs;
        }
    }

    int unary() {
        DepthGuard guard(*this);
        skip_ws();
        const std::uint32_t at = static_cast<std::uint32_t>(pos_);
        if (eat('-')) return make({Op::neg, 0, {}, unary(), -1, at});
        return power();
    }

    int power() {
        DepthGuard guard(*this);
        int base = primary();
        skip_ws();
        const std::uint32_t at = static_cast<std::uint32_t>(pos_);
        if (eat('^')) return make({Op::pow, 0, {}, base, unary(), at});
        return base;
    }

    int primary() {
        DepthGuard guard(*this);
        skip_ws();
        if (pos_ >= src_.size())
            throw SyntaxError(pos_, {"number", "variable", "function", "'('"});
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            const int inner = additive();
            if (!eat(')')) throw SyntaxError(pos_, {"')'"});
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        throw SyntaxError(pos_, {"number", "variable", "function", "'('"});
    }

    int number() {
        const std::size_t start = pos_;
        std::size_t digits = 0;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
            ++digits;
        }
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                ++pos_;
                ++digits;
            }
        }
        if (digits == 0) throw SyntaxError(start, {"number"});
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_])))
                throw SyntaxError(pos_, {"exponent digit"});
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        }
        const std::string text = src_.substr(start, pos_ - start);
        Node n;
        n.op = Op::number;
        n.number = std::strtod(text.c_str(), nullptr);
        n.offset = static_cast<std::uint32_t>(start);
        return make(n);
    }

    int identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        const std::string name = src_.substr(start, pos_ - start);

        if (const FunctionInfo* fn = find_function(name)) {
            if (!eat('(')) throw SyntaxError(pos_, {"'('"});
            Node n;
            n.op = fn->op;
            n.offset = static_cast<std::uint32_t>(start);
            n.a = additive();
            if (fn->arity == 2) {
                if (!eat(',')) throw SyntaxError(pos_, {"','"});
                n.b = additive();
            }
            if (!eat(')')) throw SyntaxError(pos_, {fn->arity == 2 ? "')'" : "',' is not allowed here; ')'"});
            return make(n);
        }

        Node n;
        n.op = Op::variable;
        n.offset = static_cast<std::uint32_t>(start);
        if (name == "t") {
            n.var = {'t', 0};
            return make(n);
        }
        if (name == "y") {
            n.var = {'y', 0};
            return make(n);
        }
        if (name.size() >= 2 && (name[0] == 'x' || name[0] == 'z' || name[0] == 'u')) {
            bool all_digits = true;
            for (std::size_t i = 1; i < name.size(); ++i)
                if (!std::isdigit(static_cast<unsigned char>(name[i]))) all_digits = false;
            if (all_digits) {
                const int idx = std::atoi(name.c_str() + 1);
                const int limit = name[0] == 'x' ? dims_.n : name[0] == 'z' ? dims_.d : dims_.k;
                if (idx < 1 || idx > limit) throw DimensionError(name, start, limit);
                n.var = {name[0], idx - 1};
                return make(n);
            }
        }
        throw UnknownVariable(name, start);
    }

    const std::string& src_;
    Dims dims_;
    std::vector<Node>& nodes_;
    std::size_t pos_ = 0;
    int depth_ = 0;
};

double apply_unary(Op op, double a, std::uint32_t offset) {
    switch (op) {
    case Op::neg: return -a;
    case Op::sin: return std::sin(a);
    case Op::cos: return std::cos(a);
    case Op::exp: return std::exp(a);
    case Op::tanh: return std::tanh(a);
    case Op::abs: return std::fabs(a);
    case Op::log:
        if (!(a > 0.0)) throw DomainError("log of nonpositive value", offset);
        return std::log(a);
    case Op::sqrt:
        if (a < 0.0) throw DomainError("sqrt of negative value", offset);
        return std::sqrt(a);
    default: throw SolverError("expr", "bad unary opcode");
    }
}

double apply_binary(Op op, double a, double b, std::uint32_t offset) {
    switch (op) {
    case Op::add: return a + b;
    case Op::sub: return a - b;
    case Op::mul: return a * b;
    case Op::min: return a < b ? a : b;
    case Op::max: return a > b ? a : b;
    case Op::div:
        if (b == 0.0) throw DomainError("division by zero", offset);
        return a / b;
    case Op::pow: {
        const double r = std::pow(a, b);
        if (std::isnan(r) && !std::isnan(a) && !std::isnan(b))
            throw DomainError("power with invalid operands", offset);
        return r;
    }
    default: throw SolverError("expr", "bad binary opcode");
    }
}

int precedence(Op op) {
    switch (op) {
    case Op::add:
    case Op::sub: return 1;
    case Op::mul:
    case Op::div: return 2;
    case Op::neg: return 3;
    case Op::pow: return 4;
    default: return 5;
    }
}

} // namespace

Expression parse(const std::string& source, const Dims& dims) {
    Expression e;
    e.dims_ = dims;
    Parser p(source, dims, e.nodes_);
    e.root_ = p.run();
    return e;
}

double Expression::evaluate(const Point& p) const {
    std::function<double(int)> eval = [&](int idx) -> double {
        const Node& n = nodes_[static_cast<std::size_t>(idx)];
        switch (n.op) {
        case Op::number: return n.number;
        case Op::variable:
            switch (n.var.kind) {
            case 't': return p.t;
            case 'y': return p.y;
            case 'x': return p.x[static_cast<std::size_t>(n.var.index)];
            case 'z': return p.z[static_cast<std::size_t>(n.var.index)];
            default: return p.u[static_cast<std::size_t>(n.var.index)];
            }
        default:
            if (n.b >= 0) return apply_binary(n.op, eval(n.a), eval(n.b), n.offset);
            return apply_unary(n.op, eval(n.a), n.offset);
        }
    };
    return eval(root_);
}

std::vector<double> Workspace::take(std::size_t m) {
    if (!pool_.empty()) {
        std::vector<double> buf = std::move(pool_.back());
        pool_.pop_back();
        buf.resize(m);
        return buf;
    }
    return std::vector<double>(m);
}

void Workspace::give(std::vector<double>&& buf) { pool_.push_back(std::move(buf)); }

namespace {

void bind_into(const Binding& b, std::span<double> out) {
    if (b.data)
        kernels::copy({b.data, out.size()}, out);
    else
        kernels::fill(out, b.value);
}

} // namespace

void Expression::eval_batch(const BatchPoint& p, std::span<double> out, Workspace& ws) const {
    const std::size_t m = p.m;
    if (out.size() != m) throw SolverError("expr", "batch output size mismatch");

    std::function<std::vector<double>(int)> eval = [&](int idx) -> std::vector<double> {
        const Node& n = nodes_[static_cast<std::size_t>(idx)];
        switch (n.op) {
        case Op::number: {
            std::vector<double> buf = ws.take(m);
            kernels::fill(buf, n.number);
            return buf;
        }
        case Op::variable: {
            std::vector<double> buf = ws.take(m);
            const Binding* b = nullptr;
            switch (n.var.kind) {
            case 't': b = &p.t; break;
            case 'y': b = &p.y; break;
            case 'x': b = &p.x[static_cast<std::size_t>(n.var.index)]; break;
            case 'z': b = &p.z[static_cast<std::size_t>(n.var.index)]; break;
            default: b = &p.u[static_cast<std::size_t>(n.var.index)]; break;
            }
            bind_into(*b, buf);
            return buf;
        }
        case Op::neg: {
            std::vector<double> a = eval(n.a);
            kernels::neg(a, a);
            return a;
        }
        case Op::abs: {
            std::vector<double> a = eval(n.a);
            kernels::abs(a, a);
            return a;
        }
        case Op::sin:
        case Op::cos:
        case Op::exp:
        case Op::tanh:
        case Op::log:
        case Op::sqrt: {
            std::vector<double> a = eval(n.a);
            // Same scalar libm calls (and domain checks) as Expression::evaluate.
            for (std::size_t i = 0; i < m; ++i) a[i] = apply_unary(n.op, a[i], n.offset);
            return a;
        }
        case Op::pow: {
            std::vector<double> a = eval(n.a);
            std::vector<double> b = eval(n.b);
            for (std::size_t i = 0; i < m; ++i) a[i] = apply_binary(Op::pow, a[i], b[i], n.offset);
            ws.give(std::move(b));
            return a;
        }
        case Op::div: {
            std::vector<double> a = eval(n.a);
            std::vector<double> b = eval(n.b);
            for (std::size_t i = 0; i < m; ++i)
                if (b[i] == 0.0) throw DomainError("division by zero", n.offset);
            kernels::div(a, b, a);
            ws.give(std::move(b));
            return a;
        }
        default: {
            std::vector<double> a = eval(n.a);
            std::vector<double> b = eval(n.b);
            switch (n.op) {
            case Op::add: kernels::add(a, b, a); break;
            case Op::sub: kernels::sub(a, b, a); break;
            case Op::mul: kernels::mul(a, b, a); break;
            case Op::min: kernels::min(a, b, a); break;
            case Op::max: kernels::max(a, b, a); break;
            default: throw SolverError("expr", "bad batch opcode");
            }
            ws.give(std::move(b));
            return a;
        }
        }
    };

    std::vector<double> result = eval(root_);
    kernels::copy(result, out);
    ws.give(std::move(result));
}

bool Expression::uses(char kind) const {
    for (const Node& n : nodes_)
        if (n.op == Op::variable && n.var.kind == kind) return true;
    return false;
}

bool Expression::operator==(const Expression& other) const {
    std::function<bool(int, int)> eq = [&](int i, int j) -> bool {
        const Node& a = nodes_[static_cast<std::size_t>(i)];
        const Node& b = other.nodes_[static_cast<std::size_t>(j)];
        if (a.op != b.op) return false;
        if (a.op == Op::number)
            return std::memcmp(&a.number, &b.number, sizeof(double)) == 0;
        if (a.op == Op::variable) return a.var.kind == b.var.kind && a.var.index == b.var.index;
        if ((a.a >= 0) != (b.a >= 0) || (a.b >= 0) != (b.b >= 0)) return false;
        if (a.a >= 0 && !eq(a.a, b.a)) return false;
        if (a.b >= 0 && !eq(a.b, b.b)) return false;
        return true;
    };
    return root_ >= 0 && other.root_ >= 0 && eq(root_, other.root_);
}

std::string Expression::print() const {
    std::function<std::string(int, int)> pr = [&](int idx, int context) -> std::string {
        const Node& n = nodes_[static_cast<std::size_t>(idx)];
        std::string s;
        switch (n.op) {
        case Op::number: {
            if (std::isinf(n.number)) {
                s = "1e999"; // literal overflow round-trips through strtod
            } else {
                char buf[40];
                std::snprintf(buf, sizeof(buf), "%.17g", n.number);
                s = buf;
            }
            break;
        }
        case Op::variable:
            if (n.var.kind == 't' || n.var.kind == 'y')
                s = std::string(1, n.var.kind);
            else
                s = std::string(1, n.var.kind) + std::to_string(n.var.index + 1);
            break;
        case Op::neg:
            s = "-" + pr(n.a, 3);
            break;
        case Op::add: s = pr(n.a, 1) + " + " + pr(n.b, 2); break;
        case Op::sub: s = pr(n.a, 1) + " - " + pr(n.b, 2); break;
        case Op::mul: s = pr(n.a, 2) + " * " + pr(n.b, 3); break;
        case Op::div: s = pr(n.a, 2) + " / " + pr(n.b, 3); break;
        // Left operand of '^' must be primary; the right parses as a unary.
        case Op::pow: s = pr(n.a, 5) + "^" + pr(n.b, 3); break;
        case Op::min: return "min(" + pr(n.a, 0) + ", " + pr(n.b, 0) + ")";
        case Op::max: return "max(" + pr(n.a, 0) + ", " + pr(n.b, 0) + ")";
        default: {
            const char* name = "?";
            for (const auto& f : kFunctions)
                if (f.op == n.op) name = f.name;
            return std::string(name) + "(" + pr(n.a, 0) + ")";
        }
        }
        if (precedence(n.op) < context) return "(" + s + ")";
        return s;
    };
    return pr(root_, 0);
}

} // namespace fblab::expr
