#include "hdivmm/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace hdivmm {

struct Expression::Node {
    enum class Op { Number, Var, Add, Sub, Mul, Div, Neg, Sin, Cos, Exp } op;
    double value = 0.0;
    int var = -1;
    std::shared_ptr<const Node> a, b;

    double eval(const double* v) const {
        switch (op) {
        case Op::Number: return value;
        case Op::Var: return v[var];
        case Op::Add: return a->eval(v) + b->eval(v);
        case Op::Sub: return a->eval(v) - b->eval(v);
        case Op::Mul: return a->eval(v) * b->eval(v);
        case Op::Div: return a->eval(v) / b->eval(v);
        case Op::Neg: return -a->eval(v);
        case Op::Sin: return std::sin(a->eval(v));
        case Op::Cos: return std::cos(a->eval(v));
        case Op::Exp: return std::exp(a->eval(v));
        }
        return 0.0;
    }
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make(Node::Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

class Parser {
public:
    Parser(std::string_view s, const std::vector<std::string>& vars) : s_(s), vars_(vars) {}

    NodePtr parse() {
        NodePtr n = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ExpressionError("expression '" + std::string(s_) + "': " + msg + " at position " + std::to_string(pos_),
                              pos_);
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        NodePtr n = term();
        for (;;) {
            if (accept('+')) n = make(Node::Op::Add, n, term());
            else if (accept('-')) n = make(Node::Op::Sub, n, term());
            else return n;
        }
    }

    NodePtr term() {
        NodePtr n = unary();
        for (;;) {
            if (accept('*')) n = make(Node::Op::Mul, n, unary());
            else if (accept('/')) n = make(Node::Op::Div, n, unary());
            else return n;
        }
    }

    NodePtr unary() {
        if (accept('-')) return make(Node::Op::Neg, unary());
        if (accept('+')) return unary();
        return primary();
    }

    NodePtr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        if (accept('(')) {
            NodePtr n = expr();
            if (!accept(')')) fail("expected ')'");
            return n;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const std::string rest(s_.substr(pos_));
            char* end = nullptr;
            const double v = std::strtod(rest.c_str(), &end);
            if (end == rest.c_str()) fail("bad number");
            pos_ += static_cast<std::size_t>(end - rest.c_str());
            auto n = std::make_shared<Node>();
            n->op = Node::Op::Number;
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
            const std::string id(s_.substr(start, pos_ - start));
            if (id == "sin" || id == "cos" || id == "exp") {
                if (!accept('(')) fail("expected '(' after " + id);
                NodePtr arg = expr();
                if (!accept(')')) fail("expected ')'");
                return make(id == "sin" ? Node::Op::Sin : id == "cos" ? Node::Op::Cos : Node::Op::Exp, arg);
            }
            if (id == "pi") {
                auto n = std::make_shared<Node>();
                n->op = Node::Op::Number;
                n->value = M_PI;
                return n;
            }
            for (std::size_t i = 0; i < vars_.size(); ++i) {
                if (vars_[i] == id) {
                    auto n = std::make_shared<Node>();
                    n->op = Node::Op::Var;
                    n->var = static_cast<int>(i);
                    return n;
                }
            }
            pos_ = start;
            fail("unknown identifier '" + id + "'");
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    std::string_view s_;
    const std::vector<std::string>& vars_;
    std::size_t pos_ = 0;
};

bool has_var(const Node& n) {
    if (n.op == Node::Op::Var) return true;
    return (n.a && has_var(*n.a)) || (n.b && has_var(*n.b));
}

} // namespace

Expression Expression::parse(std::string_view text, const std::vector<std::string>& variables) {
    Expression e;
    e.root_ = Parser(text, variables).parse();
    e.text_ = std::string(text);
    return e;
}

Expression Expression::constant(double value) {
    Expression e;
    auto n = std::make_shared<Node>();
    n->op = Node::Op::Number;
    n->value = value;
    e.root_ = n;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    e.text_ = buf;
    return e;
}

double Expression::operator()(const double* values) const { return root_->eval(values); }

bool Expression::is_constant() const { return !has_var(*root_); }

} // namespace hdivmm
