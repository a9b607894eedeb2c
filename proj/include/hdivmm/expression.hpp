#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hdivmm {

/// Small arithmetic expression: + - * /, unary minus, parentheses, numeric
/// literals, pi, sin, cos, exp and a fixed set of named variables.
class Expression {
public:
    /// Throws ParseError with the offending position on bad input.
    static Expression parse(std::string_view text, const std::vector<std::string>& variables = {"x", "y"});
    static Expression constant(double value);

    /// `values` follows the order of the variable list given to parse().
    double operator()(const double* values) const;
    double operator()(double x, double y) const {
        const double v[2] = {x, y};
        return (*this)(v);
    }

    const std::string& text() const { return text_; }
    bool is_constant() const;

    struct Node;

private:
    std::shared_ptr<const Node> root_;
    std::string text_;
};

class ExpressionError : public std::runtime_error {
public:
    ExpressionError(const std::string& what, std::size_t pos) : std::runtime_error(what), pos_(pos) {}
    std::size_t position() const noexcept { return pos_; }

private:
    std::size_t pos_;
};

} // namespace hdivmm
