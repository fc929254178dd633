#include "mfseg/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

#include "mfseg/error.hpp"

namespace mfseg {

struct Expression::Node {
  enum class Kind { Number, Variable, Neg, Add, Sub, Mul, Div, Call } kind = Kind::Number;
  double number = 0;
  std::size_t slot = 0;
  std::string function;
  std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Kind = Expression::Node::Kind;

class Parser {
 public:
  Parser(const std::string& src, const std::vector<std::string>& vars, std::vector<std::size_t>& used)
      : src_(src), vars_(vars), used_(used) {}

  NodePtr parse() {
    auto n = expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw IngestError("expression '" + src_ + "': " + msg + " at column " + std::to_string(pos_ + 1));
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static NodePtr make(Kind k, std::vector<NodePtr> args = {}) {
    auto n = std::make_shared<Expression::Node>();
    n->kind = k;
    n->args = std::move(args);
    return n;
  }

  NodePtr expr() {
    auto lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make(Kind::Add, {lhs, term()});
      } else if (accept('-')) {
        lhs = make(Kind::Sub, {lhs, term()});
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    auto lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = make(Kind::Mul, {lhs, unary()});
      } else if (accept('/')) {
        lhs = make(Kind::Div, {lhs, unary()});
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Kind::Neg, {unary()});
    if (accept('+')) return unary();
    return primary();
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    if (accept('(')) {
      auto n = expr();
      if (!accept(')')) fail("expected ')'");
      return n;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = src_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      auto n = std::make_shared<Expression::Node>();
      n->kind = Kind::Number;
      n->number = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
      const std::string name = src_.substr(start, pos_ - start);
      if (accept('(')) return call(name);
      const auto it = std::find(vars_.begin(), vars_.end(), name);
      if (it == vars_.end()) {
        pos_ = start;
        fail("unknown variable '" + name + "'");
      }
      auto n = std::make_shared<Expression::Node>();
      n->kind = Kind::Variable;
      n->slot = static_cast<std::size_t>(it - vars_.begin());
      if (std::find(used_.begin(), used_.end(), n->slot) == used_.end()) used_.push_back(n->slot);
      return n;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr call(const std::string& name) {
    std::size_t arity = 0;
    if (name == "abs" || name == "sqrt") {
      arity = 1;
    } else if (name == "min" || name == "max") {
      arity = 2;
    } else {
      fail("unknown function '" + name + "'");
    }
    std::vector<NodePtr> args{expr()};
    while (accept(',')) args.push_back(expr());
    if (!accept(')')) fail("expected ')'");
    if (args.size() != arity) fail(name + " takes " + std::to_string(arity) + " argument(s)");
    auto n = std::make_shared<Expression::Node>();
    n->kind = Kind::Call;
    n->function = name;
    n->args = std::move(args);
    return n;
  }

  const std::string& src_;
  const std::vector<std::string>& vars_;
  std::vector<std::size_t>& used_;
  std::size_t pos_ = 0;
};

double eval(const Expression::Node& n, std::span<const double> v) {
  switch (n.kind) {
    case Kind::Number:
      return n.number;
    case Kind::Variable:
      return v[n.slot];
    case Kind::Neg:
      return -eval(*n.args[0], v);
    case Kind::Add:
      return eval(*n.args[0], v) + eval(*n.args[1], v);
    case Kind::Sub:
      return eval(*n.args[0], v) - eval(*n.args[1], v);
    case Kind::Mul:
      return eval(*n.args[0], v) * eval(*n.args[1], v);
    case Kind::Div:
      return eval(*n.args[0], v) / eval(*n.args[1], v);
    case Kind::Call: {
      const double a = eval(*n.args[0], v);
      if (n.function == "abs") return std::fabs(a);
      if (n.function == "sqrt") return std::sqrt(a);
      const double b = eval(*n.args[1], v);
      return n.function == "min" ? std::min(a, b) : std::max(a, b);
    }
  }
  return 0;
}

}  // namespace

Expression Expression::compile(const std::string& source, const std::vector<std::string>& variables) {
  Expression e;
  e.source_ = source;
  Parser p(source, variables, e.used_);
  e.root_ = p.parse();
  return e;
}

double Expression::evaluate(std::span<const double> values) const { return eval(*root_, values); }

}  // namespace mfseg
