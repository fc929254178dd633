#pragma once

// Small arithmetic language for deriving the point variable v_p:
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | primary
//   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// Functions: abs, sqrt, min, max. Names resolve to slots of a caller-provided
// variable list at compile time.

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mfseg {

class Expression {
 public:
  /// Throws IngestError on syntax errors and unknown names.
  static Expression compile(const std::string& source, const std::vector<std::string>& variables);

  /// `values` is indexed like the variable list passed to compile().
  double evaluate(std::span<const double> values) const;
  /// Slots referenced by the expression.
  const std::vector<std::size_t>& used_slots() const { return used_; }
  const std::string& source() const { return source_; }

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::vector<std::size_t> used_;
  std::string source_;
};

}  // namespace mfseg
