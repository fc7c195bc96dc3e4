#include "otsforge/formula.hpp"

#include <cmath>
#include <utility>

#include <fmt/format.h>

#include "otsforge/eval.hpp"

namespace otsforge {
namespace {

struct Sym {
  enum class Tag { num, placeholder, var, op };
  Tag tag = Tag::num;
  double value = 0.0;
  int var = 0;
  OpKind op = OpKind::add;
  std::vector<Sym> args;

  static Sym num(double v) { return Sym{Tag::num, v, 0, OpKind::constant, {}}; }
  static Sym placeholder() { return Sym{Tag::placeholder, 0, 0, OpKind::constant, {}}; }
  static Sym variable(int i) { return Sym{Tag::var, 0, i, OpKind::variable, {}}; }
  static Sym apply(OpKind k, std::vector<Sym> a) {
    return Sym{Tag::op, 0, 0, k, std::move(a)};
  }

  [[nodiscard]] bool is_num() const { return tag == Tag::num; }
  [[nodiscard]] bool is_value(double v) const { return tag == Tag::num && value == v; }
  [[nodiscard]] bool is_constantlike() const {
    return tag == Tag::num || tag == Tag::placeholder;
  }
};

Sym from_tree(const OpTree& tree, int i, bool symbolic) {
  const Node& n = tree.node(i);
  auto c = tree.node_constants(i);
  auto constant = [&](std::size_t k) {
    return symbolic ? Sym::placeholder() : Sym::num(c[k]);
  };
  switch (n.kind) {
    case OpKind::constant: return constant(0);
    case OpKind::variable: return Sym::variable(n.var_index);
    case OpKind::linear: {
      Sym scaled = Sym::apply(OpKind::mul,
                              {constant(0), from_tree(tree, n.children[0], symbolic)});
      return Sym::apply(OpKind::add, {std::move(scaled), constant(1)});
    }
    default: {
      std::vector<Sym> args;
      for (int k = 0; k < n.arity; ++k)
        args.push_back(from_tree(tree, n.children[k], symbolic));
      return Sym::apply(n.kind, std::move(args));
    }
  }
}

// ------------------------------------------------------------------ printing

enum Prec : int { kSum = 1, kProduct = 2, kNegation = 3, kPower = 4, kAtom = 5 };

struct Printed {
  std::string text;
  int prec = kAtom;

  [[nodiscard]] bool leading_minus() const { return !text.empty() && text[0] == '-'; }
};

std::string paren(const std::string& s) { return "(" + s + ")"; }

std::string format_number(double v, int precision) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::string s = fmt::format("{:.{}f}", v, precision);
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string_view function_name(OpKind k) {
  switch (k) {
    case OpKind::sin: return "sin";
    case OpKind::cos: return "cos";
    case OpKind::tan: return "tan";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sqrt: return "sqrt";
    case OpKind::abs: return "abs";
    default: return "";
  }
}

Printed print(const Sym& s, int precision) {
  switch (s.tag) {
    case Sym::Tag::num: return {format_number(s.value, precision), kAtom};
    case Sym::Tag::placeholder: return {"c", kAtom};
    case Sym::Tag::var: return {fmt::format("x{}", s.var), kAtom};
    case Sym::Tag::op: break;
  }
  auto arg = [&](std::size_t k) { return print(s.args[k], precision); };
  switch (s.op) {
    case OpKind::add: {
      Printed l = arg(0), r = arg(1);
      if (r.leading_minus()) return {l.text + " - " + r.text.substr(1), kSum};
      return {l.text + " + " + r.text, kSum};
    }
    case OpKind::sub: {
      Printed l = arg(0), r = arg(1);
      if (r.prec <= kSum) return {l.text + " - " + paren(r.text), kSum};
      if (r.leading_minus()) return {l.text + " + " + r.text.substr(1), kSum};
      return {l.text + " - " + r.text, kSum};
    }
    case OpKind::mul: {
      Printed l = arg(0), r = arg(1);
      std::string lt = l.prec <= kSum ? paren(l.text) : l.text;
      std::string rt = r.prec <= kSum || r.leading_minus() ? paren(r.text) : r.text;
      return {lt + "*" + rt, kProduct};
    }
    case OpKind::div: {
      Printed l = arg(0), r = arg(1);
      std::string lt = l.prec <= kSum ? paren(l.text) : l.text;
      std::string rt = r.prec <= kProduct || r.leading_minus() ? paren(r.text) : r.text;
      return {lt + "/" + rt, kProduct};
    }
    case OpKind::inv: {
      Printed a = arg(0);
      std::string at = a.prec <= kProduct || a.leading_minus() ? paren(a.text) : a.text;
      return {"1/" + at, kProduct};
    }
    case OpKind::neg: {
      Printed a = arg(0);
      std::string at = a.prec <= kSum || a.leading_minus() ? paren(a.text) : a.text;
      return {"-" + at, kNegation};
    }
    case OpKind::pow: {
      Printed l = arg(0), r = arg(1);
      auto wrap = [](const Printed& p) {
        return p.prec < kAtom || p.leading_minus() ? paren(p.text) : p.text;
      };
      return {wrap(l) + "^" + wrap(r), kPower};
    }
    default:
      return {std::string(function_name(s.op)) + paren(arg(0).text), kAtom};
  }
}

// ------------------------------------------------------------ simplification

bool has_variable(const Sym& s) {
  if (s.tag == Sym::Tag::var) return true;
  for (const auto& a : s.args)
    if (has_variable(a)) return true;
  return false;
}

void order_commutative(Sym& s, int precision) {
  if (s.op != OpKind::add && s.op != OpKind::mul) return;
  Sym& a = s.args[0];
  Sym& b = s.args[1];
  const bool ca = a.is_constantlike(), cb = b.is_constantlike();
  bool swap = false;
  if (ca != cb) {
    // constants lead products and trail sums
    swap = s.op == OpKind::mul ? cb : ca;
  } else {
    // a leading minus does not count, so x0 + -x1 prints as x0 - x1
    const std::string ta = print(a, precision).text, tb = print(b, precision).text;
    const std::string_view ka = std::string_view(ta).substr(ta[0] == '-');
    const std::string_view kb = std::string_view(tb).substr(tb[0] == '-');
    swap = kb < ka || (kb == ka && tb < ta);
  }
  if (swap) std::swap(a, b);
}

Sym simplify(Sym s, int precision) {
  if (s.tag != Sym::Tag::op) return s;
  for (auto& a : s.args) a = simplify(std::move(a), precision);

  bool all_num = true;
  for (const auto& a : s.args) all_num = all_num && a.is_num();
  if (all_num) {
    const double a = s.args[0].value;
    const double b = s.args.size() > 1 ? s.args[1].value : 0.0;
    return Sym::num(apply_op(s.op, a, b, nullptr, 0.0));
  }

  auto take = [&](std::size_t k) { return std::move(s.args[k]); };
  switch (s.op) {
    case OpKind::add:
      if (s.args[0].is_value(0.0)) return take(1);
      if (s.args[1].is_value(0.0)) return take(0);
      break;
    case OpKind::sub:
      if (s.args[1].is_value(0.0)) return take(0);
      if (s.args[0].is_value(0.0))
        return simplify(Sym::apply(OpKind::neg, {take(1)}), precision);
      if (s.args[1].is_num()) {
        Sym shifted = Sym::apply(OpKind::add, {take(0), Sym::num(-s.args[1].value)});
        order_commutative(shifted, precision);
        return shifted;
      }
      break;
    case OpKind::mul:
      if (s.args[0].is_value(0.0) || s.args[1].is_value(0.0)) return Sym::num(0.0);
      if (s.args[0].is_value(1.0)) return take(1);
      if (s.args[1].is_value(1.0)) return take(0);
      break;
    case OpKind::div:
      if (s.args[1].is_value(1.0)) return take(0);
      if (s.args[0].is_value(0.0)) return Sym::num(0.0);
      break;
    case OpKind::pow:
      if (s.args[1].is_value(0.0)) return Sym::num(1.0);
      if (s.args[1].is_value(1.0)) return take(0);
      break;
    case OpKind::neg:
      if (s.args[0].tag == Sym::Tag::op && s.args[0].op == OpKind::neg)
        return std::move(s.args[0].args[0]);
      break;
    case OpKind::inv:
      if (s.args[0].tag == Sym::Tag::op && s.args[0].op == OpKind::inv)
        return std::move(s.args[0].args[0]);
      break;
    default: break;
  }
  order_commutative(s, precision);
  return s;
}

}  // namespace

std::string render_formula(const OpTree& tree, int precision) {
  if (tree.empty()) return {};
  return print(simplify(from_tree(tree, 0, false), precision), precision).text;
}

std::string render_skeleton(const OpTree& tree) {
  if (tree.empty()) return {};
  return print(simplify(from_tree(tree, 0, true), 4), 4).text;
}

bool is_constant_formula(const OpTree& tree) {
  if (tree.empty()) return true;
  return !has_variable(simplify(from_tree(tree, 0, false), 4));
}

}  // namespace otsforge
