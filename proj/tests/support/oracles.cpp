#include "oracles.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <stdexcept>

#include "otsforge/eval.hpp"

namespace oracle {
namespace {

class Interp {
 public:
  Interp(std::string_view s, std::span<const double> x) : s_(s), x_(x) {}

  double run() {
    const double v = expr();
    skip();
    if (pos_ != s_.size()) throw std::runtime_error("trailing input in " + std::string(s_));
    return v;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && s_[pos_] == ' ') ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  double expr() {
    double v = term();
    while (true) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  double term() {
    double v = unary();
    while (true) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  double unary() {
    if (eat('-')) return -unary();
    return power();
  }
  double power() {
    const double base = atom();
    if (eat('^')) return std::pow(base, atom());
    return base;
  }
  double atom() {
    skip();
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) throw std::runtime_error("missing )");
      return v;
    }
    if (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      std::size_t end = pos_;
      while (end < s_.size() &&
             (std::isdigit(static_cast<unsigned char>(s_[end])) || s_[end] == '.'))
        ++end;
      const double v = std::strtod(std::string(s_.substr(pos_, end - pos_)).c_str(), nullptr);
      pos_ = end;
      return v;
    }
    std::size_t end = pos_;
    while (end < s_.size() && std::isalnum(static_cast<unsigned char>(s_[end]))) ++end;
    const std::string word(s_.substr(pos_, end - pos_));
    pos_ = end;
    if (word.size() >= 2 && word[0] == 'x')
      return x_[static_cast<std::size_t>(std::stoi(word.substr(1)))];
    if (word == "nan") return std::nan("");
    if (word == "inf") return INFINITY;
    static const std::map<std::string, double (*)(double)> fns{
        {"sin", [](double a) { return std::sin(a); }},
        {"cos", [](double a) { return std::cos(a); }},
        {"tan", [](double a) { return std::tan(a); }},
        {"exp", [](double a) { return std::exp(a); }},
        {"log", [](double a) { return a > 0 ? std::log(a) : std::nan(""); }},
        {"sqrt", [](double a) { return a >= 0 ? std::sqrt(a) : std::nan(""); }},
        {"abs", [](double a) { return std::fabs(a); }},
    };
    auto it = fns.find(word);
    if (it == fns.end()) throw std::runtime_error("unknown word '" + word + "'");
    if (!eat('(')) throw std::runtime_error("missing ( after " + word);
    const double v = expr();
    if (!eat(')')) throw std::runtime_error("missing )");
    return it->second(v);
  }

  std::string_view s_;
  std::span<const double> x_;
  std::size_t pos_ = 0;
};

}  // namespace

double eval_infix(std::string_view text, std::span<const double> x) {
  return Interp(text, x).run();
}

FdGradient fd_gradient(const otsforge::OpTree& tree,
                       const std::vector<std::vector<double>>& points,
                       const std::vector<double>& targets, double h) {
  using otsforge::evaluate_point_reference;
  const auto k = static_cast<std::size_t>(tree.n_constants());
  const std::vector<double> base(tree.constants().begin(), tree.constants().end());
  auto shifted = [&](std::size_t j, double delta) {
    auto c = base;
    c[j] += delta;
    return tree.with_constants(c);
  };
  // per-point central differences at h and h/2
  std::vector<std::vector<double>> d_h(k), d_h2(k);
  for (std::size_t j = 0; j < k; ++j) {
    const auto p1 = shifted(j, h), m1 = shifted(j, -h);
    const auto p2 = shifted(j, h / 2), m2 = shifted(j, -h / 2);
    for (const auto& pt : points) {
      d_h[j].push_back((evaluate_point_reference(p1, pt) - evaluate_point_reference(m1, pt)) /
                       (2 * h));
      d_h2[j].push_back((evaluate_point_reference(p2, pt) - evaluate_point_reference(m2, pt)) / h);
    }
  }
  FdGradient out;
  std::vector<double> centre(points.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    centre[p] = evaluate_point_reference(tree, points[p]);
    bool ok = std::isfinite(centre[p]) && std::isfinite(targets[p]);
    for (std::size_t j = 0; ok && j < k; ++j) {
      const double a = d_h[j][p], b = d_h2[j][p];
      // the stencil must resolve the function: both step sizes agree
      ok = std::isfinite(a) && std::isfinite(b) &&
           std::fabs(a - b) <= 1e-4 * std::max(1.0, std::fabs(b));
    }
    if (ok) out.used.push_back(p);
  }
  const double m = static_cast<double>(out.used.size());
  out.grad.assign(k, 0.0);
  for (std::size_t p : out.used) {
    const double r = centre[p] - targets[p];
    out.loss += r * r / m;
    for (std::size_t j = 0; j < k; ++j) {
      const double dy = (4.0 * d_h2[j][p] - d_h[j][p]) / 3.0;
      out.grad[j] += 2.0 * r * dy / m;
    }
  }
  return out;
}

namespace {

// Default-constraint bookkeeping for a subtree, seen from its root.
struct Shape {
  std::string root;
  int unary_run = 0;  // length of the unary chain starting at the root
  int n_exp = 0;
  int n_log = 0;
};

bool is_unary(const std::string& op) {
  static const char* names[] = {"neg", "inv", "sin", "cos", "tan", "exp",
                                "log", "sqrt", "abs", "L"};
  for (const char* n : names)
    if (op == n) return true;
  return false;
}

bool forbidden(const std::string& a, const std::string& b) {
  auto pair = [&](const char* p, const char* q) {
    return (a == p && b == q) || (a == q && b == p);
  };
  return pair("exp", "exp") || pair("log", "exp") || pair("inv", "inv") ||
         pair("neg", "neg");
}

void grow(int size, int n_vars, std::map<int, std::vector<Shape>>& memo) {
  if (memo.count(size)) return;
  std::vector<Shape> out;
  if (size == 1) {
    for (int v = 0; v < n_vars; ++v) out.push_back({"x" + std::to_string(v)});
    out.push_back({"C"});
  } else {
    grow(size - 1, n_vars, memo);
    static const char* unary[] = {"neg", "inv", "sin", "cos", "tan", "exp",
                                  "log", "sqrt", "abs", "L"};
    for (const char* u : unary)
      for (const Shape& c : memo[size - 1]) {
        if (forbidden(u, c.root)) continue;
        Shape s{u, 1 + (is_unary(c.root) ? c.unary_run : 0), c.n_exp, c.n_log};
        if (s.unary_run > 3) continue;
        if (std::string(u) == "exp") ++s.n_exp;
        if (std::string(u) == "log") ++s.n_log;
        if (s.n_exp > 2 || s.n_log > 2) continue;
        out.push_back(s);
      }
    static const char* binary[] = {"add", "sub", "mul", "div", "pow"};
    for (int left = 1; left <= size - 2; ++left) {
      grow(left, n_vars, memo);
      grow(size - 1 - left, n_vars, memo);
      for (const char* b : binary)
        for (const Shape& l : memo[left])
          for (const Shape& r : memo[size - 1 - left]) {
            if (std::string(b) == "pow" && r.root != "C") continue;
            Shape s{b, 0, l.n_exp + r.n_exp, l.n_log + r.n_log};
            if (s.n_exp > 2 || s.n_log > 2) continue;
            out.push_back(s);
          }
    }
  }
  memo[size] = std::move(out);
}

}  // namespace

std::size_t count_valid_trees(int budget, int n_vars) {
  std::map<int, std::vector<Shape>> memo;
  std::size_t total = 0;
  for (int s = 1; s <= budget; ++s) {
    grow(s, n_vars, memo);
    total += memo[s].size();
  }
  return total;
}

}  // namespace oracle
