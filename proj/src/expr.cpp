#include "gapkit/expr.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace gapkit::expr {

ParseError::ParseError(Kind kind, std::size_t position, const std::string& what)
    : std::runtime_error(what + " at position " + std::to_string(position)), kind_(kind), position_(position) {}

namespace {

// ---------------------------------------------------------------------------
// Syntax tree used only while parsing; evaluation runs on the postfix code.

struct Node {
  Op op = Op::Const;
  double constant = 0.0;
  int index = 0;
  int lhs = -1;
  int rhs = -1;
};

class Parser {
 public:
  Parser(std::string_view text, int arity) : s_(text), arity_(arity) {}

  int parse_all() {
    int root = parse_sum();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return root;
  }

  std::vector<Node> nodes;

 private:
  std::string_view s_;
  int arity_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg, ParseError::Kind kind = ParseError::Kind::Syntax) {
    throw ParseError(kind, pos_, msg);
  }
  [[noreturn]] void fail_at(std::size_t at, const std::string& msg, ParseError::Kind kind) {
    throw ParseError(kind, at, msg);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  int add(Node n) {
    nodes.push_back(n);
    return static_cast<int>(nodes.size()) - 1;
  }
  int binary(Op op, int a, int b) { return add(Node{op, 0.0, 0, a, b}); }

  int parse_sum() {
    int lhs = parse_product();
    for (;;) {
      if (eat('+')) {
        lhs = binary(Op::Add, lhs, parse_product());
      } else if (eat('-')) {
        lhs = binary(Op::Sub, lhs, parse_product());
      } else {
        return lhs;
      }
    }
  }

  int parse_product() {
    int lhs = parse_unary();
    for (;;) {
      if (eat('*')) {
        lhs = binary(Op::Mul, lhs, parse_unary());
      } else if (eat('/')) {
        lhs = binary(Op::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  int parse_unary() {
    if (eat('-')) return add(Node{Op::Neg, 0.0, 0, parse_unary(), -1});
    if (eat('+')) return parse_unary();
    return parse_power();
  }

  // right associative; the exponent must fold to an integer constant
  int parse_power() {
    int base = parse_primary();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '^') {
      std::size_t caret = pos_;
      ++pos_;
      int ex = parse_unary();
      double v = 0.0;
      if (!constant_value(ex, v)) fail_at(caret, "exponent must be a constant integer", ParseError::Kind::Exponent);
      if (v != std::round(v) || std::abs(v) > 1024) {
        fail_at(caret, "exponent must be a constant integer", ParseError::Kind::Exponent);
      }
      return add(Node{Op::Pow, 0.0, static_cast<int>(v), base, -1});
    }
    return base;
  }

  int parse_primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      int inner = parse_sum();
      if (!eat(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  int parse_number() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) ++pos_;
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      } else {
        pos_ = save;
      }
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (ec != std::errc() || ptr != s_.data() + pos_) fail_at(start, "malformed number", ParseError::Kind::Syntax);
    return add(Node{Op::Const, v, 0, -1, -1});
  }

  int parse_identifier() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    std::string_view name = s_.substr(start, pos_ - start);

    if (name.size() >= 2 && name[0] == 'x' &&
        std::all_of(name.begin() + 1, name.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      int idx = 0;
      std::from_chars(name.data() + 1, name.data() + name.size(), idx);
      if (idx < 1 || idx > arity_) {
        fail_at(start, "variable " + std::string(name) + " out of range for k=" + std::to_string(arity_),
                ParseError::Kind::VariableRange);
      }
      return add(Node{Op::Var, 0.0, idx - 1, -1, -1});
    }
    if (name == "pi") return add(Node{Op::Const, std::numbers::pi, 0, -1, -1});

    Op fn;
    if (name == "sin") {
      fn = Op::Sin;
    } else if (name == "cos") {
      fn = Op::Cos;
    } else if (name == "tanh") {
      fn = Op::Tanh;
    } else if (name == "exp") {
      fn = Op::Exp;
    } else {
      fail_at(start, "unknown identifier '" + std::string(name) + "'", ParseError::Kind::UnknownIdentifier);
    }
    if (!eat('(')) fail("expected '(' after " + std::string(name));
    int arg = parse_sum();
    if (!eat(')')) fail("expected ')'");
    return add(Node{fn, 0.0, 0, arg, -1});
  }

  bool constant_value(int n, double& out) const {
    const Node& node = nodes[n];
    double a = 0.0, b = 0.0;
    switch (node.op) {
      case Op::Const: out = node.constant; return true;
      case Op::Var: return false;
      case Op::Neg:
        if (!constant_value(node.lhs, a)) return false;
        out = -a;
        return true;
      case Op::Add: case Op::Sub: case Op::Mul: case Op::Div:
        if (!constant_value(node.lhs, a) || !constant_value(node.rhs, b)) return false;
        out = node.op == Op::Add ? a + b : node.op == Op::Sub ? a - b : node.op == Op::Mul ? a * b : a / b;
        return true;
      case Op::Pow:
        if (!constant_value(node.lhs, a)) return false;
        out = std::pow(a, node.index);
        return true;
      default:
        return false;
    }
  }
};

void emit(const std::vector<Node>& nodes, int n, std::vector<Instr>& code) {
  const Node& node = nodes[n];
  if (node.lhs >= 0) emit(nodes, node.lhs, code);
  if (node.rhs >= 0) emit(nodes, node.rhs, code);
  Instr ins{node.op, node.constant, node.index};
  code.push_back(ins);
}

int arity_of(Op op) {
  switch (op) {
    case Op::Const: case Op::Var: return 0;
    case Op::Add: case Op::Sub: case Op::Mul: case Op::Div: return 2;
    default: return 1;
  }
}

std::size_t stack_depth(const std::vector<Instr>& code) {
  std::size_t depth = 0, best = 0;
  for (const auto& ins : code) {
    int a = arity_of(ins.op);
    depth = depth + 1 - static_cast<std::size_t>(a);
    best = std::max(best, depth);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Jet types for the generic evaluator. Each provides lift(c), var(i, x), unary
// functions through (f, f', f'') and the ring operations.

struct GradJet {
  using T = Gradient;
  static T lift(double c, int) {
    T t;
    t.value = c;
    return t;
  }
  static T var(int i, double x) {
    T t;
    t.value = x;
    t.grad[i] = 1.0;
    return t;
  }
  static double value(const T& a) { return a.value; }
  static T apply(const T& a, double f, double f1, double, int n) {
    T r;
    r.value = f;
    for (int i = 0; i < n; ++i) r.grad[i] = f1 * a.grad[i];
    return r;
  }
  static T add(const T& a, const T& b, int n) {
    T r;
    r.value = a.value + b.value;
    for (int i = 0; i < n; ++i) r.grad[i] = a.grad[i] + b.grad[i];
    return r;
  }
  static T sub(const T& a, const T& b, int n) {
    T r;
    r.value = a.value - b.value;
    for (int i = 0; i < n; ++i) r.grad[i] = a.grad[i] - b.grad[i];
    return r;
  }
  static T mul(const T& a, const T& b, int n) {
    T r;
    r.value = a.value * b.value;
    for (int i = 0; i < n; ++i) r.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
    return r;
  }
  static T neg(const T& a, int n) {
    T r;
    r.value = -a.value;
    for (int i = 0; i < n; ++i) r.grad[i] = -a.grad[i];
    return r;
  }
};

struct HessJet {
  using T = Hessian;
  static constexpr int K = kMaxOrder;
  static T lift(double c, int) {
    T t;
    t.value = c;
    return t;
  }
  static T var(int i, double x) {
    T t;
    t.value = x;
    t.grad[i] = 1.0;
    return t;
  }
  static double value(const T& a) { return a.value; }
  static T apply(const T& a, double f, double f1, double f2, int n) {
    T r;
    r.value = f;
    for (int i = 0; i < n; ++i) r.grad[i] = f1 * a.grad[i];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) r.hess[i * K + j] = f1 * a.hess[i * K + j] + f2 * a.grad[i] * a.grad[j];
    return r;
  }
  static T add(const T& a, const T& b, int n) {
    T r;
    r.value = a.value + b.value;
    for (int i = 0; i < n; ++i) r.grad[i] = a.grad[i] + b.grad[i];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) r.hess[i * K + j] = a.hess[i * K + j] + b.hess[i * K + j];
    return r;
  }
  static T sub(const T& a, const T& b, int n) {
    T r;
    r.value = a.value - b.value;
    for (int i = 0; i < n; ++i) r.grad[i] = a.grad[i] - b.grad[i];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) r.hess[i * K + j] = a.hess[i * K + j] - b.hess[i * K + j];
    return r;
  }
  static T mul(const T& a, const T& b, int n) {
    T r;
    r.value = a.value * b.value;
    for (int i = 0; i < n; ++i) r.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        r.hess[i * K + j] = a.hess[i * K + j] * b.value + a.value * b.hess[i * K + j] + a.grad[i] * b.grad[j] +
                            b.grad[i] * a.grad[j];
    return r;
  }
  static T neg(const T& a, int n) {
    T r;
    r.value = -a.value;
    for (int i = 0; i < n; ++i) r.grad[i] = -a.grad[i];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) r.hess[i * K + j] = -a.hess[i * K + j];
    return r;
  }
};

template <class S>
typename S::T run(const std::vector<Instr>& code, std::size_t depth, std::span<const double> x, int n) {
  using T = typename S::T;
  constexpr std::size_t kInline = 24;
  std::array<T, kInline> inline_stack;
  std::vector<T> heap_stack;
  T* st = inline_stack.data();
  if (depth > kInline) {
    heap_stack.resize(depth);
    st = heap_stack.data();
  }
  std::size_t sp = 0;
  for (const Instr& ins : code) {
    switch (ins.op) {
      case Op::Const: st[sp++] = S::lift(ins.constant, n); break;
      case Op::Var: st[sp++] = S::var(ins.index, x[ins.index]); break;
      case Op::Add: --sp; st[sp - 1] = S::add(st[sp - 1], st[sp], n); break;
      case Op::Sub: --sp; st[sp - 1] = S::sub(st[sp - 1], st[sp], n); break;
      case Op::Mul: --sp; st[sp - 1] = S::mul(st[sp - 1], st[sp], n); break;
      case Op::Div: {
        --sp;
        double b = S::value(st[sp]);
        if (b == 0.0) throw DomainError("division by zero");
        T inv = S::apply(st[sp], 1.0 / b, -1.0 / (b * b), 2.0 / (b * b * b), n);
        st[sp - 1] = S::mul(st[sp - 1], inv, n);
        break;
      }
      case Op::Neg: st[sp - 1] = S::neg(st[sp - 1], n); break;
      case Op::Pow: {
        double a = S::value(st[sp - 1]);
        int p = ins.index;
        if (p < 0 && a == 0.0) throw DomainError("zero raised to a negative power");
        double f = std::pow(a, p);
        double f1 = p == 0 ? 0.0 : p * std::pow(a, p - 1);
        double f2 = (p == 0 || p == 1) ? 0.0 : p * (p - 1) * std::pow(a, p - 2);
        st[sp - 1] = S::apply(st[sp - 1], f, f1, f2, n);
        break;
      }
      case Op::Sin: {
        double a = S::value(st[sp - 1]);
        double s = std::sin(a), c = std::cos(a);
        st[sp - 1] = S::apply(st[sp - 1], s, c, -s, n);
        break;
      }
      case Op::Cos: {
        double a = S::value(st[sp - 1]);
        double s = std::sin(a), c = std::cos(a);
        st[sp - 1] = S::apply(st[sp - 1], c, -s, -c, n);
        break;
      }
      case Op::Tanh: {
        double t = std::tanh(S::value(st[sp - 1]));
        double d = 1.0 - t * t;
        st[sp - 1] = S::apply(st[sp - 1], t, d, -2.0 * t * d, n);
        break;
      }
      case Op::Exp: {
        double e = std::exp(S::value(st[sp - 1]));
        st[sp - 1] = S::apply(st[sp - 1], e, e, e, n);
        break;
      }
    }
  }
  if (!std::isfinite(S::value(st[0]))) throw DomainError("non-finite value");
  return st[0];
}

// Fast paths for the root solver: plain double arithmetic without the policy layer.
std::pair<double, double> run_univariate(const std::vector<Instr>& code, std::size_t depth, double t) {
  constexpr std::size_t kInline = 32;
  std::array<double, kInline> vs, ds;
  std::vector<double> hv, hd;
  double* v = vs.data();
  double* d = ds.data();
  if (depth > kInline) {
    hv.resize(depth);
    hd.resize(depth);
    v = hv.data();
    d = hd.data();
  }
  std::size_t sp = 0;
  for (const Instr& ins : code) {
    switch (ins.op) {
      case Op::Const: v[sp] = ins.constant; d[sp] = 0.0; ++sp; break;
      case Op::Var: v[sp] = t; d[sp] = 1.0; ++sp; break;
      case Op::Add: --sp; v[sp - 1] += v[sp]; d[sp - 1] += d[sp]; break;
      case Op::Sub: --sp; v[sp - 1] -= v[sp]; d[sp - 1] -= d[sp]; break;
      case Op::Mul: --sp; d[sp - 1] = d[sp - 1] * v[sp] + v[sp - 1] * d[sp]; v[sp - 1] *= v[sp]; break;
      case Op::Div: {
        --sp;
        double b = v[sp];
        if (b == 0.0) throw DomainError("division by zero");
        double q = v[sp - 1] / b;
        d[sp - 1] = (d[sp - 1] - q * d[sp]) / b;
        v[sp - 1] = q;
        break;
      }
      case Op::Neg: v[sp - 1] = -v[sp - 1]; d[sp - 1] = -d[sp - 1]; break;
      case Op::Pow: {
        double a = v[sp - 1];
        int p = ins.index;
        if (p < 0 && a == 0.0) throw DomainError("zero raised to a negative power");
        d[sp - 1] *= p == 0 ? 0.0 : p * std::pow(a, p - 1);
        v[sp - 1] = std::pow(a, p);
        break;
      }
      case Op::Sin: { double a = v[sp - 1]; v[sp - 1] = std::sin(a); d[sp - 1] *= std::cos(a); break; }
      case Op::Cos: { double a = v[sp - 1]; v[sp - 1] = std::cos(a); d[sp - 1] *= -std::sin(a); break; }
      case Op::Tanh: { double th = std::tanh(v[sp - 1]); v[sp - 1] = th; d[sp - 1] *= 1.0 - th * th; break; }
      case Op::Exp: { double e = std::exp(v[sp - 1]); v[sp - 1] = e; d[sp - 1] *= e; break; }
    }
  }
  if (!std::isfinite(v[0])) throw DomainError("non-finite value");
  return {v[0], d[0]};
}

double run_real(const std::vector<Instr>& code, std::size_t depth, std::span<const double> x) {
  constexpr std::size_t kInline = 32;
  std::array<double, kInline> vs;
  std::vector<double> hv;
  double* v = vs.data();
  if (depth > kInline) {
    hv.resize(depth);
    v = hv.data();
  }
  std::size_t sp = 0;
  for (const Instr& ins : code) {
    switch (ins.op) {
      case Op::Const: v[sp++] = ins.constant; break;
      case Op::Var: v[sp++] = x[ins.index]; break;
      case Op::Add: --sp; v[sp - 1] += v[sp]; break;
      case Op::Sub: --sp; v[sp - 1] -= v[sp]; break;
      case Op::Mul: --sp; v[sp - 1] *= v[sp]; break;
      case Op::Div:
        --sp;
        if (v[sp] == 0.0) throw DomainError("division by zero");
        v[sp - 1] /= v[sp];
        break;
      case Op::Neg: v[sp - 1] = -v[sp - 1]; break;
      case Op::Pow:
        if (ins.index < 0 && v[sp - 1] == 0.0) throw DomainError("zero raised to a negative power");
        v[sp - 1] = std::pow(v[sp - 1], ins.index);
        break;
      case Op::Sin: v[sp - 1] = std::sin(v[sp - 1]); break;
      case Op::Cos: v[sp - 1] = std::cos(v[sp - 1]); break;
      case Op::Tanh: v[sp - 1] = std::tanh(v[sp - 1]); break;
      case Op::Exp: v[sp - 1] = std::exp(v[sp - 1]); break;
    }
  }
  if (!std::isfinite(v[0])) throw DomainError("non-finite value");
  return v[0];
}

std::string render(const std::vector<Instr>& code) {
  std::vector<std::string> st;
  for (const Instr& ins : code) {
    std::ostringstream os;
    os.precision(17);
    switch (ins.op) {
      case Op::Const: os << ins.constant; st.push_back(os.str()); continue;
      case Op::Var: st.push_back("x" + std::to_string(ins.index + 1)); continue;
      default: break;
    }
    if (arity_of(ins.op) == 2) {
      std::string b = st.back();
      st.pop_back();
      std::string a = st.back();
      st.pop_back();
      const char* sym = ins.op == Op::Add ? " + " : ins.op == Op::Sub ? " - " : ins.op == Op::Mul ? " * " : " / ";
      st.push_back("(" + a + sym + b + ")");
      continue;
    }
    std::string a = st.back();
    st.pop_back();
    switch (ins.op) {
      case Op::Neg: st.push_back("(-" + a + ")"); break;
      case Op::Pow: st.push_back("(" + a + "^" + std::to_string(ins.index) + ")"); break;
      case Op::Sin: st.push_back("sin(" + a + ")"); break;
      case Op::Cos: st.push_back("cos(" + a + ")"); break;
      case Op::Tanh: st.push_back("tanh(" + a + ")"); break;
      case Op::Exp: st.push_back("exp(" + a + ")"); break;
      default: break;
    }
  }
  return st.empty() ? std::string() : st.back();
}

}  // namespace

Expression Expression::parse(std::string_view text, int arity) {
  if (arity < 1 || arity > kMaxOrder) {
    throw std::invalid_argument("arity must be in 1.." + std::to_string(kMaxOrder));
  }
  Parser p(text, arity);
  int root = p.parse_all();
  Expression e;
  e.source_ = std::string(text);
  e.arity_ = arity;
  emit(p.nodes, root, e.code_);
  e.depth_ = stack_depth(e.code_);
  return e;
}

std::string Expression::to_string() const { return render(code_); }

double Expression::value(std::span<const double> x) const { return run_real(code_, depth_, x); }

Gradient Expression::gradient(std::span<const double> x) const { return run<GradJet>(code_, depth_, x, arity_); }

Hessian Expression::hessian(std::span<const double> x) const { return run<HessJet>(code_, depth_, x, arity_); }

UnivariateProgram Expression::restrict_to_axis(int axis, std::span<const double> point) const {
  // Copy the postfix code; once a subtree turns out not to depend on `axis`
  // its code is truncated back to a single constant.
  struct Slot {
    bool live;
    double value;
    std::size_t start;  // first instruction of the subtree in `out`
    int degree;         // 0 constant, 1 affine, 2 anything else
  };
  std::vector<Slot> st;
  st.reserve(depth_);
  std::vector<Instr> out, fold;
  out.reserve(code_.size());
  for (const Instr& ins : code_) {
    const std::size_t here = out.size();
    if (ins.op == Op::Const || (ins.op == Op::Var && ins.index != axis)) {
      const double v = ins.op == Op::Const ? ins.constant : point[ins.index];
      out.push_back(Instr{Op::Const, v, 0});
      st.push_back({false, v, here, 0});
      continue;
    }
    if (ins.op == Op::Var) {
      out.push_back(Instr{Op::Var, 0.0, 0});
      st.push_back({true, 0.0, here, 1});
      continue;
    }
    const int a = arity_of(ins.op);
    const Slot* args = st.data() + st.size() - a;
    const bool live = args[0].live || (a == 2 && args[1].live);
    if (!live) {
      fold.clear();
      for (int i = 0; i < a; ++i) fold.push_back(Instr{Op::Const, args[i].value, 0});
      fold.push_back(ins);
      const double v = run_real(fold, fold.size(), {});
      const std::size_t first = args[0].start;
      st.resize(st.size() - a);
      out.resize(first);
      out.push_back(Instr{Op::Const, v, 0});
      st.push_back({false, v, first, 0});
      continue;
    }
    int degree = 2;
    switch (ins.op) {
      case Op::Add:
      case Op::Sub: degree = std::max(args[0].degree, args[1].degree); break;
      case Op::Neg: degree = args[0].degree; break;
      case Op::Mul: degree = std::min(2, args[0].degree + args[1].degree); break;
      case Op::Div: degree = args[1].degree == 0 ? args[0].degree : 2; break;
      case Op::Pow: degree = ins.index == 1 ? args[0].degree : 2; break;
      default: break;
    }
    const std::size_t first = args[0].start;
    st.resize(st.size() - a);
    out.push_back(ins);
    st.push_back({true, 0.0, first, degree});
  }
  UnivariateProgram up;
  up.code_ = std::move(out);
  up.depth_ = stack_depth(up.code_);
  if (st.back().degree <= 1) {
    auto [b, a] = run_univariate(up.code_, up.depth_, 0.0);
    up.affine_ = true;
    up.intercept_ = b;
    up.slope_ = a;
  }
  return up;
}

double UnivariateProgram::value(double t) const {
  if (affine_) return intercept_ + slope_ * t;
  return run_univariate(code_, depth_, t).first;
}

std::pair<double, double> UnivariateProgram::value_and_derivative(double t) const {
  if (affine_) return {intercept_ + slope_ * t, slope_};
  return run_univariate(code_, depth_, t);
}

void for_each_grid_node(const Expression& e, std::span<const double> lo, std::span<const double> hi,
                        std::span<const int> resolution,
                        const std::function<void(std::span<const double>, const Hessian&)>& visit) {
  const int k = e.arity();
  if (static_cast<int>(lo.size()) != k || static_cast<int>(hi.size()) != k ||
      static_cast<int>(resolution.size()) != k) {
    throw std::invalid_argument("grid dimension does not match arity");
  }
  for (int r : resolution) {
    if (r < 2) throw std::invalid_argument("grid resolution must be at least 2 per axis");
  }
  std::vector<int> idx(k, 0);
  std::vector<double> x(k);
  for (;;) {
    for (int i = 0; i < k; ++i) {
      // endpoints hit exactly
      x[i] = idx[i] == resolution[i] - 1 ? hi[i] : lo[i] + (hi[i] - lo[i]) * idx[i] / (resolution[i] - 1);
    }
    visit(x, e.hessian(x));
    int i = k - 1;
    while (i >= 0 && ++idx[i] == resolution[i]) idx[i--] = 0;
    if (i < 0) break;
  }
}

DerivativeBounds sampled_derivative_bounds(const Expression& e, std::span<const double> lo,
                                           std::span<const double> hi, std::span<const int> resolution) {
  const int k = e.arity();
  DerivativeBounds b;
  b.arity = k;
  b.lo.assign(lo.begin(), lo.end());
  b.hi.assign(hi.begin(), hi.end());
  b.resolution.assign(resolution.begin(), resolution.end());
  b.dsq_min.assign(k, std::numeric_limits<double>::infinity());
  b.dsq_max.assign(k, 0.0);
  b.phi_min = std::numeric_limits<double>::infinity();
  b.phi_max = -std::numeric_limits<double>::infinity();
  b.second_derivative_method = "second-order forward mode (exact)";
  Eigen::MatrixXd H(k, k);
  for_each_grid_node(e, lo, hi, resolution, [&](std::span<const double>, const Hessian& j) {
    b.phi_min = std::min(b.phi_min, j.value);
    b.phi_max = std::max(b.phi_max, j.value);
    double g2 = 0.0, h1 = 0.0;
    for (int i = 0; i < k; ++i) {
      double d2 = j.grad[i] * j.grad[i];
      b.dsq_min[i] = std::min(b.dsq_min[i], d2);
      b.dsq_max[i] = std::max(b.dsq_max[i], d2);
      g2 += d2;
      h1 += j.h(0, i) * j.h(0, i);
      for (int l = 0; l < k; ++l) H(i, l) = j.h(i, l);
    }
    b.grad_norm_max = std::max(b.grad_norm_max, std::sqrt(g2));
    b.grad_d1_norm_max = std::max(b.grad_d1_norm_max, std::sqrt(h1));
    double hn = k == 1 ? std::abs(H(0, 0))
                       : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H, Eigen::EigenvaluesOnly)
                             .eigenvalues()
                             .cwiseAbs()
                             .maxCoeff();
    b.hessian_norm_max = std::max(b.hessian_norm_max, hn);
  });
  return b;
}

}  // namespace gapkit::expr
