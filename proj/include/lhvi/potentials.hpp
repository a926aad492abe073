#pragma once

// Potential functions psi_c over hybrid scopes. Every potential exposes
// log psi(x), the partial derivatives of log psi with respect to its
// continuous slots, restriction to a subset of fixed slots, and a canonical
// signature used for symmetry detection.

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "lhvi/error.hpp"

namespace lhvi {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Per-position domain requirement of a potential.
struct Slot {
  bool discrete = false;
  int cardinality = 0;  // only meaningful when discrete

  static Slot discrete_slot(int k) { return {true, k}; }
  static Slot continuous_slot() { return {false, 0}; }
  bool operator==(const Slot&) const = default;
};

namespace detail {

// Appends a parameter rounded to the signature quantum.
inline void append_quantized(std::string& out, double v, double quantum) {
  char buf[64];
  if (std::isinf(v)) {
    out += v > 0 ? "inf" : "-inf";
  } else {
    double q = std::nearbyint(v / quantum);
    if (q == 0.0) q = 0.0;  // fold -0
    std::snprintf(buf, sizeof buf, "%.17g", q);
    out += buf;
  }
  out += ',';
}

inline std::size_t state_index(double x, int cardinality) {
  if (!(x >= 0.0) || x != std::floor(x) || x >= cardinality)
    throw Error(ErrorCode::DomainMismatch,
                "discrete value " + std::to_string(x) + " outside [0," +
                    std::to_string(cardinality) + ")");
  return static_cast<std::size_t>(x);
}

inline void check_arity(std::size_t expected, std::size_t got) {
  if (expected != got)
    throw Error(ErrorCode::DomainMismatch, "assignment has " + std::to_string(got) +
                                               " values, potential arity is " +
                                               std::to_string(expected));
}

}  // namespace detail

class Potential;

/// Dense discrete factor stored as log-values in row-major order (last slot
/// varies fastest). An empty cardinality list is an arity-0 constant.
class TablePotential {
 public:
  TablePotential() : log_values_{0.0} {}
  TablePotential(std::vector<int> cardinalities, std::vector<double> log_values)
      : cards_(std::move(cardinalities)), log_values_(std::move(log_values)) {
    std::size_t n = 1;
    for (int c : cards_) {
      if (c < 1) throw Error(ErrorCode::InvalidArgument, "table cardinality must be positive");
      n *= static_cast<std::size_t>(c);
    }
    if (n != log_values_.size())
      throw Error(ErrorCode::ArityMismatch, "table has " + std::to_string(log_values_.size()) +
                                                " entries, expected " + std::to_string(n));
    for (double v : log_values_)
      if (std::isnan(v) || v == kInf)
        throw Error(ErrorCode::InvalidArgument, "table log-values must be finite or -inf");
  }

  static TablePotential constant(double log_value) { return TablePotential({}, {log_value}); }

  const std::vector<int>& cardinalities() const { return cards_; }
  const std::vector<double>& log_values() const { return log_values_; }
  std::size_t arity() const { return cards_.size(); }

  std::vector<Slot> slots() const {
    std::vector<Slot> s;
    for (int c : cards_) s.push_back(Slot::discrete_slot(c));
    return s;
  }

  std::size_t flat_index(std::span<const double> x) const {
    detail::check_arity(arity(), x.size());
    std::size_t idx = 0;
    for (std::size_t p = 0; p < cards_.size(); ++p)
      idx = idx * static_cast<std::size_t>(cards_[p]) + detail::state_index(x[p], cards_[p]);
    return idx;
  }

  double log_value(std::span<const double> x, std::span<double> grad = {}) const {
    for (double& g : grad) g = 0.0;
    return log_values_[flat_index(x)];
  }

  Potential restrict(const std::map<std::size_t, double>& fixed) const;

  void append_signature(std::string& out, double quantum) const {
    out += "table|";
    for (int c : cards_) out += std::to_string(c) + ",";
    out += '|';
    for (double v : log_values_) detail::append_quantized(out, v, quantum);
  }

 private:
  std::vector<int> cards_;
  std::vector<double> log_values_;
};

/// log psi(x) = -x'Ax + b'x + c over continuous slots.
class QuadraticPotential {
 public:
  QuadraticPotential() = default;
  QuadraticPotential(std::vector<std::vector<double>> A, std::vector<double> b, double c)
      : A_(std::move(A)), b_(std::move(b)), c_(c) {
    if (A_.size() != b_.size())
      throw Error(ErrorCode::ArityMismatch, "quadratic A and b dimensions disagree");
    for (const auto& row : A_)
      if (row.size() != b_.size()) throw Error(ErrorCode::ArityMismatch, "quadratic A must be square");
  }

  const std::vector<std::vector<double>>& A() const { return A_; }
  const std::vector<double>& b() const { return b_; }
  double c() const { return c_; }
  std::size_t arity() const { return b_.size(); }
  std::vector<Slot> slots() const { return std::vector<Slot>(arity(), Slot::continuous_slot()); }

  double log_value(std::span<const double> x, std::span<double> grad = {}) const {
    detail::check_arity(arity(), x.size());
    const std::size_t d = arity();
    double v = c_;
    for (std::size_t i = 0; i < d; ++i) {
      v += b_[i] * x[i];
      for (std::size_t j = 0; j < d; ++j) v -= A_[i][j] * x[i] * x[j];
    }
    if (!grad.empty()) {
      for (std::size_t i = 0; i < d; ++i) {
        double g = b_[i];
        for (std::size_t j = 0; j < d; ++j) g -= (A_[i][j] + A_[j][i]) * x[j];
        grad[i] = g;
      }
    }
    return v;
  }

  Potential restrict(const std::map<std::size_t, double>& fixed) const;

  void append_signature(std::string& out, double quantum) const {
    out += "quadratic|" + std::to_string(arity()) + "|";
    // Only the symmetric part of A affects log psi.
    for (std::size_t i = 0; i < arity(); ++i)
      for (std::size_t j = 0; j < arity(); ++j)
        detail::append_quantized(out, 0.5 * (A_[i][j] + A_[j][i]), quantum);
    out += '|';
    for (double v : b_) detail::append_quantized(out, v, quantum);
    out += '|';
    detail::append_quantized(out, c_, quantum);
  }

 private:
  std::vector<std::vector<double>> A_;
  std::vector<double> b_;
  double c_ = 0.0;
};

/// log psi(x1, x2) = -(x1 - a*x2 - m)^2 / var.
class LinearGaussianPotential {
 public:
  LinearGaussianPotential(double a = 1.0, double m = 0.0, double var = 1.0)
      : a_(a), m_(m), var_(var) {
    if (!(var_ > 0.0) || !std::isfinite(var_))
      throw Error(ErrorCode::InvalidArgument, "linear Gaussian variance must be positive");
  }

  double a() const { return a_; }
  double m() const { return m_; }
  double var() const { return var_; }
  std::size_t arity() const { return 2; }
  std::vector<Slot> slots() const { return {Slot::continuous_slot(), Slot::continuous_slot()}; }

  double log_value(std::span<const double> x, std::span<double> grad = {}) const {
    detail::check_arity(2, x.size());
    const double r = x[0] - a_ * x[1] - m_;
    if (!grad.empty()) {
      grad[0] = -2.0 * r / var_;
      grad[1] = 2.0 * a_ * r / var_;
    }
    return -r * r / var_;
  }

  QuadraticPotential as_quadratic() const {
    const double s = 1.0 / var_;
    return QuadraticPotential({{s, -a_ * s}, {-a_ * s, a_ * a_ * s}}, {2.0 * m_ * s, -2.0 * a_ * m_ * s},
                              -m_ * m_ * s);
  }

  Potential restrict(const std::map<std::size_t, double>& fixed) const;

  void append_signature(std::string& out, double quantum) const {
    out += "linear_gaussian|";
    detail::append_quantized(out, a_, quantum);
    detail::append_quantized(out, m_, quantum);
    detail::append_quantized(out, var_, quantum);
  }

 private:
  double a_;
  double m_;
  double var_;
};

/// Expression tree of a hybrid MLN formula. Logical nodes operate on {0,1}
/// values; Equal(a, b) is the feature -(a-b)^2.
struct Formula {
  enum class Op { Atom, Const, Not, And, Implies, Equal, Mul, Sum };

  Op op = Op::Const;
  std::size_t pos = 0;  // Atom
  double value = 0.0;   // Const
  std::vector<Formula> args;

  static Formula atom(std::size_t position) { return {Op::Atom, position, 0.0, {}}; }
  static Formula constant(double v) { return {Op::Const, 0, v, {}}; }
  static Formula negate(Formula f) { return {Op::Not, 0, 0.0, {std::move(f)}}; }
  static Formula conj(std::vector<Formula> fs) { return {Op::And, 0, 0.0, std::move(fs)}; }
  static Formula implies(Formula lhs, Formula rhs) {
    return {Op::Implies, 0, 0.0, {std::move(lhs), std::move(rhs)}};
  }
  static Formula equal(Formula lhs, Formula rhs) {
    return {Op::Equal, 0, 0.0, {std::move(lhs), std::move(rhs)}};
  }
  static Formula mul(Formula lhs, Formula rhs) {
    return {Op::Mul, 0, 0.0, {std::move(lhs), std::move(rhs)}};
  }
  static Formula sum(std::vector<Formula> fs) { return {Op::Sum, 0, 0.0, std::move(fs)}; }

  double eval(std::span<const double> x) const {
    switch (op) {
      case Op::Atom: return x[pos];
      case Op::Const: return value;
      case Op::Not: return 1.0 - args[0].eval(x);
      case Op::And: {
        double v = 1.0;
        for (const auto& a : args) v *= a.eval(x);
        return v;
      }
      case Op::Implies: {
        const double a = args[0].eval(x);
        return 1.0 - a + a * args[1].eval(x);
      }
      case Op::Equal: {
        const double d = args[0].eval(x) - args[1].eval(x);
        return -d * d;
      }
      case Op::Mul: return args[0].eval(x) * args[1].eval(x);
      case Op::Sum: {
        double v = 0.0;
        for (const auto& a : args) v += a.eval(x);
        return v;
      }
    }
    return 0.0;
  }

  // Reverse-mode accumulation of adjoint * d(this)/dx into grad, for the
  // positions flagged continuous.
  void backprop(std::span<const double> x, double adjoint, const std::vector<Slot>& slots,
                std::span<double> grad) const {
    if (adjoint == 0.0) return;
    switch (op) {
      case Op::Atom:
        if (!slots[pos].discrete) grad[pos] += adjoint;
        return;
      case Op::Const: return;
      case Op::Not: args[0].backprop(x, -adjoint, slots, grad); return;
      case Op::And:
        for (std::size_t i = 0; i < args.size(); ++i) {
          double rest = 1.0;
          for (std::size_t j = 0; j < args.size(); ++j)
            if (j != i) rest *= args[j].eval(x);
          args[i].backprop(x, adjoint * rest, slots, grad);
        }
        return;
      case Op::Implies: {
        const double a = args[0].eval(x);
        const double b = args[1].eval(x);
        args[0].backprop(x, adjoint * (b - 1.0), slots, grad);
        args[1].backprop(x, adjoint * a, slots, grad);
        return;
      }
      case Op::Equal: {
        const double d = args[0].eval(x) - args[1].eval(x);
        args[0].backprop(x, -2.0 * d * adjoint, slots, grad);
        args[1].backprop(x, 2.0 * d * adjoint, slots, grad);
        return;
      }
      case Op::Mul: {
        const double a = args[0].eval(x);
        const double b = args[1].eval(x);
        args[0].backprop(x, adjoint * b, slots, grad);
        args[1].backprop(x, adjoint * a, slots, grad);
        return;
      }
      case Op::Sum:
        for (const auto& a : args) a.backprop(x, adjoint, slots, grad);
        return;
    }
  }

  // Replaces fixed atoms by constants and renumbers the remaining positions.
  Formula substitute(const std::map<std::size_t, double>& fixed,
                     const std::vector<std::size_t>& new_pos) const {
    if (op == Op::Atom) {
      if (auto it = fixed.find(pos); it != fixed.end()) return constant(it->second);
      return atom(new_pos[pos]);
    }
    Formula f{op, pos, value, {}};
    for (const auto& a : args) f.args.push_back(a.substitute(fixed, new_pos));
    return f;
  }

  void collect_atoms(std::vector<std::size_t>& out) const {
    if (op == Op::Atom) out.push_back(pos);
    for (const auto& a : args) a.collect_atoms(out);
  }

  void append_signature(std::string& out, double quantum) const {
    static constexpr const char* names[] = {"atom", "const", "not", "and", "implies", "eq", "mul", "sum"};
    out += names[static_cast<int>(op)];
    out += '(';
    if (op == Op::Atom) out += std::to_string(pos);
    if (op == Op::Const) detail::append_quantized(out, value, quantum);
    for (const auto& a : args) a.append_signature(out, quantum);
    out += ')';
  }
};

/// log psi(x) = weight * f(x) for a hybrid formula f.
class HybridFormulaPotential {
 public:
  HybridFormulaPotential(double weight, std::vector<Slot> slots, Formula formula)
      : weight_(weight), slots_(std::move(slots)), formula_(std::move(formula)) {
    std::vector<std::size_t> atoms;
    formula_.collect_atoms(atoms);
    for (std::size_t p : atoms) {
      if (p >= slots_.size())
        throw Error(ErrorCode::ArityMismatch, "formula atom position " + std::to_string(p) +
                                                  " exceeds arity " + std::to_string(slots_.size()));
      if (slots_[p].discrete && slots_[p].cardinality != 2)
        throw Error(ErrorCode::InvalidArgument, "discrete formula atoms must be Boolean");
    }
  }

  double weight() const { return weight_; }
  const Formula& formula() const { return formula_; }
  std::size_t arity() const { return slots_.size(); }
  const std::vector<Slot>& slots() const { return slots_; }

  double log_value(std::span<const double> x, std::span<double> grad = {}) const {
    detail::check_arity(arity(), x.size());
    for (std::size_t p = 0; p < slots_.size(); ++p)
      if (slots_[p].discrete) detail::state_index(x[p], slots_[p].cardinality);
    if (!grad.empty()) {
      for (double& g : grad) g = 0.0;
      formula_.backprop(x, weight_, slots_, grad);
    }
    return weight_ * formula_.eval(x);
  }

  Potential restrict(const std::map<std::size_t, double>& fixed) const;

  void append_signature(std::string& out, double quantum) const {
    out += "hybrid|";
    detail::append_quantized(out, weight_, quantum);
    for (const auto& s : slots_) out += s.discrete ? "d" + std::to_string(s.cardinality) + "," : "c,";
    out += '|';
    formula_.append_signature(out, quantum);
  }

 private:
  double weight_;
  std::vector<Slot> slots_;
  Formula formula_;
};

enum class PotentialKind { Table, Quadratic, LinearGaussian, HybridFormula };

class Potential {
 public:
  using Variant =
      std::variant<TablePotential, QuadraticPotential, LinearGaussianPotential, HybridFormulaPotential>;

  Potential() : impl_(TablePotential{}) {}
  Potential(TablePotential p) : impl_(std::move(p)) {}
  Potential(QuadraticPotential p) : impl_(std::move(p)) {}
  Potential(LinearGaussianPotential p) : impl_(std::move(p)) {}
  Potential(HybridFormulaPotential p) : impl_(std::move(p)) {}

  PotentialKind kind() const { return static_cast<PotentialKind>(impl_.index()); }
  const Variant& get() const { return impl_; }

  std::size_t arity() const {
    return std::visit([](const auto& p) { return p.arity(); }, impl_);
  }
  std::vector<Slot> slots() const {
    return std::visit([](const auto& p) { return std::vector<Slot>(p.slots()); }, impl_);
  }

  /// log psi(x). If grad is non-empty it receives d log psi / dx for every
  /// slot (zero on discrete slots).
  double log_value(std::span<const double> x, std::span<double> grad = {}) const {
    return std::visit([&](const auto& p) { return p.log_value(x, grad); }, impl_);
  }

  Potential restrict(const std::map<std::size_t, double>& fixed) const {
    for (const auto& [p, v] : fixed)
      if (p >= arity())
        throw Error(ErrorCode::DomainMismatch, "restricted position " + std::to_string(p) +
                                                   " exceeds arity " + std::to_string(arity()));
    if (fixed.empty()) return *this;
    return std::visit([&](const auto& p) { return p.restrict(fixed); }, impl_);
  }

  std::string signature(double quantum = 1e-12) const {
    std::string out;
    std::visit([&](const auto& p) { p.append_signature(out, quantum); }, impl_);
    return out;
  }

  /// True for kinds whose log psi is a quadratic form in the scope.
  bool is_gaussian() const {
    return kind() == PotentialKind::Quadratic || kind() == PotentialKind::LinearGaussian ||
           (kind() == PotentialKind::Table && arity() == 0);
  }

 private:
  Variant impl_;
};

inline double log_potential(const Potential& p, std::span<const double> x) { return p.log_value(x); }
inline Potential restrict(const Potential& p, const std::map<std::size_t, double>& fixed) {
  return p.restrict(fixed);
}
inline std::string signature(const Potential& p, double quantum = 1e-12) { return p.signature(quantum); }

// ---------------------------------------------------------------------------

namespace detail {
// Positions kept after restriction, mapped to their new index.
inline std::vector<std::size_t> remaining_positions(std::size_t arity,
                                                    const std::map<std::size_t, double>& fixed,
                                                    std::vector<std::size_t>& kept) {
  std::vector<std::size_t> new_pos(arity, 0);
  for (std::size_t p = 0; p < arity; ++p) {
    if (!fixed.count(p)) {
      new_pos[p] = kept.size();
      kept.push_back(p);
    }
  }
  return new_pos;
}
}  // namespace detail

inline Potential TablePotential::restrict(const std::map<std::size_t, double>& fixed) const {
  std::vector<std::size_t> kept;
  detail::remaining_positions(arity(), fixed, kept);
  std::vector<std::size_t> fixed_state(arity(), 0);
  for (const auto& [p, v] : fixed) fixed_state[p] = detail::state_index(v, cards_[p]);

  std::vector<int> new_cards;
  for (std::size_t p : kept) new_cards.push_back(cards_[p]);
  std::size_t n = 1;
  for (int c : new_cards) n *= static_cast<std::size_t>(c);

  std::vector<double> values(n);
  std::vector<double> full(arity());
  std::vector<std::size_t> sub(kept.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i;
    for (std::size_t q = kept.size(); q-- > 0;) {
      sub[q] = rem % static_cast<std::size_t>(new_cards[q]);
      rem /= static_cast<std::size_t>(new_cards[q]);
    }
    for (std::size_t p = 0; p < arity(); ++p) full[p] = static_cast<double>(fixed_state[p]);
    for (std::size_t q = 0; q < kept.size(); ++q) full[kept[q]] = static_cast<double>(sub[q]);
    values[i] = log_values_[flat_index(full)];
  }
  return TablePotential(std::move(new_cards), std::move(values));
}

inline Potential QuadraticPotential::restrict(const std::map<std::size_t, double>& fixed) const {
  std::vector<std::size_t> kept;
  detail::remaining_positions(arity(), fixed, kept);
  const std::size_t d = arity();
  std::vector<double> full(d, 0.0);
  for (const auto& [p, v] : fixed) {
    if (!std::isfinite(v)) throw Error(ErrorCode::DomainMismatch, "non-finite continuous value");
    full[p] = v;
  }
  // Constant part: value at the fixed point with free slots zeroed.
  const double c = log_value(full);
  if (kept.empty()) return TablePotential::constant(c);

  std::vector<std::vector<double>> A(kept.size(), std::vector<double>(kept.size()));
  std::vector<double> b(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (std::size_t j = 0; j < kept.size(); ++j) A[i][j] = A_[kept[i]][kept[j]];
    double bi = b_[kept[i]];
    for (const auto& [p, v] : fixed) bi -= (A_[kept[i]][p] + A_[p][kept[i]]) * v;
    b[i] = bi;
  }
  return QuadraticPotential(std::move(A), std::move(b), c);
}

inline Potential LinearGaussianPotential::restrict(const std::map<std::size_t, double>& fixed) const {
  return as_quadratic().restrict(fixed);
}

inline Potential HybridFormulaPotential::restrict(const std::map<std::size_t, double>& fixed) const {
  std::vector<std::size_t> kept;
  auto new_pos = detail::remaining_positions(arity(), fixed, kept);
  for (const auto& [p, v] : fixed) {
    if (slots_[p].discrete)
      detail::state_index(v, slots_[p].cardinality);
    else if (!std::isfinite(v))
      throw Error(ErrorCode::DomainMismatch, "non-finite continuous value");
  }
  Formula f = formula_.substitute(fixed, new_pos);
  if (kept.empty()) return TablePotential::constant(weight_ * f.eval({}));
  std::vector<Slot> slots;
  for (std::size_t p : kept) slots.push_back(slots_[p]);
  return HybridFormulaPotential(weight_, std::move(slots), std::move(f));
}

}  // namespace lhvi
