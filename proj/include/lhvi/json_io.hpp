#pragma once

// JSON encoding of potentials, graphs and evidence. Infinite bounds and
// -inf table entries use the string sentinels "inf" / "-inf".

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "lhvi/error.hpp"
#include "lhvi/graph.hpp"
#include "lhvi/potentials.hpp"

namespace lhvi {

using json = nlohmann::json;

namespace detail {

inline json encode_real(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

inline double decode_real(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw Error(ErrorCode::ParseError, "bad real sentinel '" + s + "'");
  }
  if (!j.is_number()) throw Error(ErrorCode::ParseError, "expected number, got " + j.dump());
  return j.get<double>();
}

inline const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  return *it;
}

}  // namespace detail

inline json to_json(const Slot& s) {
  if (s.discrete) return {{"kind", "discrete"}, {"k", s.cardinality}};
  return {{"kind", "continuous"}};
}

inline Slot slot_from_json(const json& j) {
  const auto kind = detail::field(j, "kind").get<std::string>();
  if (kind == "discrete") return Slot::discrete_slot(detail::field(j, "k").get<int>());
  if (kind == "continuous") return Slot::continuous_slot();
  throw Error(ErrorCode::ParseError, "unknown slot kind '" + kind + "'");
}

inline json to_json(const Formula& f) {
  using Op = Formula::Op;
  switch (f.op) {
    case Op::Atom: return {{"op", "atom"}, {"pos", f.pos}};
    case Op::Const: return {{"op", "const"}, {"value", f.value}};
    case Op::Not: return {{"op", "not"}, {"arg", to_json(f.args[0])}};
    case Op::And:
    case Op::Sum: {
      json args = json::array();
      for (const auto& a : f.args) args.push_back(to_json(a));
      return {{"op", f.op == Op::And ? "and" : "sum"}, {"args", args}};
    }
    case Op::Implies:
    case Op::Equal:
    case Op::Mul: {
      const char* name = f.op == Op::Implies ? "implies" : f.op == Op::Equal ? "eq" : "mul";
      return {{"op", name}, {"lhs", to_json(f.args[0])}, {"rhs", to_json(f.args[1])}};
    }
  }
  return {};
}

inline Formula formula_from_json(const json& j) {
  const auto op = detail::field(j, "op").get<std::string>();
  auto list = [&] {
    std::vector<Formula> out;
    for (const auto& a : detail::field(j, "args")) out.push_back(formula_from_json(a));
    return out;
  };
  auto lhs = [&] { return formula_from_json(detail::field(j, "lhs")); };
  auto rhs = [&] { return formula_from_json(detail::field(j, "rhs")); };
  if (op == "atom") return Formula::atom(detail::field(j, "pos").get<std::size_t>());
  if (op == "const") return Formula::constant(detail::decode_real(detail::field(j, "value")));
  if (op == "not") return Formula::negate(formula_from_json(detail::field(j, "arg")));
  if (op == "and") return Formula::conj(list());
  if (op == "sum") return Formula::sum(list());
  if (op == "implies") return Formula::implies(lhs(), rhs());
  if (op == "eq") return Formula::equal(lhs(), rhs());
  if (op == "mul") return Formula::mul(lhs(), rhs());
  throw Error(ErrorCode::ParseError, "unknown formula op '" + op + "'");
}

inline json to_json(const Potential& p) {
  return std::visit(
      [](const auto& q) -> json {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, TablePotential>) {
          json vals = json::array();
          for (double v : q.log_values()) vals.push_back(detail::encode_real(v));
          return {{"kind", "table"}, {"cards", q.cardinalities()}, {"log_values", vals}};
        } else if constexpr (std::is_same_v<T, QuadraticPotential>) {
          return {{"kind", "quadratic"}, {"A", q.A()}, {"b", q.b()}, {"c", q.c()}};
        } else if constexpr (std::is_same_v<T, LinearGaussianPotential>) {
          return {{"kind", "linear_gaussian"}, {"a", q.a()}, {"m", q.m()}, {"var", q.var()}};
        } else {
          json slots = json::array();
          for (const auto& s : q.slots()) slots.push_back(to_json(s));
          return {{"kind", "hybrid"}, {"weight", q.weight()}, {"slots", slots}, {"formula", to_json(q.formula())}};
        }
      },
      p.get());
}

inline Potential potential_from_json(const json& j) {
  const auto kind = detail::field(j, "kind").get<std::string>();
  if (kind == "table") {
    std::vector<double> vals;
    for (const auto& v : detail::field(j, "log_values")) vals.push_back(detail::decode_real(v));
    return TablePotential(detail::field(j, "cards").get<std::vector<int>>(), std::move(vals));
  }
  if (kind == "quadratic")
    return QuadraticPotential(detail::field(j, "A").get<std::vector<std::vector<double>>>(),
                              detail::field(j, "b").get<std::vector<double>>(),
                              detail::field(j, "c").get<double>());
  if (kind == "linear_gaussian")
    return LinearGaussianPotential(detail::field(j, "a").get<double>(), detail::field(j, "m").get<double>(),
                                   detail::field(j, "var").get<double>());
  if (kind == "hybrid") {
    std::vector<Slot> slots;
    for (const auto& s : detail::field(j, "slots")) slots.push_back(slot_from_json(s));
    return HybridFormulaPotential(detail::field(j, "weight").get<double>(), std::move(slots),
                                  formula_from_json(detail::field(j, "formula")));
  }
  throw Error(ErrorCode::ParseError, "unknown potential kind '" + kind + "'");
}

inline json to_json(const Domain& d) {
  if (d.is_discrete()) return {{"kind", "discrete"}, {"k", d.cardinality}};
  return {{"kind", "continuous"}, {"lo", detail::encode_real(d.lower)}, {"hi", detail::encode_real(d.upper)}};
}

inline Domain domain_from_json(const json& j) {
  const auto kind = detail::field(j, "kind").get<std::string>();
  if (kind == "discrete") return Domain::discrete(detail::field(j, "k").get<int>());
  if (kind == "continuous") {
    const double lo = j.contains("lo") ? detail::decode_real(j["lo"]) : -kInf;
    const double hi = j.contains("hi") ? detail::decode_real(j["hi"]) : kInf;
    return Domain::continuous(lo, hi);
  }
  throw Error(ErrorCode::ParseError, "unknown domain kind '" + kind + "'");
}

inline json to_json(const FactorGraph& g) {
  json vars = json::array();
  for (const auto& v : g.variables()) {
    json jv = {{"id", v.id}, {"domain", to_json(v.domain)}};
    if (v.label) jv["label"] = *v.label;
    vars.push_back(std::move(jv));
  }
  json factors = json::array();
  for (const auto& f : g.factors())
    factors.push_back({{"id", f.id}, {"scope", f.scope}, {"potential", to_json(f.potential)}});
  json out = {{"variables", vars}, {"factors", factors}};
  if (g.log_constant() != 0.0) out["log_constant"] = g.log_constant();
  if (!g.meta().empty()) out["meta"] = g.meta();
  return out;
}

inline FactorGraph graph_from_json(const json& j) {
  try {
    std::vector<VariableDecl> vars;
    for (const auto& jv : detail::field(j, "variables")) {
      VariableDecl v{detail::field(jv, "id").get<std::string>(), domain_from_json(detail::field(jv, "domain")),
                     std::nullopt};
      if (jv.contains("label")) v.label = jv["label"].get<std::string>();
      vars.push_back(std::move(v));
    }
    std::vector<FactorDecl> factors;
    for (const auto& jf : detail::field(j, "factors"))
      factors.push_back({detail::field(jf, "id").get<std::string>(),
                         detail::field(jf, "scope").get<std::vector<std::string>>(),
                         potential_from_json(detail::field(jf, "potential"))});
    const double c = j.contains("log_constant") ? j["log_constant"].get<double>() : 0.0;
    std::map<std::string, std::string> meta;
    if (j.contains("meta")) meta = j["meta"].get<std::map<std::string, std::string>>();
    return build_graph(std::move(vars), std::move(factors), c, std::move(meta));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline json to_json(const Evidence& e) {
  json out = json::object();
  for (const auto& [id, v] : e.entries) out[id] = v;
  return out;
}

inline Evidence evidence_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "evidence must be a JSON object");
  Evidence e;
  for (const auto& [id, v] : j.items()) e.entries[id] = detail::decode_real(v);
  return e;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace lhvi
