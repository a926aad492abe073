#pragma once

// Command-line front end. run_cli() returns the process exit code; errors are
// printed to stderr as one JSON line.
//
// exit codes: 0 ok, 1 unexpected failure, 2 invalid configuration,
// 3 divergence, 4 unknown variable, 5 oracle precondition failed.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lhvi/lhvi.hpp"

namespace lhvi::cli {

namespace fs = std::filesystem;

enum Exit { kOk = 0, kFailure = 1, kInvalid = 2, kDiverged = 3, kUnknownVariable = 4, kOracle = 5 };

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownVariable: return kUnknownVariable;
    case ErrorCode::DivergenceDetected:
    case ErrorCode::NonFiniteGradient: return kDiverged;
    case ErrorCode::NotGaussian:
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::TooLarge:
    case ErrorCode::NonIntegrable: return kOracle;
    case ErrorCode::NonFiniteIntegrand: return kFailure;
    default: return kInvalid;
  }
}

inline void report_error(std::ostream& err, std::string_view code, const std::string& message) {
  err << json{{"error", code}, {"message", message}}.dump() << '\n';
}

// `--config file.json` (anywhere after the subcommand) is expanded into
// `--key=value` arguments before parsing; keys are long option names and
// options already given on the command line win.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (path.empty()) return args;
  const json cfg = read_json_file(path);
  if (!cfg.is_object()) throw Error(ErrorCode::ParseError, "config file must hold a JSON object");
  auto given = [&](const std::string& key) {
    for (const auto& a : args)
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
    return false;
  };
  for (const auto& [key, v] : cfg.items()) {
    if (given(key)) continue;
    auto scalar = [](const json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
    if (v.is_boolean()) {
      if (v.get<bool>()) args.push_back("--" + key);
    } else if (v.is_array()) {
      for (const auto& e : v) args.push_back("--" + key + "=" + scalar(e));
    } else {
      args.push_back("--" + key + "=" + scalar(v));
    }
  }
  return args;
}

inline void add_config(CLI::App* sub) {
  sub->add_option("--config")->description("JSON file with option values; command-line flags win");
}

inline int effective_threads(int flag) {
  if (const char* env = std::getenv("LHVI_THREADS")) {
    try {
      const int t = std::stoi(env);
      if (t >= 1) return t;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::InvalidArgument, "LHVI_THREADS must be a positive integer");
  }
  return flag;
}

inline std::vector<std::string> split_ids(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;  // ids contain commas inside parentheses
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + p.string() + "'");
  out << s;
}

inline Evidence load_evidence(const std::string& path) {
  return path.empty() ? Evidence{} : evidence_from_json(read_json_file(path));
}

// ---------------------------------------------------------------- gen

struct GenOptions {
  std::string family;
  int nA = 2, nB = 3, nBox = 2;
  int nPapers = 300, nTopics = 10;
  int nMarkets = 100, nBanks = 5;
  int nWells = 10, nSteps = 20;
  std::string structure = "tree";
  double evidence_fraction = -1.0;  // family default when negative
  std::uint64_t seed = 0;
  std::string out = ".";
};

inline GeneratedModel generate(const GenOptions& o) {
  if (o.family == "toy-hmln") return gen_toy_hmln(o.nA, o.nB, o.nBox, o.seed);
  if (o.family == "popularity")
    return gen_paper_popularity(o.nPapers, o.nTopics, o.seed, o.evidence_fraction < 0 ? 0.7 : o.evidence_fraction);
  if (o.family == "rgm") {
    RgmOptions r;
    r.evidence_fraction = o.evidence_fraction < 0 ? 0.0 : o.evidence_fraction;
    return gen_rgm(o.nMarkets, o.nBanks, o.seed, r);
  }
  if (o.family == "rkf") {
    RkfOptions r;
    if (o.evidence_fraction >= 0) r.observation_fraction = o.evidence_fraction;
    if (o.structure != "tree" && o.structure != "cycle")
      throw Error(ErrorCode::InvalidArgument, "structure must be tree or cycle");
    return gen_rkf(o.nWells, o.nSteps, o.structure == "tree" ? RkfStructure::Tree : RkfStructure::Cycle, o.seed, r);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown family '" + o.family + "'");
}

inline int cmd_gen(const GenOptions& o, std::ostream& out) {
  auto m = generate(o);
  fs::create_directories(o.out);
  write_json_file((fs::path(o.out) / "model.json").string(), to_json(m.graph));
  write_json_file((fs::path(o.out) / "evidence.json").string(), to_json(m.evidence));
  std::size_t nd = 0;
  for (const auto& v : m.graph.variables()) nd += v.domain.is_discrete();
  out << json{{"variables", m.graph.num_variables()},
              {"discrete", nd},
              {"factors", m.graph.num_factors()},
              {"evidence", m.evidence.entries.size()},
              {"ground_truth_capable", m.ground_truth_capable}}
             .dump()
      << '\n';
  return kOk;
}

// ---------------------------------------------------------------- fit

struct FitOptions {
  std::string model, evidence;
  std::string objective = "bethe", mode = "ground";
  std::size_t K = 1;
  int quad_order = 8;
  double lr = 0.2, beta1 = 0.9, beta2 = 0.999;
  std::size_t max_iters = 2000;
  double grad_tol = 1e-5, obj_tol = 1e-8;
  std::size_t starts = 1;
  double epsilon = 0.0;
  std::size_t stage_iters = 50, max_stages = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = ".";
};

inline json marginal_params(const Marginal& m, std::size_t K) {
  json comps = json::array();
  for (std::size_t k = 0; k < K; ++k) {
    const auto c = m.component(k);
    comps.push_back(std::vector<double>(c.begin(), c.end()));
  }
  return comps;
}

inline json lift_report(const CompressedGraph& cg) {
  json rounds = json::array();
  for (const auto& [v, f] : cg.provenance.history) rounds.push_back({{"variable_classes", v}, {"factor_classes", f}});
  std::map<std::size_t, std::size_t> hist;
  for (const auto& sv : cg.super_variables) ++hist[sv.count];
  json sizes = json::object();
  for (const auto& [size, n] : hist) sizes[std::to_string(size)] = n;
  return {{"ground_variables", cg.ground_variables},
          {"ground_factors", cg.ground_factors},
          {"super_variables", cg.super_variables.size()},
          {"super_factors", cg.super_factors.size()},
          {"compression_ratio", cg.compression_ratio()},
          {"rounds", rounds},
          {"super_variable_sizes", sizes}};
}

inline int cmd_fit(const FitOptions& o, std::ostream& out, std::ostream& err) {
  const auto graph = graph_from_json(read_json_file(o.model));
  const auto evidence = load_evidence(o.evidence);
  FitConfig fc;
  if (o.K < 1) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
  fc.K = o.K;
  fc.spec.entropy = o.objective == "jensen" ? EntropyKind::Jensen : EntropyKind::Bethe;
  fc.spec.mode = o.mode == "lifted" ? LiftingMode::Lifted : o.mode == "c2f" ? LiftingMode::CoarseToFine : LiftingMode::Ground;
  fc.spec.quadrature_order = o.quad_order;
  fc.spec.threads = effective_threads(o.threads);
  fc.minimize.max_iters = o.max_iters;
  fc.minimize.grad_tol = o.grad_tol;
  fc.minimize.obj_tol = o.obj_tol;
  fc.minimize.adam.lr = o.lr;
  fc.minimize.adam.beta1 = o.beta1;
  fc.minimize.adam.beta2 = o.beta2;
  fc.n_starts = o.starts;
  fc.seed = o.seed;
  fc.epsilon = o.epsilon;
  fc.stage_iters = o.stage_iters;
  fc.max_stages = o.max_stages;

  auto r = fit(graph, evidence, fc);

  fs::create_directories(o.out);
  const fs::path dir(o.out);
  write_text(dir / "trace.csv", r.trace.csv());

  json report = lift_report(r.cg);
  report["mode"] = o.mode;
  report["parameters"] = r.parameters;
  report["ground_parameters"] = MixtureMeanField(o.K, graph_domains(r.graph)).num_free_parameters();
  if (fc.spec.mode == LiftingMode::CoarseToFine) {
    report["splits"] = r.splits;
    report["epsilon"] = r.epsilon;
    report["cluster_counts"] = r.cluster_counts;
    report["stage_starts"] = r.stage_starts;
  }
  write_json_file((dir / "lift_report.json").string(), report);

  json vars = json::array();
  for (std::size_t i = 0; i < r.graph.num_variables(); ++i)
    vars.push_back({{"id", r.graph.variable(i).id},
                    {"super", r.cg.variable_to_super[i]},
                    {"params", marginal_params(r.q.marginals[i], r.q.K())}});
  json supers = json::array();
  for (std::size_t s = 0; s < r.lifted.size(); ++s)
    supers.push_back({{"count", r.cg.super_variables[s].count}, {"params", marginal_params(r.lifted.marginals[s], o.K)}});
  json fitted = {{"model", fs::absolute(o.model).string()},
                 {"evidence", to_json(evidence)},
                 {"K", o.K},
                 {"objective", o.objective},
                 {"mode", o.mode},
                 {"seed", o.seed},
                 {"free_energy", r.objective},
                 {"iterations", r.iterations},
                 {"stop_reason", r.stop_reason},
                 {"diverged", r.diverged},
                 {"parameters", r.parameters},
                 {"weight_logits", r.q.weight_logits},
                 {"weights", r.q.weights()},
                 {"variables", vars},
                 {"super_variables", supers}};
  write_json_file((dir / "fitted.json").string(), fitted);
  write_text(dir / "run.log", json{{"wall_ms", r.wall_ms}}.dump() + "\n");

  if (r.diverged) {
    report_error(err, "DivergenceDetected", "objective became non-finite; partial trace written");
    return kDiverged;
  }
  out << json{{"free_energy", r.objective}, {"iterations", r.iterations}, {"stop_reason", r.stop_reason},
              {"parameters", r.parameters}}
             .dump()
      << '\n';
  return kOk;
}

// Loaded fitted.json: the conditioned graph, the original graph, and q.
struct Fitted {
  FactorGraph original;
  FactorGraph graph;
  Evidence evidence;
  MixtureMeanField q;
  json raw;
};

inline Fitted load_fitted(const std::string& path, const std::string& model_override) {
  Fitted f;
  f.raw = read_json_file(path);
  try {
    const std::string model = model_override.empty() ? f.raw.at("model").get<std::string>() : model_override;
    f.original = graph_from_json(read_json_file(model));
    f.evidence = evidence_from_json(f.raw.at("evidence"));
    // same conditioning order as fit: discrete evidence, then continuous
    f.graph = condition(f.original, f.evidence);
    const std::size_t K = f.raw.at("K").get<std::size_t>();
    f.q = MixtureMeanField(K, graph_domains(f.graph));
    f.q.weight_logits = f.raw.at("weight_logits").get<std::vector<double>>();
    const auto& vars = f.raw.at("variables");
    if (vars.size() != f.graph.num_variables())
      throw Error(ErrorCode::InvalidArgument, "fitted file does not match the model");
    for (const auto& v : vars) {
      const std::size_t i = f.graph.index_of(v.at("id").get<std::string>());
      auto& m = f.q.marginals[i];
      const auto comps = v.at("params").get<std::vector<std::vector<double>>>();
      if (comps.size() != K) throw Error(ErrorCode::InvalidArgument, "component count mismatch");
      m.params.clear();
      for (const auto& c : comps) {
        if (c.size() != m.width()) throw Error(ErrorCode::InvalidArgument, "parameter width mismatch");
        m.params.insert(m.params.end(), c.begin(), c.end());
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  return f;
}

inline std::vector<std::string> all_ids(const FactorGraph& g) {
  std::vector<std::string> ids;
  for (const auto& v : g.variables()) ids.push_back(v.id);
  return ids;
}

inline std::vector<Domain> domains_of(const FactorGraph& g, const std::vector<std::size_t>& idx) {
  std::vector<Domain> d;
  for (std::size_t i : idx) d.push_back(g.variable(i).domain);
  return d;
}

// Full assignment of the original graph from a MAP over every free variable.
inline std::vector<double> full_assignment(const Fitted& f, const MarginalQuery& mq, const MapResult& r) {
  std::vector<double> x(f.original.num_variables(), 0.0);
  for (const auto& [id, v] : f.evidence.entries) x[f.original.index_of(id)] = v;
  for (std::size_t j = 0; j < mq.ids.size(); ++j) x[f.original.index_of(mq.ids[j])] = r.values[j];
  return x;
}

// ---------------------------------------------------------------- query

struct QueryOptions {
  std::string fitted, model;
  std::string marginal, map;
  bool map_all = false;
  std::string curve, curve_out;
  std::size_t curve_points = 4096;
  std::string out;
};

inline void check_known(const Fitted& f, const std::vector<std::string>& ids) {
  for (const auto& id : ids) {
    if (f.evidence.entries.count(id))
      throw Error(ErrorCode::UnknownVariable, "'" + id + "' is observed; only unobserved variables can be queried");
    if (!f.graph.find(id)) throw Error(ErrorCode::UnknownVariable, "no variable named '" + id + "'");
  }
}

inline int cmd_query(const QueryOptions& o, std::ostream& out) {
  const auto f = load_fitted(o.fitted, o.model);
  json result = json::object();

  if (!o.marginal.empty()) {
    const auto ids = split_ids(o.marginal);
    check_known(f, ids);
    const auto mq = query_marginal(f.q, f.graph, ids);
    json comps = json::array();
    for (std::size_t k = 0; k < mq.K(); ++k) {
      json c = json::object();
      for (std::size_t j = 0; j < ids.size(); ++j) {
        const auto& m = mq.q.marginals[j];
        if (m.discrete)
          c[ids[j]] = {{"probabilities", m.probabilities(k)}};
        else
          c[ids[j]] = {{"mean", m.mean(k)}, {"std", m.stddev(k)}};
      }
      comps.push_back(c);
    }
    result["marginal"] = {{"variables", ids}, {"weights", mq.q.weights()}, {"components", comps}};
  }

  if (!o.map.empty() || o.map_all) {
    const auto ids = o.map_all ? all_ids(f.graph) : split_ids(o.map);
    check_known(f, ids);
    const auto mq = query_marginal(f.q, f.graph, ids);
    const auto doms = domains_of(f.graph, mq.indices);
    const auto r = map_estimate(mq, &doms);
    json assign = json::object();
    for (std::size_t j = 0; j < ids.size(); ++j) assign[ids[j]] = r.values[j];
    result["map"] = {{"assignment", assign}, {"log_q", r.log_q}};
    if (ids.size() == f.graph.num_variables())
      result["map"]["energy"] = energy_of_assignment(f.original, full_assignment(f, mq, r));
  }

  if (!o.curve.empty()) {
    check_known(f, {o.curve});
    const std::size_t i = f.graph.index_of(o.curve);
    const auto& m = f.q.marginals[i];
    const auto w = f.q.weights();
    std::ostringstream csv;
    csv.precision(17);
    std::size_t rows = 0;
    if (m.discrete) {
      csv << "x,probability\n";
      for (int s = 0; s < m.cardinality; ++s, ++rows) csv << s << ',' << marginal_density(f.q, i, s) << '\n';
    } else {
      double lo = kInf, hi = -kInf;
      for (std::size_t k = 0; k < f.q.K(); ++k) {
        lo = std::min(lo, m.mean(k) - 8 * m.stddev(k));
        hi = std::max(hi, m.mean(k) + 8 * m.stddev(k));
      }
      csv << "x,density\n";
      const std::size_t n = std::max<std::size_t>(o.curve_points, 2);
      for (std::size_t j = 0; j < n; ++j, ++rows) {
        const double x = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(n - 1);
        csv << x << ',' << marginal_density(f.q, i, x) << '\n';
      }
    }
    const std::string path = o.curve_out.empty() ? "marginal_curve.csv" : o.curve_out;
    write_text(path, csv.str());
    result["curve"] = {{"variable", o.curve}, {"path", path}, {"rows", rows}};
  }

  if (o.out.empty())
    out << result.dump() << '\n';
  else
    write_json_file(o.out, result);
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string fitted, model;
  std::string oracle = "auto";
  std::size_t grid_points = 2001;
  double grid_bound = 30.0;
  int threads = 1;
  std::string out = ".";
};

inline bool is_gaussian_model(const FactorGraph& g) {
  for (const auto& v : g.variables())
    if (v.domain.is_discrete() || std::isfinite(v.domain.lower) || std::isfinite(v.domain.upper)) return false;
  for (const auto& f : g.factors()) {
    const auto k = f.potential.kind();
    if (k != PotentialKind::Quadratic && k != PotentialKind::LinearGaussian &&
        !(k == PotentialKind::Table && f.potential.arity() == 0))
      return false;
  }
  return true;
}

inline int cmd_eval(const EvalOptions& o, std::ostream& out) {
  const auto f = load_fitted(o.fitted, o.model);
  const auto& g = f.graph;
  const std::size_t n = g.num_variables();
  std::string oracle = o.oracle;
  if (oracle == "auto") oracle = is_gaussian_model(g) ? "gaussian" : "brute";

  std::vector<ExactMarginal> exact;
  std::vector<double> ref_map(n), ref_mean(n);
  std::vector<bool> disc(n);
  double log_z = 0.0;
  if (oracle == "gaussian") {
    const auto gt = gaussian_exact(g);
    log_z = gt.log_z;
    for (std::size_t i = 0; i < n; ++i) {
      exact.push_back(ExactMarginal::gaussian(gt.mean(i), gt.variance(i)));
      ref_map[i] = ref_mean[i] = gt.mean(i);
    }
  } else if (oracle == "brute") {
    GridSpec gs;
    gs.points = o.grid_points;
    gs.bound = o.grid_bound;
    gs.threads = effective_threads(o.threads);
    const auto r = brute_force_hybrid(g, gs);
    log_z = r.log_z;
    for (std::size_t i = 0; i < n; ++i) {
      disc[i] = r.discrete[i];
      exact.push_back(disc[i] ? ExactMarginal::discrete(r.probabilities[i])
                              : ExactMarginal::tabulated(r.grid[i], r.density[i]));
      ref_map[i] = r.map[i];
      ref_mean[i] = r.mean[i];
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "oracle must be auto, gaussian or brute");
  }

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const auto mq = query_marginal(f.q, g, all_ids(g));
  const auto doms = graph_domains(g);
  const auto map = map_estimate(mq, &doms);
  const auto means = marginal_means(f.q);
  std::vector<double> mean_err_ref, mean_err_est;
  for (std::size_t i = 0; i < n; ++i)
    if (!disc[i]) mean_err_ref.push_back(ref_mean[i]), mean_err_est.push_back(means[i]);

  const double fe = f.raw.value("free_energy", kInf);
  json metrics = {{"oracle", oracle},
                  {"variables", n},
                  {"avg_kl", avg_univariate_kl(exact, f.q, all)},
                  {"avg_l1_map", avg_l1_error(ref_map, map.values, disc)},
                  {"avg_l1_mean", avg_l1_error(mean_err_ref, mean_err_est)},
                  {"map_energy", energy_of_assignment(f.original, full_assignment(f, mq, map))},
                  {"log_z", log_z},
                  {"free_energy", fe},
                  {"bound_gap", fe + log_z}};
  fs::create_directories(o.out);
  write_json_file((fs::path(o.out) / "metrics.json").string(), metrics);
  out << metrics.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- lift-report

struct LiftOptions {
  std::string model, evidence;
  double quantum = 1e-12;
  std::string out = ".";
};

inline int cmd_lift_report(const LiftOptions& o, std::ostream& out) {
  const auto graph = graph_from_json(read_json_file(o.model));
  const auto evidence = load_evidence(o.evidence);
  validate_evidence(graph, evidence);
  auto [col, cg] = color_passing(graph, init_colors(graph, evidence, nullptr, o.quantum));
  json report = lift_report(cg);
  fs::create_directories(o.out);
  write_json_file((fs::path(o.out) / "lift_report.json").string(), report);
  out << report.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- entry

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"lifted hybrid variational inference"};
  app.require_subcommand(1);

  GenOptions go;
  auto* gen = app.add_subcommand("gen", "generate a model family");
  add_config(gen);
  gen->add_option("--family", go.family, "toy-hmln | popularity | rgm | rkf")
      ->required()
      ->check(CLI::IsMember({"toy-hmln", "popularity", "rgm", "rkf"}));
  gen->add_option("--nA", go.nA);
  gen->add_option("--nB", go.nB);
  gen->add_option("--nBox", go.nBox);
  gen->add_option("--nPapers", go.nPapers);
  gen->add_option("--nTopics", go.nTopics);
  gen->add_option("--nMarkets", go.nMarkets);
  gen->add_option("--nBanks", go.nBanks);
  gen->add_option("--nWells", go.nWells);
  gen->add_option("--nSteps", go.nSteps);
  gen->add_option("--structure", go.structure)->check(CLI::IsMember({"tree", "cycle"}));
  gen->add_option("--evidence-fraction", go.evidence_fraction);
  gen->add_option("--seed", go.seed);
  gen->add_option("--out", go.out);

  FitOptions fo;
  auto* fitc = app.add_subcommand("fit", "fit a mixture to a model");
  add_config(fitc);
  fitc->add_option("--model", fo.model)->required();
  fitc->add_option("--evidence", fo.evidence);
  fitc->add_option("--objective", fo.objective)->check(CLI::IsMember({"bethe", "jensen"}));
  fitc->add_option("--mode", fo.mode)->check(CLI::IsMember({"ground", "lifted", "c2f"}));
  fitc->add_option("--K", fo.K)->check(CLI::PositiveNumber);
  fitc->add_option("--quad-order", fo.quad_order)->check(CLI::Range(1, 64));
  fitc->add_option("--lr", fo.lr)->check(CLI::PositiveNumber);
  fitc->add_option("--beta1", fo.beta1)->check(CLI::Range(0.0, 1.0));
  fitc->add_option("--beta2", fo.beta2)->check(CLI::Range(0.0, 1.0));
  fitc->add_option("--max-iters", fo.max_iters);
  fitc->add_option("--grad-tol", fo.grad_tol);
  fitc->add_option("--obj-tol", fo.obj_tol);
  fitc->add_option("--starts", fo.starts)->check(CLI::PositiveNumber);
  fitc->add_option("--epsilon", fo.epsilon, "C2F split threshold (0 = default)");
  fitc->add_option("--stage-iters", fo.stage_iters);
  fitc->add_option("--max-stages", fo.max_stages);
  fitc->add_option("--seed", fo.seed);
  fitc->add_option("--threads", fo.threads)->check(CLI::PositiveNumber);
  fitc->add_option("--out", fo.out);

  QueryOptions qo;
  auto* query = app.add_subcommand("query", "marginal / MAP queries on a fitted mixture");
  add_config(query);
  query->add_option("--fitted", qo.fitted)->required();
  query->add_option("--model", qo.model, "override the model path recorded in the fitted file");
  query->add_option("--marginal", qo.marginal, "comma-separated variable ids");
  query->add_option("--map", qo.map, "comma-separated variable ids");
  query->add_flag("--map-all", qo.map_all);
  query->add_option("--curve", qo.curve, "dump the marginal curve of one variable");
  query->add_option("--curve-out", qo.curve_out);
  query->add_option("--curve-points", qo.curve_points)->check(CLI::Range(2, 1 << 24));
  query->add_option("--out", qo.out, "write the JSON result here instead of stdout");

  EvalOptions eo;
  auto* eval = app.add_subcommand("eval", "compare a fitted mixture with an exact oracle");
  add_config(eval);
  eval->add_option("--fitted", eo.fitted)->required();
  eval->add_option("--model", eo.model);
  eval->add_option("--oracle", eo.oracle)->check(CLI::IsMember({"auto", "gaussian", "brute"}));
  eval->add_option("--grid-points", eo.grid_points)->check(CLI::Range(2, 1 << 20));
  eval->add_option("--grid-bound", eo.grid_bound)->check(CLI::PositiveNumber);
  eval->add_option("--threads", eo.threads)->check(CLI::PositiveNumber);
  eval->add_option("--out", eo.out);

  LiftOptions lo;
  auto* lift = app.add_subcommand("lift-report", "color passing compression report");
  add_config(lift);
  lift->add_option("--model", lo.model)->required();
  lift->add_option("--evidence", lo.evidence);
  lift->add_option("--quantum", lo.quantum);
  lift->add_option("--out", lo.out);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(std::move(args));
  } catch (const Error& e) {
    report_error(err, to_string(e.code()), e.what());
    return kInvalid;
  }
  std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "InvalidConfig", e.what());
    return kInvalid;
  }

  try {
    if (*gen) return cmd_gen(go, out);
    if (*fitc) return cmd_fit(fo, out, err);
    if (*query) return cmd_query(qo, out);
    if (*eval) return cmd_eval(eo, out);
    if (*lift) return cmd_lift_report(lo, out);
  } catch (const Error& e) {
    report_error(err, to_string(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    report_error(err, "Internal", e.what());
    return kFailure;
  }
  return kFailure;
}

}  // namespace lhvi::cli
