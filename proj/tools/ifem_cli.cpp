// ifem: solve, convergence, verify and mesh-info front end for the interface FEM library.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ifem/ifem.hpp"

namespace {

using json = nlohmann::json;
using namespace ifem;

enum ExitCode { kOk = 0, kVerifyFailed = 1, kConfig = 2, kGeometry = 3, kSolver = 4 };

struct RunConfig {
  std::string method;  // empty: every method (convergence) or hybrid (solve)
  int n = 40;
  std::vector<int> n_list{10, 20, 40, 80, 160};
  std::optional<double> alpha, beta;
  double r1 = 0.5;
  double cx = 0.0;
  double cy = 0.0;
  double cg_tol = 1e-10;
  double outer_tol = 1e-10;
  int max_iter = 50000;
  bool jacobi = false;
  std::string out;
  std::string format = "csv";
  std::string norm_variant = "nodal";
  bool patch_test = false;
  std::string dump_mesh, dump_system, dump_solution;
};

json to_json(const RunConfig& c) {
  json j;
  j["method"] = c.method;
  j["n"] = c.n;
  j["n_list"] = c.n_list;
  j["alpha"] = c.alpha ? json(*c.alpha) : json(nullptr);
  j["beta"] = c.beta ? json(*c.beta) : json(nullptr);
  j["r1"] = c.r1;
  j["cx"] = c.cx;
  j["cy"] = c.cy;
  j["cg_tol"] = c.cg_tol;
  j["outer_tol"] = c.outer_tol;
  j["max_iter"] = c.max_iter;
  j["jacobi"] = c.jacobi;
  j["out"] = c.out;
  j["format"] = c.format;
  j["norm_variant"] = c.norm_variant;
  j["patch_test"] = c.patch_test;
  j["dump_mesh"] = c.dump_mesh;
  j["dump_system"] = c.dump_system;
  j["dump_solution"] = c.dump_solution;
  return j;
}

template <class T>
void read_key(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

void read_optional(const json& j, const char* key, std::optional<double>& dst) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    dst.reset();
    return;
  }
  double v = 0.0;
  read_key(j, key, v);
  dst = v;
}

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  const json keys = to_json(RunConfig{});
  for (const auto& [key, _] : j.items())
    if (!keys.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  RunConfig c;
  read_key(j, "method", c.method);
  read_key(j, "n", c.n);
  read_key(j, "n_list", c.n_list);
  read_optional(j, "alpha", c.alpha);
  read_optional(j, "beta", c.beta);
  read_key(j, "r1", c.r1);
  read_key(j, "cx", c.cx);
  read_key(j, "cy", c.cy);
  read_key(j, "cg_tol", c.cg_tol);
  read_key(j, "outer_tol", c.outer_tol);
  read_key(j, "max_iter", c.max_iter);
  read_key(j, "jacobi", c.jacobi);
  read_key(j, "out", c.out);
  read_key(j, "format", c.format);
  read_key(j, "norm_variant", c.norm_variant);
  read_key(j, "patch_test", c.patch_test);
  read_key(j, "dump_mesh", c.dump_mesh);
  read_key(j, "dump_system", c.dump_system);
  read_key(j, "dump_solution", c.dump_solution);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
}

/// Flags given on the command line overwrite the file (or default) values field by field.
struct Options {
  RunConfig flags;
  std::string config_path;
  bool dump_config = false;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&, const RunConfig&)>>> setters;

  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& name, T RunConfig::*field, const std::string& help) {
    auto* opt = app->add_option(name, flags.*field, help);
    setters.emplace_back(opt, [field](RunConfig& dst, const RunConfig& src) { dst.*field = src.*field; });
    return opt;
  }
  void add_flag(CLI::App* app, const std::string& name, bool RunConfig::*field, const std::string& help) {
    auto* opt = app->add_flag(name, flags.*field, help);
    setters.emplace_back(opt, [field](RunConfig& dst, const RunConfig& src) { dst.*field = src.*field; });
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& [opt, set] : setters)
      if (opt->count() > 0) set(c, flags);
    return c;
  }
};

void add_common(CLI::App* app, Options& o) {
  o.add(app, "--method", &RunConfig::method, "standard | fitted | hybrid");
  o.add(app, "--n", &RunConfig::n, "subdivisions per side");
  o.add(app, "--n-list", &RunConfig::n_list, "subdivisions for a convergence study, doubling")->delimiter(',');
  o.add(app, "--alpha", &RunConfig::alpha, "coefficient inside the circle");
  o.add(app, "--beta", &RunConfig::beta, "coefficient outside the circle");
  o.add(app, "--r1", &RunConfig::r1, "circle radius");
  o.add(app, "--cx", &RunConfig::cx, "circle center x");
  o.add(app, "--cy", &RunConfig::cy, "circle center y");
  o.add(app, "--cg-tol", &RunConfig::cg_tol, "relative residual of CG solves");
  o.add(app, "--outer-tol", &RunConfig::outer_tol, "relative residual of the multiplier iteration");
  o.add(app, "--max-iter", &RunConfig::max_iter, "iteration cap of every CG loop");
  o.add_flag(app, "--jacobi", &RunConfig::jacobi, "Jacobi-preconditioned CG");
  o.add(app, "--out", &RunConfig::out, "output file (default stdout)");
  o.add(app, "--format", &RunConfig::format, "csv | md");
  o.add(app, "--norm-variant", &RunConfig::norm_variant, "nodal | sub | parent (reference gradient in e1h)");
  o.add_flag(app, "--patch-test", &RunConfig::patch_test, "solve a linear patch problem instead");
  o.add(app, "--dump-mesh", &RunConfig::dump_mesh, "write the mesh to this file");
  o.add(app, "--dump-system", &RunConfig::dump_system, "write the system matrix to this file");
  o.add(app, "--dump-solution", &RunConfig::dump_solution, "write vertex values to this file");
  app->add_option("--config", o.config_path, "JSON config; flags override its values");
  app->add_flag("--dump-config", o.dump_config, "print the effective config as JSON and exit");
}

SolverConfig solver_config(const RunConfig& c) {
  SolverConfig s;
  s.cg_tolerance = c.cg_tol;
  s.outer_tolerance = c.outer_tol;
  s.cg_max_iter = c.max_iter;
  s.outer_max_iter = c.max_iter;
  s.jacobi = c.jacobi;
  return s;
}

RadialProblem radial(const RunConfig& c, double alpha, double beta) {
  RadialProblem pb;
  pb.alpha = alpha;
  pb.beta = beta;
  pb.r1 = c.r1;
  pb.center = {c.cx, c.cy};
  return pb;
}

RadialProblem radial(const RunConfig& c) { return radial(c, c.alpha.value_or(1.0), c.beta.value_or(10.0)); }

void validate(const RunConfig& c, bool need_list) {
  if (!c.method.empty()) parse_method(c.method);
  if (c.n < 1) throw ConfigError("n: N must be a positive integer, got " + std::to_string(c.n));
  if (need_list) validate_n_list(c.n_list);
  if (c.alpha && !(*c.alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (c.beta && !(*c.beta > 0.0)) throw ConfigError("beta must be positive");
  if (c.format != "csv" && c.format != "md") throw ConfigError("format: expected csv|md, got '" + c.format + "'");
  parse_norm_variant(c.norm_variant);
  solver_config(c).validate();
  radial(c).validate();
}

/// Writes to `path`, or to stdout when empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("out: cannot write '" + path + "'");
  out << text;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

int thread_cap() {
  const char* env = std::getenv("IFEM_THREADS");
  const int hw = std::max(1u, std::thread::hardware_concurrency());
  if (!env || !*env) return hw;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("IFEM_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<int>(std::min<long>(v, 256));
}

// ---------------------------------------------------------------------------------------------

int cmd_solve(const RunConfig& c) {
  validate(c, false);
  const Method method = parse_method(c.method.empty() ? "hybrid" : c.method);
  const auto cfg = solver_config(c);
  const RadialProblem pb = radial(c);

  if (c.patch_test) {
    const double a = c.alpha.value_or(1.0);
    if (c.beta && *c.beta != a) throw ConfigError("patch-test: needs alpha == beta (a constant coefficient)");
    const double err = patch_test_error(method, c.n, pb.interface(), a, cfg);
    std::ostringstream os;
    os << "patch_test " << to_string(method) << " N " << c.n << " max_error " << sci(err) << '\n';
    emit(c.out, os.str());
    return err <= 1e-9 ? kOk : kVerifyFailed;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const auto fitted = build_fitted_mesh(build_structured_mesh(c.n), pb.interface());
  const Problem problem = make_problem(pb);
  RunDiagnostics d;
  const auto sol = solve_problem(fitted, problem, method, cfg, &d);
  const auto err = error_norms(fitted, sol, pb, parse_norm_variant(c.norm_variant));
  d.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ostringstream os;
  os << "method " << to_string(method) << '\n'
     << "N " << c.n << '\n'
     << "alpha " << pb.alpha << '\n'
     << "beta " << pb.beta << '\n'
     << "p " << pb.p() << '\n'
     << "nodes " << err.nodes << '\n'
     << "e0h " << sci(err.e0h) << '\n'
     << "e0inf " << sci(err.e0inf) << '\n'
     << "e1h " << sci(err.e1h) << '\n'
     << "norm_variant " << c.norm_variant << '\n'
     << "unknowns " << d.dofs << '\n';
  if (method == Method::Hybrid) {
    const auto flux = flux_diagnostic(fitted, sol, pb);
    os << "multipliers " << d.multipliers << '\n'
       << "outer_iterations " << d.outer_iterations << '\n'
       << "inner_iterations " << d.inner_iterations << '\n'
       << "constraint_residual " << sci(d.constraint_residual) << '\n'
       << "max_jump " << sci(d.max_jump) << '\n'
       << "flux_max_discrepancy " << sci(flux.max_abs) << '\n'
       << "flux_mean_discrepancy " << sci(flux.mean_abs) << '\n';
  } else {
    os << "cg_iterations " << d.cg_iterations << '\n';
  }
  os << "seconds " << d.seconds << '\n';
  emit(c.out, os.str());

  if (!c.dump_mesh.empty()) {
    std::ostringstream m;
    write_mesh(m, fitted.base());
    emit(c.dump_mesh, m.str());
  }
  if (!c.dump_solution.empty()) {
    std::ostringstream m;
    write_solution(m, fitted.base(), sol.u_vertex);
    emit(c.dump_solution, m.str());
  }
  if (!c.dump_system.empty()) {
    std::ostringstream m;
    if (method == Method::Standard)
      write_matrix(m, assemble_standard(fitted.base(), problem.coeff, fitted.interface(), problem.f, problem.g).K);
    else if (method == Method::Fitted)
      write_matrix(m, assemble_fitted(fitted, problem.coeff, problem.f, problem.g).K);
    else
      write_matrix(m, assemble_hybrid(fitted, problem.coeff, problem.f, problem.g).monolithic());
    emit(c.dump_system, m.str());
  }
  return kOk;
}

int cmd_convergence(const RunConfig& c) {
  validate(c, true);
  std::vector<Method> methods;
  if (c.method.empty())
    methods = {Method::Standard, Method::Fitted, Method::Hybrid};
  else
    methods = {parse_method(c.method)};
  std::vector<std::pair<double, double>> coeffs;
  if (!c.alpha && !c.beta)
    coeffs = {{1.0, 10.0}, {1.0, 100.0}};
  else
    coeffs = {{c.alpha.value_or(1.0), c.beta.value_or(10.0)}};

  struct Task {
    Method method;
    RadialProblem pb;
  };
  std::vector<Task> tasks;
  for (const auto& [a, b] : coeffs)
    for (Method m : methods) tasks.push_back({m, radial(c, a, b)});

  const auto cfg = solver_config(c);
  const auto variant = parse_norm_variant(c.norm_variant);
  std::vector<ConvergenceTable> tables(tasks.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++)
      tables[i] = convergence_study(tasks[i].pb, tasks[i].method, c.n_list, cfg, variant);
  };
  const int nthreads = std::min<int>(thread_cap(), static_cast<int>(tasks.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::ostringstream os;
  if (c.format == "csv")
    write_csv(os, tables);
  else
    for (const auto& t : tables) write_markdown(os, t);
  emit(c.out, os.str());

  int code = kOk;
  for (const auto& t : tables)
    for (const auto& r : t.rows) {
      if (r.failure.empty()) continue;
      std::cerr << "row " << to_string(t.method) << " p=" << t.p << " N=" << r.n << " failed: " << r.failure << '\n';
      const int rc = r.failure.rfind("geometry", 0) == 0 ? kGeometry : (r.failure.rfind("config", 0) == 0 ? kConfig : kSolver);
      code = std::max(code, rc);
    }
  return code;
}

// ---------------------------------------------------------------------------------------------

struct Checker {
  std::ostringstream os;
  bool ok = true;

  void check(bool pass, const std::string& name, const std::string& detail) {
    os << (pass ? "PASS " : "FAIL ") << name << ' ' << detail << '\n';
    ok = ok && pass;
  }
};

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void verify_geometry(Checker& ck, const FittedMesh& f, const std::string& tag) {
  const Mesh& m = f.base();
  double total = 0.0, worst_parent = 0.0;
  for (const auto& t : m.triangles()) {
    double s = 0.0;
    for (const auto& k : f.elements(t.id)) s += k.area();
    worst_parent = std::max(worst_parent, std::abs(s - m.area(t.id)) / m.area(t.id));
    total += s;
  }
  ck.check(std::abs(total - 4.0) / 4.0 <= 1e-12 && worst_parent <= 1e-12, "geometry.area_partition",
           tag + " rel=" + sci(std::max(std::abs(total - 4.0) / 4.0, worst_parent)));
  double residual = 0.0;
  for (int e : f.cut_edges()) residual = std::max(residual, std::abs(f.interface()(f.cut_point(e)->p)));
  ck.check(residual <= 1e-12, "geometry.cut_residual", tag + " max|phi|=" + sci(residual));
  const auto& g = f.gamma_h();
  const bool closed = g.size() >= 4 && g.front().p == g.back().p;
  ck.check(closed, "geometry.polyline_closed", tag + " nodes=" + std::to_string(g.size()));
  const int c3 = f.count_cut_two_edges(), c4 = f.count_cut_edge_vertex();
  const int ne = static_cast<int>(f.cut_edges().size());
  ck.check(2 * ne == 2 * c3 + c4 && (c4 > 0 || ne == static_cast<int>(f.band().size())), "geometry.edge_count",
           tag + " cut_edges=" + std::to_string(ne) + " cut_triangles=" + std::to_string(f.band().size()));
}

void verify_assembly(Checker& ck, const FittedMesh& f, const Problem& pb, const std::string& tag) {
  const auto std_sys = assemble_standard(f.base(), pb.coeff, f.interface(), pb.f, pb.g);
  const auto fit = assemble_fitted(f, pb.coeff, pb.f, pb.g);
  const auto hyb = assemble_hybrid(f, pb.coeff, pb.f, pb.g);
  const double asym = std::max({std_sys.K.max_asymmetry(), fit.K.max_asymmetry(), hyb.A.max_asymmetry(),
                                hyb.D.max_asymmetry()});
  ck.check(asym <= 1e-12, "assembly.symmetry", tag + " max=" + sci(asym));
  bool b_ok = true;
  const auto bt = hyb.B.transpose();
  for (int l = 0; l < hyb.nl(); ++l) {
    const auto vals = bt.row_values(l);
    b_ok = b_ok && vals.size() == 2 && std::abs(vals[0] + vals[1]) <= 1e-15;
  }
  ck.check(b_ok, "assembly.multiplier_columns", tag + " multipliers=" + std::to_string(hyb.nl()));
  const auto cond = condense(hyb);
  bool subset = true;
  cond.S.for_each([&](int i, int j, double) { subset = subset && std_sys.K.has_entry(i, j); });
  ck.check(subset, "assembly.condensed_pattern", tag + " nnz=" + std::to_string(cond.S.nnz()) + "/" +
                                                     std::to_string(std_sys.K.nnz()));
}

int cmd_verify(const RunConfig& c) {
  validate(c, false);
  const auto cfg = solver_config(c);
  const RadialProblem pb = radial(c);
  const Problem problem = make_problem(pb);
  Checker ck;
  for (int n : {4, 10, 20}) {
    const std::string tag = "N=" + std::to_string(n);
    const auto f = build_fitted_mesh(build_structured_mesh(n), pb.interface());
    verify_geometry(ck, f, tag);
    verify_assembly(ck, f, problem, tag);

    const auto fit = solve_problem(f, problem, Method::Fitted, cfg);
    const auto hsys = assemble_hybrid(f, problem.coeff, problem.f, problem.g);
    const auto hyb = solve_hybrid(hsys, cfg);
    const double d_hf = max_abs_diff(hyb.u_vertex, fit.u_vertex);
    ck.check(d_hf <= 1e-8, "equivalence.hybrid_fitted", tag + " max|uH-uF|=" + sci(d_hf));
    if (n > 20 || hsys.size() > 5000) {
      ck.os << "SKIP equivalence.hybrid_dense " << tag << " dense oracle limited to N <= 20\n";
    } else {
      const auto dense = dense_direct_solve(hsys);
      const double d_hd = std::max(max_abs_diff(hyb.u_vertex, dense.u_vertex), max_abs_diff(hyb.u_enriched, dense.u_enriched));
      ck.check(d_hd <= 1e-8, "equivalence.hybrid_dense", tag + " max=" + sci(d_hd));
    }
    ck.check(hyb.max_jump <= 1e-8, "hybrid.jump_residual", tag + " max=" + sci(hyb.max_jump));
    for (Method m : {Method::Standard, Method::Fitted, Method::Hybrid}) {
      const double e = patch_test_error(m, n, pb.interface(), 1.0, cfg);
      ck.check(e <= 1e-9, std::string("patch.") + to_string(m), tag + " max_error=" + sci(e));
    }
  }
  emit(c.out, ck.os.str());
  return ck.ok ? kOk : kVerifyFailed;
}

int cmd_mesh_info(const RunConfig& c) {
  validate(c, false);
  const RadialProblem pb = radial(c);
  const auto f = build_fitted_mesh(build_structured_mesh(c.n), pb.interface());
  const auto q = mesh_quality_report(f);
  const auto q0 = mesh_quality_report(f.base());
  std::ostringstream os;
  os << "N " << c.n << '\n'
     << "h " << q.h << '\n'
     << "vertices " << f.base().num_vertices() << '\n'
     << "triangles " << f.base().num_triangles() << '\n'
     << "uncut " << f.count_uncut() << '\n'
     << "edge_aligned " << f.count_edge_aligned() << '\n'
     << "cut_two_edges " << f.count_cut_two_edges() << '\n'
     << "cut_edge_vertex " << f.count_cut_edge_vertex() << '\n'
     << "cut_triangles " << f.band().size() << '\n'
     << "cut_edges " << f.cut_edges().size() << '\n'
     << "vertices_on_interface " << q.vertices_on_interface << '\n'
     << "snapped_by_tolerance " << q.snapped_by_tolerance << '\n'
     << "gamma_h_length " << f.gamma_h_length() << '\n'
     << "h_over_rho_base " << q0.h_over_rho << '\n'
     << "h_over_rho_fitted " << q.h_over_rho << '\n'
     << "min_angle_deg " << q.min_angle_deg << '\n';
  if (q.min_cut_fraction) os << "min_cut_fraction " << sci(*q.min_cut_fraction) << '\n';
  if (q.min_cut_edge_over_h) os << "min_cut_edge_over_h " << *q.min_cut_edge_over_h << '\n';
  emit(c.out, os.str());
  if (!c.dump_mesh.empty()) {
    std::ostringstream m;
    write_mesh(m, f.base());
    emit(c.dump_mesh, m.str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unfitted finite elements for elliptic interface problems"};
  app.require_subcommand(1);
  struct Sub {
    CLI::App* app;
    Options opts;
    std::function<int(const RunConfig&)> run;
  };
  std::vector<Sub> subs;
  subs.reserve(4);
  subs.push_back({app.add_subcommand("solve", "single solve with error report"), {}, cmd_solve});
  subs.push_back({app.add_subcommand("convergence", "convergence tables over an N list"), {}, cmd_convergence});
  subs.push_back({app.add_subcommand("verify", "invariant and equivalence checks"), {}, cmd_verify});
  subs.push_back({app.add_subcommand("mesh-info", "mesh and interface diagnostics"), {}, cmd_mesh_info});
  for (auto& s : subs) add_common(s.app, s.opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    for (auto& s : subs) {
      if (!s.app->parsed()) continue;
      const RunConfig cfg = s.opts.resolve();
      if (s.opts.dump_config) {
        std::cout << to_json(cfg).dump(2) << '\n';
        return kOk;
      }
      return s.run(cfg);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const GeometryError& e) {
    std::cerr << "geometry error: " << e.what() << '\n';
    return kGeometry;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kSolver;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolver;
  }
  return kConfig;
}
