#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ifem/assembly.hpp"
#include "ifem/errors.hpp"
#include "ifem/sparse.hpp"

namespace ifem {

struct SolverConfig {
  double cg_tolerance = 1e-10;     // relative residual of SPD solves
  int cg_max_iter = 50000;
  double outer_tolerance = 1e-10;  // relative residual of the multiplier iteration
  int outer_max_iter = 5000;
  bool jacobi = false;

  /// Inner solves inside the multiplier iteration run two orders tighter than the outer one.
  double inner_tolerance() const { return 0.01 * outer_tolerance; }

  void validate() const {
    if (!(cg_tolerance > 0.0 && cg_tolerance < 1.0)) throw ConfigError("cg_tolerance must lie in (0,1)");
    if (!(outer_tolerance > 0.0 && outer_tolerance < 1.0))
      throw ConfigError("outer_tolerance must lie in (0,1)");
    if (cg_max_iter <= 0) throw ConfigError("cg_max_iter must be positive");
    if (outer_max_iter <= 0) throw ConfigError("outer_max_iter must be positive");
  }
};

struct CgReport {
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> history;  // relative residual after each iteration, starting at 1
};

namespace detail {
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
}  // namespace detail

/// Conjugate gradients on a symmetric positive definite operator `apply(x, y)` (y = Op x).
/// Optional inverse diagonal enables Jacobi preconditioning. Reductions run in index order.
template <class Op>
std::vector<double> cg_solve(Op&& apply, std::span<const double> rhs, double tolerance, int max_iter,
                             CgReport* report = nullptr, std::span<const double> inv_diag = {}) {
  const std::size_t n = rhs.size();
  std::vector<double> x(n, 0.0), r(rhs.begin(), rhs.end()), z(n), p(n), q(n);
  const double bnorm = std::sqrt(detail::dot(rhs, rhs));
  CgReport local;
  CgReport& rep = report ? *report : local;
  rep = {};
  rep.history.push_back(1.0);
  if (bnorm == 0.0) return x;

  const auto precondition = [&] {
    if (inv_diag.empty())
      z = r;
    else
      for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  };
  precondition();
  p = z;
  double rz = detail::dot(r, z);
  double rel = 1.0;
  for (int it = 1; it <= max_iter; ++it) {
    apply(std::span<const double>(p), std::span<double>(q));
    const double pq = detail::dot(p, q);
    if (!(pq > 0.0))
      throw SolverError("CG breakdown: operator not positive definite (p^T A p = " + std::to_string(pq) + ")",
                        rel);
    const double alpha = rz / pq;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    rel = std::sqrt(detail::dot(r, r)) / bnorm;
    rep.iterations = it;
    rep.relative_residual = rel;
    rep.history.push_back(rel);
    if (rel <= tolerance) return x;
    precondition();
    const double rz_new = detail::dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw SolverError("CG did not converge in " + std::to_string(max_iter) +
                        " iterations (relative residual " + std::to_string(rel) + ")",
                    rel);
}

inline std::vector<double> inverse_diagonal(const SparseMatrix& m) {
  auto d = m.diagonal();
  for (auto& x : d) x = x != 0.0 ? 1.0 / x : 1.0;
  return d;
}

inline std::vector<double> cg_solve(const SparseMatrix& m, std::span<const double> rhs,
                                    const SolverConfig& cfg, CgReport* report = nullptr,
                                    double tolerance = -1.0) {
  const auto inv = cfg.jacobi ? inverse_diagonal(m) : std::vector<double>{};
  return cg_solve([&](std::span<const double> x, std::span<double> y) { m.multiply(x, y); }, rhs,
                  tolerance > 0.0 ? tolerance : cfg.cg_tolerance, cfg.cg_max_iter, report, inv);
}

inline std::vector<double> solve_standard(const LinearSystem& sys, const SolverConfig& cfg,
                                          CgReport* report = nullptr) {
  return cg_solve(sys.K, sys.rhs, cfg, report);
}

/// Returns [vertex values | cut-point enrichment coefficients].
inline std::vector<double> solve_fitted(const LinearSystem& sys, const SolverConfig& cfg,
                                        CgReport* report = nullptr) {
  return cg_solve(sys.K, sys.rhs, cfg, report);
}

// ---------------------------------------------------------------------------------------------
// Static condensation of the enriched unknowns

/// Per cut triangle: its enriched dofs (one or two) and the inverse of its D block.
struct LocalBlock {
  int triangle = -1;
  std::vector<int> dofs;
  std::array<double, 4> d_inv{};  // row-major, 1x1 uses [0]
};

/// S_u = A - C D^{-1} C^T plus the local data needed to recover v from (u, lambda).
struct CondensedOperator {
  const BlockSystem* system = nullptr;
  SparseMatrix S;
  std::vector<LocalBlock> blocks;
  std::vector<int> block_of_dof;
  std::vector<double> b_hat;  // b - C D^{-1} c

  /// y = D^{-1} x, block by block.
  void apply_d_inverse(std::span<const double> x, std::span<double> y) const {
    for (const auto& blk : blocks) {
      if (blk.dofs.size() == 1) {
        y[blk.dofs[0]] = blk.d_inv[0] * x[blk.dofs[0]];
      } else {
        const double x0 = x[blk.dofs[0]], x1 = x[blk.dofs[1]];
        y[blk.dofs[0]] = blk.d_inv[0] * x0 + blk.d_inv[1] * x1;
        y[blk.dofs[1]] = blk.d_inv[2] * x0 + blk.d_inv[3] * x1;
      }
    }
  }

  /// v = D^{-1} (c - C^T u - B lambda); the c term is dropped when `with_load` is false.
  std::vector<double> recover_enriched(std::span<const double> u, std::span<const double> lambda,
                                       bool with_load = true) const {
    const BlockSystem& s = *system;
    std::vector<double> w(s.ne(), 0.0), v(s.ne(), 0.0);
    if (with_load) w = s.c;
    std::vector<double> t(s.ne(), 0.0);
    s.C.multiply_transpose_add(u, t);
    if (!lambda.empty()) {
      std::vector<double> bl(s.ne(), 0.0);
      s.B.multiply(lambda, bl);
      for (int i = 0; i < s.ne(); ++i) t[i] += bl[i];
    }
    for (int i = 0; i < s.ne(); ++i) w[i] -= t[i];
    apply_d_inverse(w, v);
    return v;
  }
};

inline CondensedOperator condense(const BlockSystem& s) {
  CondensedOperator op;
  op.system = &s;
  const int nv = s.nv(), ne = s.ne();

  std::map<int, int> block_index;
  op.block_of_dof.assign(ne, -1);
  for (int d = 0; d < ne; ++d) {
    const int tri = s.dofs.enriched_triangle[d];
    auto [it, inserted] = block_index.try_emplace(tri, static_cast<int>(op.blocks.size()));
    if (inserted) op.blocks.push_back(LocalBlock{tri, {}, {}});
    op.blocks[it->second].dofs.push_back(d);
    op.block_of_dof[d] = it->second;
  }
  s.D.for_each([&](int i, int j, double v) {
    if (v != 0.0 && op.block_of_dof[i] != op.block_of_dof[j])
      throw SolverError("D is not block diagonal: dofs " + std::to_string(i) + " and " + std::to_string(j) +
                        " belong to different triangles");
  });
  for (auto& blk : op.blocks) {
    if (blk.dofs.size() == 1) {
      const double d = s.D.at(blk.dofs[0], blk.dofs[0]);
      if (!(std::abs(d) > 0.0)) throw SolverError("singular D block in triangle " + std::to_string(blk.triangle));
      blk.d_inv[0] = 1.0 / d;
    } else if (blk.dofs.size() == 2) {
      const double a = s.D.at(blk.dofs[0], blk.dofs[0]), b = s.D.at(blk.dofs[0], blk.dofs[1]);
      const double c = s.D.at(blk.dofs[1], blk.dofs[0]), d = s.D.at(blk.dofs[1], blk.dofs[1]);
      const double det = a * d - b * c;
      const double scale = std::max({std::abs(a), std::abs(b), std::abs(c), std::abs(d)});
      if (!(std::abs(det) > 1e-14 * scale * scale))
        throw SolverError("singular D block in triangle " + std::to_string(blk.triangle));
      blk.d_inv = {d / det, -b / det, -c / det, a / det};
    } else {
      throw SolverError("triangle " + std::to_string(blk.triangle) + " carries " +
                        std::to_string(blk.dofs.size()) + " enriched dofs");
    }
  }

  // Columns of C grouped per block: vertex rows coupled to each enriched dof.
  const SparseMatrix Ct = s.C.transpose();
  TripletList t(nv, nv);
  t.reserve(s.A.nnz() + 9 * op.blocks.size());
  s.A.for_each([&](int i, int j, double v) { t.add(i, j, v); });
  for (const auto& blk : op.blocks) {
    const std::size_t m = blk.dofs.size();
    std::map<int, std::array<double, 2>> rows;  // vertex -> C(vertex, blk.dofs[k])
    for (std::size_t k = 0; k < m; ++k) {
      const auto cols = Ct.row_cols(blk.dofs[k]);
      const auto vals = Ct.row_values(blk.dofs[k]);
      for (std::size_t n = 0; n < cols.size(); ++n) rows[cols[n]][k] = vals[n];
    }
    for (const auto& [i, ci] : rows) {
      // (D^{-1} C_i^T)
      std::array<double, 2> w{};
      if (m == 1) {
        w[0] = blk.d_inv[0] * ci[0];
      } else {
        w[0] = blk.d_inv[0] * ci[0] + blk.d_inv[1] * ci[1];
        w[1] = blk.d_inv[2] * ci[0] + blk.d_inv[3] * ci[1];
      }
      for (const auto& [j, cj] : rows) {
        double v = 0.0;
        for (std::size_t k = 0; k < m; ++k) v += cj[k] * w[k];
        t.add(j, i, -v);
      }
    }
  }
  op.S = SparseMatrix(t);

  std::vector<double> dc(ne, 0.0);
  op.apply_d_inverse(s.c, dc);
  op.b_hat = s.C * dc;
  for (int i = 0; i < nv; ++i) op.b_hat[i] = s.b[i] - op.b_hat[i];
  return op;
}

// ---------------------------------------------------------------------------------------------
// Hybrid solve

struct HybridSolution {
  std::vector<double> u_vertex;
  std::vector<double> u_enriched;
  std::vector<double> lambda;
  int outer_iterations = 0;
  long inner_iterations = 0;
  double outer_residual = 0.0;
  double constraint_residual = 0.0;  // max |(B^T v)_e| / (max |B| * max |v|)
  double max_jump = 0.0;             // max over cut edges of |v_T - v_T'|
};

namespace detail {
inline void finish_hybrid(const BlockSystem& s, HybridSolution& h) {
  std::vector<double> bt(s.nl(), 0.0);
  s.B.multiply_transpose_add(h.u_enriched, bt);
  double bmax = 0.0, vmax = 0.0, rmax = 0.0;
  s.B.for_each([&](int, int, double v) { bmax = std::max(bmax, std::abs(v)); });
  for (double v : h.u_enriched) vmax = std::max(vmax, std::abs(v));
  for (double r : bt) rmax = std::max(rmax, std::abs(r));
  h.constraint_residual = bmax * vmax > 0.0 ? rmax / (bmax * vmax) : rmax;
  h.max_jump = 0.0;
  for (int l = 0; l < s.nl(); ++l) {
    double jump = 0.0;
    s.B.for_each([&](int i, int j, double v) {
      if (j == l) jump += (v > 0.0 ? 1.0 : -1.0) * h.u_enriched[i];
    });
    h.max_jump = std::max(h.max_jump, std::abs(jump));
  }
}
}  // namespace detail

/// Multiplier operator S_lambda x = -B^T v(x), where (u, v)(x) solves the first two block rows
/// with zero load and lambda = x. Each application runs one condensed primal CG solve.
class MultiplierOperator {
public:
  MultiplierOperator(const CondensedOperator& op, const SolverConfig& cfg) : op_(op), cfg_(cfg) {
    if (cfg.jacobi) inv_diag_ = inverse_diagonal(op.S);
  }

  /// Primal solve for a given multiplier.
  std::pair<std::vector<double>, std::vector<double>> primal(std::span<const double> lambda, bool with_load) {
    const BlockSystem& s = *op_.system;
    std::vector<double> rhs(s.nv(), 0.0);
    if (with_load) rhs = op_.b_hat;
    if (!lambda.empty()) {
      std::vector<double> bl(s.ne(), 0.0), dbl(s.ne(), 0.0);
      s.B.multiply(lambda, bl);
      op_.apply_d_inverse(bl, dbl);
      std::vector<double> g(s.nv(), 0.0);
      s.C.multiply(dbl, g);
      for (int i = 0; i < s.nv(); ++i) rhs[i] += g[i];
    }
    CgReport rep;
    auto u = cg_solve([&](std::span<const double> x, std::span<double> y) { op_.S.multiply(x, y); }, rhs,
                      cfg_.inner_tolerance(), cfg_.cg_max_iter, &rep, inv_diag_);
    inner_iterations_ += rep.iterations;
    auto v = op_.recover_enriched(u, lambda, with_load);
    return {std::move(u), std::move(v)};
  }

  void operator()(std::span<const double> x, std::span<double> y) {
    const auto [u, v] = primal(x, false);
    std::fill(y.begin(), y.end(), 0.0);
    op_.system->B.multiply_transpose_add(v, y);
    for (auto& yi : y) yi = -yi;
  }

  long inner_iterations() const { return inner_iterations_; }

private:
  const CondensedOperator& op_;
  const SolverConfig& cfg_;
  std::vector<double> inv_diag_;
  long inner_iterations_ = 0;
};

/// Condense the enriched unknowns element by element, then run CG on the multiplier Schur
/// complement S_lambda lambda = B^T v(0).
inline HybridSolution solve_hybrid(const BlockSystem& s, const SolverConfig& cfg) {
  cfg.validate();
  const CondensedOperator op = condense(s);
  MultiplierOperator sl(op, cfg);
  HybridSolution h;
  if (s.nl() > 0) {
    const auto [u0, v0] = sl.primal({}, true);
    std::vector<double> r(s.nl(), 0.0);
    s.B.multiply_transpose_add(v0, r);
    CgReport rep;
    h.lambda = cg_solve(sl, r, cfg.outer_tolerance, cfg.outer_max_iter, &rep);
    h.outer_iterations = rep.iterations;
    h.outer_residual = rep.relative_residual;
  }
  auto [u, v] = sl.primal(h.lambda, true);
  h.u_vertex = std::move(u);
  h.u_enriched = std::move(v);
  h.inner_iterations = sl.inner_iterations();
  detail::finish_hybrid(s, h);
  return h;
}

/// Dense LU with partial pivoting of the full saddle matrix. Test oracle only.
inline HybridSolution dense_direct_solve(const BlockSystem& s, int max_dimension = 5000) {
  const int n = s.size();
  if (n > max_dimension)
    throw ConfigError("dense solve: dimension " + std::to_string(n) + " exceeds guard " +
                      std::to_string(max_dimension));
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  s.monolithic().for_each([&](int i, int j, double v) { m(i, j) += v; });
  const auto rhs = s.monolithic_rhs();
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), n);
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  if (!(lu.rcond() > 1e-14)) throw SolverError("dense saddle-point matrix is singular");
  const Eigen::VectorXd x = lu.solve(b);
  HybridSolution h;
  h.u_vertex.assign(x.data(), x.data() + s.nv());
  h.u_enriched.assign(x.data() + s.nv(), x.data() + s.nv() + s.ne());
  h.lambda.assign(x.data() + s.nv() + s.ne(), x.data() + n);
  detail::finish_hybrid(s, h);
  return h;
}

}  // namespace ifem
