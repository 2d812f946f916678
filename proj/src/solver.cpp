#include "ppz/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace ppz {

namespace {

constexpr double kDivergeX = 1e13;
constexpr double kDivergeDual = 1e13;

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Largest alpha in (0, 1] keeping w + alpha*dw >= (1 - tau) * w.
double max_step(const Eigen::VectorXd& w, const Eigen::VectorXd& dw, double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (dw[i] < 0) alpha = std::min(alpha, -tau * w[i] / dw[i]);
  }
  return alpha;
}

struct Ipm {
  const ConvexProgram& P;
  SolverOptions opt;

  int n, p, m;
  std::vector<int> L, U;  // variables with finite lower / upper bounds
  int nl, nu;

  Eigen::VectorXd x, y, z, s, zl, u, zh, v;

  Eigen::SparseMatrix<double> K;          // [H E' G'; E -dI 0; G 0 -(S/Z)-dI]
  std::vector<Eigen::Index> diag_pos;     // value index of each K diagonal entry
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool pattern_ready = false;

  double reg_primal = 1e-9;
  double reg_dual = 1e-8;
  double last_ap = 0, last_ad = 0;

  struct Snapshot {
    Eigen::VectorXd x, y, z, s, zl, u, zh, v;
    double metric = std::numeric_limits<double>::infinity();
  } best;

  void snapshot_if_better(double metric) {
    if (!(metric < best.metric)) return;
    best = Snapshot{x, y, z, s, zl, u, zh, v, metric};
  }

  void restore_best() {
    if (!std::isfinite(best.metric)) return;
    x = best.x;
    y = best.y;
    z = best.z;
    s = best.s;
    zl = best.zl;
    u = best.u;
    zh = best.zh;
    v = best.v;
  }

  explicit Ipm(const ConvexProgram& program, const SolverOptions& options)
      : P(program), opt(options) {
    n = P.num_vars;
    p = static_cast<int>(P.E.rows());
    m = static_cast<int>(P.G.rows());
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(P.lo[i])) L.push_back(i);
      if (std::isfinite(P.hi[i])) U.push_back(i);
    }
    nl = static_cast<int>(L.size());
    nu = static_cast<int>(U.size());
  }

  Eigen::VectorXd gather(const Eigen::VectorXd& full, const std::vector<int>& idx) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = full[idx[k]];
    return out;
  }

  void scatter_add(Eigen::VectorXd& full, const std::vector<int>& idx,
                   const Eigen::VectorXd& vals, double sign) const {
    for (std::size_t k = 0; k < idx.size(); ++k)
      full[idx[k]] += sign * vals[static_cast<Eigen::Index>(k)];
  }

  void init_point() {
    x.resize(n);
    for (int i = 0; i < n; ++i) {
      bool fl = std::isfinite(P.lo[i]), fh = std::isfinite(P.hi[i]);
      if (fl && fh) x[i] = 0.5 * (P.lo[i] + P.hi[i]);
      else if (fl) x[i] = P.lo[i] + 1.0;
      else if (fh) x[i] = P.hi[i] - 1.0;
      else x[i] = 0.0;
    }
    y = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd gx = P.G * x;
    s.resize(m);
    for (int i = 0; i < m; ++i) s[i] = std::max(P.h[i] - gx[i], 1.0);
    z = Eigen::VectorXd::Ones(m);
    u.resize(nl);
    for (int k = 0; k < nl; ++k) u[k] = std::max(x[L[static_cast<std::size_t>(k)]] - P.lo[L[static_cast<std::size_t>(k)]], 1.0);
    zl = Eigen::VectorXd::Ones(nl);
    v.resize(nu);
    for (int k = 0; k < nu; ++k) v[k] = std::max(P.hi[U[static_cast<std::size_t>(k)]] - x[U[static_cast<std::size_t>(k)]], 1.0);
    zh = Eigen::VectorXd::Ones(nu);
  }

  // KKT pattern is fixed; only diagonal values change between iterations.
  void build_kkt_pattern() {
    const int dim = n + p + m;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(P.Q.nonZeros() + 2 * P.E.nonZeros() + 2 * P.G.nonZeros() + dim));
    for (int col = 0; col < P.Q.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(P.Q, col); it; ++it)
        if (it.row() != it.col()) trips.emplace_back(static_cast<int>(it.row()), col, it.value());
    for (int col = 0; col < P.E.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(P.E, col); it; ++it) {
        trips.emplace_back(n + static_cast<int>(it.row()), col, it.value());
        trips.emplace_back(col, n + static_cast<int>(it.row()), it.value());
      }
    for (int col = 0; col < P.G.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(P.G, col); it; ++it) {
        trips.emplace_back(n + p + static_cast<int>(it.row()), col, it.value());
        trips.emplace_back(col, n + p + static_cast<int>(it.row()), it.value());
      }
    for (int i = 0; i < dim; ++i) trips.emplace_back(i, i, 1.0);  // placeholder diagonal

    K.resize(dim, dim);
    K.setFromTriplets(trips.begin(), trips.end());
    K.makeCompressed();

    diag_pos.assign(static_cast<std::size_t>(dim), -1);
    for (int col = 0; col < dim; ++col) {
      for (Eigen::Index idx = K.outerIndexPtr()[col]; idx < K.outerIndexPtr()[col + 1]; ++idx) {
        if (K.innerIndexPtr()[idx] == col) diag_pos[static_cast<std::size_t>(col)] = idx;
      }
    }
    ldlt.analyzePattern(K);
    pattern_ready = true;
  }

  bool refresh_kkt_values() {
    Eigen::VectorXd qdiag = Eigen::VectorXd::Zero(n);
    for (int col = 0; col < P.Q.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(P.Q, col); it; ++it)
        if (it.row() == it.col()) qdiag[col] = it.value();

    Eigen::VectorXd dbox = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < nl; ++k)
      dbox[L[static_cast<std::size_t>(k)]] += std::min(zl[k] / u[k], 1e14);
    for (int k = 0; k < nu; ++k)
      dbox[U[static_cast<std::size_t>(k)]] += std::min(zh[k] / v[k], 1e14);

    double* vals = K.valuePtr();
    for (int i = 0; i < n; ++i) vals[diag_pos[static_cast<std::size_t>(i)]] = qdiag[i] + dbox[i] + reg_primal;
    for (int i = 0; i < p; ++i) vals[diag_pos[static_cast<std::size_t>(n + i)]] = -reg_dual;
    for (int i = 0; i < m; ++i)
      vals[diag_pos[static_cast<std::size_t>(n + p + i)]] = -std::clamp(s[i] / z[i], 1e-14, 1e14) - reg_dual;

    ldlt.factorize(K);
    return ldlt.info() == Eigen::Success;
  }

  // K carries static regularization so the LDLT stays stable; refinement is
  // taken against the unregularized system, otherwise the regularization
  // error itself caps the achievable KKT accuracy.
  Eigen::VectorXd apply_true_kkt(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = K * v;
    out.head(n) -= reg_primal * v.head(n);
    out.segment(n, p) += reg_dual * v.segment(n, p);
    out.tail(m) += reg_dual * v.tail(m);
    return out;
  }

  Eigen::VectorXd solve_kkt(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd sol = ldlt.solve(rhs);
    for (int round = 0; round < 3; ++round) {
      Eigen::VectorXd resid = rhs - apply_true_kkt(sol);
      if (inf_norm(resid) < 1e-14 * (1.0 + inf_norm(rhs))) break;
      sol += ldlt.solve(resid);
    }
    return sol;
  }

  struct Direction {
    Eigen::VectorXd dx, dy, dz, ds, du, dv, dzl, dzh;

    bool finite() const {
      return dx.allFinite() && dy.allFinite() && dz.allFinite() && ds.allFinite() &&
             du.allFinite() && dv.allFinite() && dzl.allFinite() && dzh.allFinite();
    }
  };

  Direction directions(const Eigen::VectorXd& rx, const Eigen::VectorXd& re,
                       const Eigen::VectorXd& rg, const Eigen::VectorXd& ru,
                       const Eigen::VectorXd& rv, const Eigen::VectorXd& rcs,
                       const Eigen::VectorXd& rcu, const Eigen::VectorXd& rcv) const {
    Eigen::VectorXd rhs(n + p + m);
    Eigen::VectorXd rhs_x = -rx;
    if (nl) {
      Eigen::VectorXd t = (rcu - zl.cwiseProduct(ru)).cwiseQuotient(u);
      for (int k = 0; k < nl; ++k) rhs_x[L[static_cast<std::size_t>(k)]] += t[k];
    }
    if (nu) {
      Eigen::VectorXd t = (rcv - zh.cwiseProduct(rv)).cwiseQuotient(v);
      for (int k = 0; k < nu; ++k) rhs_x[U[static_cast<std::size_t>(k)]] -= t[k];
    }
    rhs.head(n) = rhs_x;
    rhs.segment(n, p) = -re;
    rhs.tail(m) = -rg - rcs.cwiseQuotient(z);

    Eigen::VectorXd sol = solve_kkt(rhs);

    Direction d;
    d.dx = sol.head(n);
    d.dy = sol.segment(n, p);
    d.dz = sol.tail(m);
    d.ds = -rg - P.G * d.dx;
    d.du.resize(nl);
    d.dzl.resize(nl);
    for (int k = 0; k < nl; ++k) {
      d.du[k] = d.dx[L[static_cast<std::size_t>(k)]] + ru[k];
      d.dzl[k] = (rcu[k] - zl[k] * d.du[k]) / u[k];
    }
    d.dv.resize(nu);
    d.dzh.resize(nu);
    for (int k = 0; k < nu; ++k) {
      d.dv[k] = -d.dx[U[static_cast<std::size_t>(k)]] + rv[k];
      d.dzh[k] = (rcv[k] - zh[k] * d.dv[k]) / v[k];
    }
    return d;
  }

  double objective_at(const Eigen::VectorXd& xx) const {
    return 0.5 * xx.dot(P.Q * xx) + P.c.dot(xx);
  }

  // Residuals of the true optimality system at the current iterate.
  struct Residuals {
    Eigen::VectorXd rx, re, rg, ru, rv;
    double primal, dual, comp, mu;
  };

  Residuals residuals() const {
    Residuals r;
    r.rx = P.Q * x + P.c + P.E.transpose() * y + P.G.transpose() * z;
    scatter_add(r.rx, L, zl, -1.0);
    scatter_add(r.rx, U, zh, +1.0);
    r.re = P.E * x - P.g;
    r.rg = P.G * x + s - P.h;
    r.ru.resize(nl);
    for (int k = 0; k < nl; ++k) r.ru[k] = x[L[static_cast<std::size_t>(k)]] - P.lo[L[static_cast<std::size_t>(k)]] - u[k];
    r.rv.resize(nu);
    for (int k = 0; k < nu; ++k) r.rv[k] = P.hi[U[static_cast<std::size_t>(k)]] - x[U[static_cast<std::size_t>(k)]] - v[k];

    double pres = std::max({inf_norm(r.re), inf_norm(r.rg), inf_norm(r.ru), inf_norm(r.rv)});
    // Also measure violation of the original constraints directly.
    if (m) {
      Eigen::VectorXd viol = (P.G * x - P.h).cwiseMax(0.0);
      pres = std::max(pres, inf_norm(viol));
    }
    for (int k = 0; k < nl; ++k) pres = std::max(pres, P.lo[L[static_cast<std::size_t>(k)]] - x[L[static_cast<std::size_t>(k)]]);
    for (int k = 0; k < nu; ++k) pres = std::max(pres, x[U[static_cast<std::size_t>(k)]] - P.hi[U[static_cast<std::size_t>(k)]]);

    r.primal = pres;
    r.dual = inf_norm(r.rx);
    double cmax = 0.0;
    double csum = 0.0;
    for (int i = 0; i < m; ++i) { cmax = std::max(cmax, std::abs(s[i] * z[i])); csum += s[i] * z[i]; }
    for (int k = 0; k < nl; ++k) { cmax = std::max(cmax, std::abs(u[k] * zl[k])); csum += u[k] * zl[k]; }
    for (int k = 0; k < nu; ++k) { cmax = std::max(cmax, std::abs(v[k] * zh[k])); csum += v[k] * zh[k]; }
    r.comp = cmax;
    int ncomp = m + nl + nu;
    r.mu = ncomp ? csum / ncomp : 0.0;
    return r;
  }

  SolveResult finish(SolveStatus status, int iters) const {
    SolveResult res;
    res.status = status;
    res.x = x;
    res.duals_ineq = z;
    res.duals_eq = y;
    res.duals_lo = Eigen::VectorXd::Zero(n);
    res.duals_hi = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < nl; ++k) res.duals_lo[L[static_cast<std::size_t>(k)]] = zl[k];
    for (int k = 0; k < nu; ++k) res.duals_hi[U[static_cast<std::size_t>(k)]] = zh[k];
    res.objective = objective_at(x);
    double gap = 0.0;
    for (int i = 0; i < m; ++i) gap += s[i] * z[i];
    for (int k = 0; k < nl; ++k) gap += u[k] * zl[k];
    for (int k = 0; k < nu; ++k) gap += v[k] * zh[k];
    res.dual_objective = res.objective - gap;
    Residuals r = residuals();
    res.kkt_residual = std::max({r.primal, r.dual, r.comp});
    res.iterations = iters;
    return res;
  }

  // Dual polish. The path-following loop sometimes converges in the primal
  // long before the duals settle (degenerate vertices with dependent active
  // rows). Freeze the primal point and recover certified multipliers by
  // nonnegative least squares on the stationarity equation, Lawson-Hanson
  // style: equality multipliers stay free, inequality and bound multipliers
  // enter the support one at a time and leave if they turn negative.
  bool try_polish() {
    // Candidate columns: rows and bounds that are numerically active here.
    std::vector<int> cand_g, cand_l, cand_u;
    {
      Eigen::VectorXd slack = P.h - P.G * x;
      for (int i = 0; i < m; ++i)
        if (slack[i] < 1e-7 * (1.0 + std::abs(P.h[i]))) cand_g.push_back(i);
      for (int k = 0; k < nl; ++k)
        if (x[L[static_cast<std::size_t>(k)]] - P.lo[L[static_cast<std::size_t>(k)]] < 1e-7)
          cand_l.push_back(k);
      for (int k = 0; k < nu; ++k)
        if (P.hi[U[static_cast<std::size_t>(k)]] - x[U[static_cast<std::size_t>(k)]] < 1e-7)
          cand_u.push_back(k);
    }
    const int cg = static_cast<int>(cand_g.size());
    const int cl = static_cast<int>(cand_l.size());
    const int ch = static_cast<int>(cand_u.size());
    const int cols = p + cg + cl + ch;

    // Stationarity columns: residual(w) = Qx + c + A w with w the stacked
    // multipliers (y free, rest nonnegative).
    std::vector<Eigen::Triplet<double>> at;
    for (int col = 0; col < P.E.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(P.E, col); it; ++it)
        at.emplace_back(col, static_cast<int>(it.row()), it.value());
    {
      std::vector<int> col_of(static_cast<std::size_t>(m), -1);
      for (int r = 0; r < cg; ++r) col_of[static_cast<std::size_t>(cand_g[static_cast<std::size_t>(r)])] = p + r;
      for (int col = 0; col < P.G.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(P.G, col); it; ++it) {
          int cc = col_of[static_cast<std::size_t>(it.row())];
          if (cc >= 0) at.emplace_back(col, cc, it.value());
        }
    }
    for (int r = 0; r < cl; ++r)
      at.emplace_back(L[static_cast<std::size_t>(cand_l[static_cast<std::size_t>(r)])], p + cg + r, -1.0);
    for (int r = 0; r < ch; ++r)
      at.emplace_back(U[static_cast<std::size_t>(cand_u[static_cast<std::size_t>(r)])], p + cg + cl + r, 1.0);
    Eigen::SparseMatrix<double> A(n, cols);
    A.setFromTriplets(at.begin(), at.end());
    const Eigen::MatrixXd Ad = Eigen::MatrixXd(A);  // polish sets are small
    const Eigen::VectorXd r0 = P.Q * x + P.c;

    std::vector<char> in_support(static_cast<std::size_t>(cols), 0);
    for (int i = 0; i < p; ++i) in_support[static_cast<std::size_t>(i)] = 1;  // y always in
    Eigen::VectorXd w = Eigen::VectorXd::Zero(cols);

    auto solve_support = [&]() -> Eigen::VectorXd {
      std::vector<int> idx;
      for (int i = 0; i < cols; ++i)
        if (in_support[static_cast<std::size_t>(i)]) idx.push_back(i);
      Eigen::MatrixXd As(n, static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) As.col(static_cast<Eigen::Index>(k)) = Ad.col(idx[k]);
      Eigen::VectorXd ws = (As.transpose() * As +
                            1e-12 * Eigen::MatrixXd::Identity(As.cols(), As.cols()))
                               .ldlt()
                               .solve(-As.transpose() * r0);
      Eigen::VectorXd full = Eigen::VectorXd::Zero(cols);
      for (std::size_t k = 0; k < idx.size(); ++k) full[idx[k]] = ws[static_cast<Eigen::Index>(k)];
      return full;
    };

    const double gap_tol = 0.1 * opt.tol;
    for (int outer = 0; outer < 4 * cols + 4; ++outer) {
      Eigen::VectorXd resid = r0 + Ad * w;
      // Most helpful excluded column.
      int enter = -1;
      double best = -gap_tol;
      Eigen::VectorXd grad = Ad.transpose() * resid;
      for (int j = p; j < cols; ++j) {
        if (in_support[static_cast<std::size_t>(j)]) continue;
        // Descent requires a negative gradient for w_j lifting off zero.
        if (grad[j] < best) {
          best = grad[j];
          enter = j;
        }
      }
      if (enter < 0) break;
      in_support[static_cast<std::size_t>(enter)] = 1;

      for (int inner = 0; inner < cols + 2; ++inner) {
        Eigen::VectorXd trial = solve_support();
        bool negative = false;
        double alpha = 1.0;
        for (int j = p; j < cols; ++j) {
          if (!in_support[static_cast<std::size_t>(j)] || trial[j] >= 0) continue;
          negative = true;
          alpha = std::min(alpha, w[j] / (w[j] - trial[j]));
        }
        if (!negative) {
          w = trial;
          break;
        }
        w += alpha * (trial - w);
        for (int j = p; j < cols; ++j)
          if (in_support[static_cast<std::size_t>(j)] && w[j] <= 1e-14) {
            w[j] = 0.0;
            in_support[static_cast<std::size_t>(j)] = 0;
          }
      }
    }

    // Candidate duals at the frozen primal point.
    Eigen::VectorXd cy = w.head(p);
    Eigen::VectorXd cz = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd czl = Eigen::VectorXd::Zero(nl);
    Eigen::VectorXd czh = Eigen::VectorXd::Zero(nu);
    for (int r = 0; r < cg; ++r) cz[cand_g[static_cast<std::size_t>(r)]] = std::max(w[p + r], 0.0);
    for (int r = 0; r < cl; ++r)
      czl[cand_l[static_cast<std::size_t>(r)]] = std::max(w[p + cg + r], 0.0);
    for (int r = 0; r < ch; ++r)
      czh[cand_u[static_cast<std::size_t>(r)]] = std::max(w[p + cg + cl + r], 0.0);

    Eigen::VectorXd cs = (P.h - P.G * x).cwiseMax(0.0);
    Eigen::VectorXd cu(nl), cv(nu);
    for (int k = 0; k < nl; ++k)
      cu[k] = std::max(x[L[static_cast<std::size_t>(k)]] - P.lo[L[static_cast<std::size_t>(k)]], 0.0);
    for (int k = 0; k < nu; ++k)
      cv[k] = std::max(P.hi[U[static_cast<std::size_t>(k)]] - x[U[static_cast<std::size_t>(k)]], 0.0);

    auto certify_and_adopt = [&](const Eigen::VectorXd& px, const Eigen::VectorXd& py,
                                 const Eigen::VectorXd& pz, const Eigen::VectorXd& pzl,
                                 const Eigen::VectorXd& pzh) {
      Eigen::VectorXd ps = (P.h - P.G * px).cwiseMax(0.0);
      Eigen::VectorXd pu(nl), pv(nu);
      for (int k = 0; k < nl; ++k)
        pu[k] = std::max(px[L[static_cast<std::size_t>(k)]] - P.lo[L[static_cast<std::size_t>(k)]], 0.0);
      for (int k = 0; k < nu; ++k)
        pv[k] = std::max(P.hi[U[static_cast<std::size_t>(k)]] - px[U[static_cast<std::size_t>(k)]], 0.0);
      Ipm probe(P, opt);
      probe.x = px;
      probe.y = py;
      probe.z = pz;
      probe.s = ps;
      probe.zl = pzl;
      probe.u = pu;
      probe.zh = pzh;
      probe.v = pv;
      Residuals r = probe.residuals();
      if (!(r.primal <= opt.tol && r.dual <= opt.tol && r.comp <= opt.tol)) {
        if (opt.verbose)
          fprintf(stderr, "polish: certify failed %9.2e %9.2e %9.2e\n", r.primal, r.dual, r.comp);
        return false;
      }
      x = px;
      y = py;
      z = pz;
      s = ps;
      zl = pzl;
      u = pu;
      zh = pzh;
      v = pv;
      return true;
    };

    if (certify_and_adopt(x, cy, cz, czl, czh)) return true;

    // The frozen point may sit a hair off the vertex; re-solve the equality
    // system on the NNLS support, which now carries a valid multiplier sign
    // pattern, and certify that instead.
    std::vector<int> sup_g, sup_l, sup_u;
    for (int r = 0; r < cg; ++r)
      if (w[p + r] > 0) sup_g.push_back(cand_g[static_cast<std::size_t>(r)]);
    for (int r = 0; r < cl; ++r)
      if (w[p + cg + r] > 0) sup_l.push_back(cand_l[static_cast<std::size_t>(r)]);
    for (int r = 0; r < ch; ++r)
      if (w[p + cg + cl + r] > 0) sup_u.push_back(cand_u[static_cast<std::size_t>(r)]);
    const int mg = static_cast<int>(sup_g.size());
    const int ml = static_cast<int>(sup_l.size());
    const int mh = static_cast<int>(sup_u.size());
    const int dim = n + p + mg + ml + mh;

    std::vector<Eigen::Triplet<double>> trips;
    auto add_sym = [&](int row, int col, double val) {
      trips.emplace_back(row, col, val);
      if (row != col) trips.emplace_back(col, row, val);
    };
    for (int col = 0; col < P.Q.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(P.Q, col); it; ++it)
        if (it.row() >= col) add_sym(static_cast<int>(it.row()), col, it.value());
    for (int col = 0; col < P.E.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(P.E, col); it; ++it)
        add_sym(n + static_cast<int>(it.row()), col, it.value());
    {
      std::vector<int> row_of(static_cast<std::size_t>(m), -1);
      for (int r = 0; r < mg; ++r) row_of[static_cast<std::size_t>(sup_g[static_cast<std::size_t>(r)])] = r;
      for (int col = 0; col < P.G.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(P.G, col); it; ++it) {
          int r = row_of[static_cast<std::size_t>(it.row())];
          if (r >= 0) add_sym(n + p + r, col, it.value());
        }
    }
    for (int r = 0; r < ml; ++r)
      add_sym(n + p + mg + r, L[static_cast<std::size_t>(sup_l[static_cast<std::size_t>(r)])], -1.0);
    for (int r = 0; r < mh; ++r)
      add_sym(n + p + mg + ml + r, U[static_cast<std::size_t>(sup_u[static_cast<std::size_t>(r)])], 1.0);
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, 1e-11);
    for (int i = n; i < dim; ++i) trips.emplace_back(i, i, -1e-11);

    Eigen::SparseMatrix<double> Kp(dim, dim);
    Kp.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> fact(Kp);
    if (fact.info() != Eigen::Success) return false;
    Eigen::VectorXd rhs(dim);
    rhs.head(n) = -P.c;
    rhs.segment(n, p) = P.g;
    for (int r = 0; r < mg; ++r) rhs[n + p + r] = P.h[sup_g[static_cast<std::size_t>(r)]];
    for (int r = 0; r < ml; ++r)
      rhs[n + p + mg + r] = -P.lo[L[static_cast<std::size_t>(sup_l[static_cast<std::size_t>(r)])]];
    for (int r = 0; r < mh; ++r)
      rhs[n + p + mg + ml + r] = P.hi[U[static_cast<std::size_t>(sup_u[static_cast<std::size_t>(r)])]];
    Eigen::VectorXd sol = fact.solve(rhs);
    for (int round = 0; round < 2; ++round) sol += fact.solve(rhs - Kp * sol);
    if (!sol.allFinite()) return false;

    Eigen::VectorXd px = sol.head(n);
    Eigen::VectorXd py = sol.segment(n, p);
    Eigen::VectorXd pz = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd pzl = Eigen::VectorXd::Zero(nl);
    Eigen::VectorXd pzh = Eigen::VectorXd::Zero(nu);
    for (int r = 0; r < mg; ++r) pz[sup_g[static_cast<std::size_t>(r)]] = std::max(sol[n + p + r], 0.0);
    for (int r = 0; r < ml; ++r)
      pzl[sup_l[static_cast<std::size_t>(r)]] = std::max(sol[n + p + mg + r], 0.0);
    for (int r = 0; r < mh; ++r)
      pzh[sup_u[static_cast<std::size_t>(r)]] = std::max(sol[n + p + mg + ml + r], 0.0);
    return certify_and_adopt(px, py, pz, pzl, pzh);
  }

  SolveResult run() {
    init_point();
    if (n == 0) {
      x.resize(0);
      return finish(SolveStatus::Optimal, 0);
    }
    build_kkt_pattern();

    const int ncomp = m + nl + nu;
    double best_metric = std::numeric_limits<double>::infinity();
    int stall = 0;

    int iter = 0;
    for (; iter < opt.max_iters; ++iter) {
      Residuals r = residuals();
      if (opt.verbose) {
        // Intentionally terse; hooked up via SolverOptions only.
        fprintf(stderr, "ipm %3d primal %9.2e dual %9.2e mu %9.2e ap %6.3f ad %6.3f\n", iter,
                r.primal, r.dual, r.mu, last_ap, last_ad);
      }
      if (r.primal <= opt.tol && r.dual <= opt.tol && r.comp <= opt.tol)
        return finish(SolveStatus::Optimal, iter);

      if (!std::isfinite(r.primal) || !std::isfinite(r.dual) || !std::isfinite(r.mu)) {
        restore_best();
        break;
      }
      snapshot_if_better(std::max({r.primal, r.dual, r.comp}));

      if (inf_norm(x) > kDivergeX || objective_at(x) < -1e15)
        return finish(SolveStatus::Unbounded, iter);
      if (std::max({inf_norm(y), inf_norm(z), inf_norm(zl), inf_norm(zh)}) > kDivergeDual)
        return finish(SolveStatus::Infeasible, iter);

      double metric = std::max({r.primal, r.dual, r.mu});
      if (metric < best_metric * 0.999) {
        best_metric = metric;
        stall = 0;
      } else if (++stall > 50) {
        break;  // classify below
      }

      if (ncomp == 0) {
        // Pure equality-constrained QP: one Newton solve.
        if (!refresh_kkt_values()) return finish(SolveStatus::IterLimit, iter);
        Eigen::VectorXd rhs(n + p);
        rhs.head(n) = -r.rx;
        rhs.segment(n, p) = -r.re;
        Eigen::VectorXd full(n + p + m);
        full.head(n + p) = rhs;
        Eigen::VectorXd sol = solve_kkt(full);
        x += sol.head(n);
        y += sol.segment(n, p);
        continue;
      }

      if (!refresh_kkt_values()) {
        reg_primal *= 10;
        reg_dual *= 10;
        if (reg_primal > 1e-2) return finish(SolveStatus::IterLimit, iter);
        continue;
      }

      // Predictor.
      Eigen::VectorXd rcs = -s.cwiseProduct(z);
      Eigen::VectorXd rcu = -u.cwiseProduct(zl);
      Eigen::VectorXd rcv = -v.cwiseProduct(zh);
      Direction aff = directions(r.rx, r.re, r.rg, r.ru, r.rv, rcs, rcu, rcv);
      if (!aff.finite()) {
        reg_primal *= 10;
        reg_dual *= 10;
        if (reg_primal > 1e-2) break;
        continue;
      }

      double ap = std::min({max_step(s, aff.ds, 1.0), max_step(u, aff.du, 1.0), max_step(v, aff.dv, 1.0)});
      double ad = std::min({max_step(z, aff.dz, 1.0), max_step(zl, aff.dzl, 1.0), max_step(zh, aff.dzh, 1.0)});
      double mu_aff = 0.0;
      for (int i = 0; i < m; ++i) mu_aff += (s[i] + ap * aff.ds[i]) * (z[i] + ad * aff.dz[i]);
      for (int k = 0; k < nl; ++k) mu_aff += (u[k] + ap * aff.du[k]) * (zl[k] + ad * aff.dzl[k]);
      for (int k = 0; k < nu; ++k) mu_aff += (v[k] + ap * aff.dv[k]) * (zh[k] + ad * aff.dzh[k]);
      mu_aff /= ncomp;
      double sigma = std::clamp(std::pow(mu_aff / std::max(r.mu, 1e-300), 3.0), 1e-8, 1.0);

      // Corrector. When mu has raced far below the unresolved residuals the
      // Newton directions lose traction; climb back toward the central path.
      double target = sigma * r.mu;
      double resid_scale = std::max(r.primal, r.dual) / std::max(1.0, inf_norm(P.c));
      if (resid_scale > 1e4 * r.mu) target = std::max(target, 1e2 * r.mu);
      rcs = Eigen::VectorXd::Constant(m, target) - s.cwiseProduct(z) - aff.ds.cwiseProduct(aff.dz);
      rcu = Eigen::VectorXd::Constant(nl, target) - u.cwiseProduct(zl) - aff.du.cwiseProduct(aff.dzl);
      rcv = Eigen::VectorXd::Constant(nu, target) - v.cwiseProduct(zh) - aff.dv.cwiseProduct(aff.dzh);
      Direction dir = directions(r.rx, r.re, r.rg, r.ru, r.rv, rcs, rcu, rcv);
      if (!dir.finite()) {
        reg_primal *= 10;
        reg_dual *= 10;
        if (reg_primal > 1e-2) break;
        continue;
      }

      double tau = 0.995;
      auto step_pair = [&](const Direction& d) {
        double a = std::min(1.0, std::min({max_step(s, d.ds, tau), max_step(u, d.du, tau),
                                           max_step(v, d.dv, tau)}));
        double b = std::min(1.0, std::min({max_step(z, d.dz, tau), max_step(zl, d.dzl, tau),
                                           max_step(zh, d.dzh, tau)}));
        return std::pair<double, double>(a, b);
      };
      std::tie(ap, ad) = step_pair(dir);

      // A collapsed step means some pair sits at a degenerate corner; a pure
      // centering direction lifts it back toward the central path.
      if (std::min(ap, ad) < 0.05) {
        rcs = Eigen::VectorXd::Constant(m, r.mu) - s.cwiseProduct(z);
        rcu = Eigen::VectorXd::Constant(nl, r.mu) - u.cwiseProduct(zl);
        rcv = Eigen::VectorXd::Constant(nu, r.mu) - v.cwiseProduct(zh);
        Direction centered = directions(r.rx, r.re, r.rg, r.ru, r.rv, rcs, rcu, rcv);
        auto [cp, cd] = step_pair(centered);
        if (std::min(cp, cd) > std::min(ap, ad)) {
          dir = centered;
          ap = cp;
          ad = cd;
        }
      }

      last_ap = ap;
      last_ad = ad;
      x += ap * dir.dx;
      s += ap * dir.ds;
      u += ap * dir.du;
      v += ap * dir.dv;
      y += ad * dir.dy;
      z += ad * dir.dz;
      zl += ad * dir.dzl;
      zh += ad * dir.dzh;
      // An underflowed member turns later divisions into inf; this floor is
      // far below every tolerance in play.
      const double kFloor = 1e-30;
      s = s.cwiseMax(kFloor);
      z = z.cwiseMax(kFloor);
      u = u.cwiseMax(kFloor);
      v = v.cwiseMax(kFloor);
      zl = zl.cwiseMax(kFloor);
      zh = zh.cwiseMax(kFloor);

      // Keep every pair inside a wide central-path neighborhood: a product
      // collapsing far below mu pins the step length at zero for the rest of
      // the solve. Lifting the smaller member is absorbed by the residuals.
      double mu_next = 0.0;
      for (int i = 0; i < m; ++i) mu_next += s[i] * z[i];
      for (int k = 0; k < nl; ++k) mu_next += u[k] * zl[k];
      for (int k = 0; k < nu; ++k) mu_next += v[k] * zh[k];
      mu_next /= ncomp;
      if (!std::isfinite(mu_next) || mu_next <= 0) continue;  // next residual pass settles it
      const double floor_product = 5e-2 * mu_next;
      const double balanced = std::sqrt(floor_product);
      auto lift = [floor_product, balanced](Eigen::VectorXd& a, Eigen::VectorXd& b) {
        for (Eigen::Index i = 0; i < a.size(); ++i) {
          if (a[i] * b[i] < floor_product) {
            if (std::max(a[i], b[i]) <= balanced) {
              a[i] = balanced;
              b[i] = balanced;
            } else if (a[i] < b[i]) {
              a[i] = floor_product / b[i];
            } else {
              b[i] = floor_product / a[i];
            }
          }
        }
      };
      lift(s, z);
      lift(u, zl);
      lift(v, zh);
    }

    {
      Residuals tail = residuals();
      bool finite = std::isfinite(tail.primal) && std::isfinite(tail.dual);
      if (!finite || std::max({tail.primal, tail.dual, tail.comp}) > best.metric) restore_best();
    }
    Residuals r = residuals();
    if (r.primal <= opt.tol && r.dual <= opt.tol && r.comp <= opt.tol)
      return finish(SolveStatus::Optimal, iter);
    if (r.primal <= opt.tol && try_polish()) return finish(SolveStatus::Optimal, iter);
    return finish(r.primal > opt.tol ? SolveStatus::Infeasible : SolveStatus::IterLimit, iter);
  }
};

// Recession certificate: a direction d with Gd <= 0, Ed = 0, Qd = 0,
// finite bounds respected, and c'd < 0 proves the objective is unbounded
// below. The search is normalized to the unit box, so it is itself a small
// bounded LP.
bool unbounded_certificate(const ConvexProgram& P, const SolverOptions& opt) {
  const int n = P.num_vars;
  ConvexProgram R = ConvexProgram::make(n);
  R.c = P.c;
  for (int i = 0; i < n; ++i) {
    R.lo[i] = std::isfinite(P.lo[i]) ? 0.0 : -1.0;
    R.hi[i] = std::isfinite(P.hi[i]) ? 0.0 : 1.0;
  }
  R.G = P.G;
  R.h = Eigen::VectorXd::Zero(P.G.rows());
  // Ed = 0 and (for quadratics) Qd = 0 stacked as equalities.
  std::vector<Eigen::Triplet<double>> et;
  for (int col = 0; col < P.E.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(P.E, col); it; ++it)
      et.emplace_back(static_cast<int>(it.row()), col, it.value());
  int rows = static_cast<int>(P.E.rows());
  for (int col = 0; col < P.Q.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(P.Q, col); it; ++it)
      et.emplace_back(rows + static_cast<int>(it.row()), col, it.value());
  if (P.Q.nonZeros()) rows += n;
  R.E.resize(rows, n);
  R.E.setFromTriplets(et.begin(), et.end());
  R.g = Eigen::VectorXd::Zero(rows);

  SolverOptions ropt = opt;
  ropt.tol = 1e-8;
  Ipm ipm(R, ropt);
  SolveResult res = ipm.run();
  double scale = 1.0 + inf_norm(P.c);
  return res.status == SolveStatus::Optimal && res.objective < -1e-6 * scale;
}

// Elastic feasibility program: min 1't subject to Gx - tg <= h,
// Ex + te+ - te- = g, boxes on x, t >= 0. Its optimum is ~0 iff the original
// constraints are satisfiable.
double min_infeasibility(const ConvexProgram& P, const SolverOptions& opt) {
  const int n = P.num_vars;
  const int p = static_cast<int>(P.E.rows());
  const int m = static_cast<int>(P.G.rows());
  ConvexProgram F = ConvexProgram::make(n + m + 2 * p);
  F.c.segment(n, m + 2 * p).setOnes();
  for (int i = 0; i < n; ++i) {
    F.lo[i] = P.lo[i];
    F.hi[i] = P.hi[i];
  }
  for (int i = 0; i < m + 2 * p; ++i) F.lo[n + i] = 0.0;

  std::vector<Eigen::Triplet<double>> gt, et;
  for (int col = 0; col < P.G.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(P.G, col); it; ++it)
      gt.emplace_back(static_cast<int>(it.row()), col, it.value());
  for (int i = 0; i < m; ++i) gt.emplace_back(i, n + i, -1.0);
  F.G.resize(m, F.num_vars);
  F.G.setFromTriplets(gt.begin(), gt.end());
  F.h = P.h;

  for (int col = 0; col < P.E.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(P.E, col); it; ++it)
      et.emplace_back(static_cast<int>(it.row()), col, it.value());
  for (int i = 0; i < p; ++i) {
    et.emplace_back(i, n + m + i, 1.0);
    et.emplace_back(i, n + m + p + i, -1.0);
  }
  F.E.resize(p, F.num_vars);
  F.E.setFromTriplets(et.begin(), et.end());
  F.g = P.g;

  SolverOptions fopt = opt;
  fopt.tol = std::min(opt.tol, 1e-8);
  Ipm ipm(F, fopt);
  SolveResult res = ipm.run();
  if (res.status != SolveStatus::Optimal) return std::numeric_limits<double>::quiet_NaN();
  return res.objective;
}

}  // namespace

ConvexProgram ConvexProgram::make(int num_vars) {
  ConvexProgram P;
  P.num_vars = num_vars;
  P.Q.resize(num_vars, num_vars);
  P.c = Eigen::VectorXd::Zero(num_vars);
  P.G.resize(0, num_vars);
  P.h.resize(0);
  P.E.resize(0, num_vars);
  P.g.resize(0);
  P.lo = Eigen::VectorXd::Constant(num_vars, -kInf);
  P.hi = Eigen::VectorXd::Constant(num_vars, kInf);
  return P;
}

void ConvexProgram::validate() const {
  if (num_vars < 0) throw std::invalid_argument("negative num_vars");
  if (Q.rows() != num_vars || Q.cols() != num_vars) throw std::invalid_argument("Q dimension");
  if (c.size() != num_vars) throw std::invalid_argument("c dimension");
  if (G.cols() != num_vars || G.rows() != h.size()) throw std::invalid_argument("G/h dimension");
  if (E.cols() != num_vars || E.rows() != g.size()) throw std::invalid_argument("E/g dimension");
  if (lo.size() != num_vars || hi.size() != num_vars) throw std::invalid_argument("box dimension");
  for (int i = 0; i < num_vars; ++i)
    if (lo[i] > hi[i]) throw std::invalid_argument("lo > hi");
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::IterLimit: return "iteration_limit";
  }
  return "?";
}

SolveResult solve(const ConvexProgram& program, const SolverOptions& options) {
  program.validate();
  Ipm ipm(program, options);
  SolveResult res = ipm.run();
  if (res.status == SolveStatus::Optimal) return res;

  // A stalled or diverging IPM cannot by itself distinguish "hard" from
  // "infeasible" or "unbounded"; settle the status with an elastic
  // feasibility solve and a recession-direction certificate.
  double scale = 1.0 + std::max(inf_norm(program.h), inf_norm(program.g));
  double infeas = min_infeasibility(program, options);
  if (std::isfinite(infeas) && infeas > 1e-7 * scale) {
    res.status = SolveStatus::Infeasible;
  } else if (unbounded_certificate(program, options)) {
    res.status = SolveStatus::Unbounded;
  } else if (res.status != SolveStatus::Unbounded) {
    res.status = SolveStatus::IterLimit;
  }
  return res;
}

SolveResult solve(const ConvexProgram& program, double tol) {
  SolverOptions opt;
  opt.tol = tol;
  return solve(program, opt);
}

void dump_program_json(const ConvexProgram& program, std::ostream& out) {
  using nlohmann::json;
  auto coo = [](const Eigen::SparseMatrix<double>& M) {
    json arr = json::array();
    for (int col = 0; col < M.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(M, col); it; ++it)
        arr.push_back({it.row(), it.col(), it.value()});
    return arr;
  };
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  json j;
  j["num_vars"] = program.num_vars;
  j["Q"] = coo(program.Q);
  j["c"] = vec(program.c);
  j["G"] = coo(program.G);
  j["h"] = vec(program.h);
  j["E"] = coo(program.E);
  j["g"] = vec(program.g);
  j["lo"] = vec(program.lo);
  j["hi"] = vec(program.hi);
  out << j.dump(2) << '\n';
}

}  // namespace ppz
