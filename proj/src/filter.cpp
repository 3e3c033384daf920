#include "pmpsc/filter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "pmpsc/errors.hpp"

namespace pmpsc {

namespace {

constexpr double kPlanSlackTol = 1e-6;

Eigen::MatrixXd cert_weight(const FilterState& fs) {
  return fs.config.W_cert.size() ? fs.config.W_cert : Eigen::MatrixXd::Identity(fs.m(), fs.m());
}

const QuadraticProgram& qp_template(FilterState& fs) {
  const TerminalSet& ts = *fs.terminal;
  if (fs.qp_template && fs.template_terminal == &ts && fs.template_generation == ts.generation())
    return *fs.qp_template;
  const int n = fs.n(), m = fs.m(), N = fs.horizon(), V = ts.size();
  const int nv = m * N, nz = n * N, nx = nv + nz + V;
  auto iv = [&](int i) { return m * i; };
  auto iz = [&](int i) { return nv + n * (i - 1); };  // z_i, i >= 1
  const int il = nv + nz;

  QuadraticProgram qp;
  const Eigen::MatrixXd W = cert_weight(fs);
  std::vector<Eigen::Triplet<double>> t;
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      if (W(r, c) != 0.0) t.emplace_back(r, c, 2.0 * W(r, c));
  qp.P.resize(nx, nx);
  qp.P.setFromTriplets(t.begin(), t.end());

  // Dynamics, terminal hull and simplex rows.
  t.clear();
  const int me = nz + n + 1;
  for (int i = 0; i < N; ++i) {
    const int row = n * i;
    for (int r = 0; r < n; ++r) {
      t.emplace_back(row + r, iz(i + 1) + r, 1.0);
      for (int c = 0; c < m; ++c)
        if (fs.B(r, c) != 0.0) t.emplace_back(row + r, iv(i) + c, -fs.B(r, c));
      if (i > 0)
        for (int c = 0; c < n; ++c)
          if (fs.A(r, c) != 0.0) t.emplace_back(row + r, iz(i) + c, -fs.A(r, c));
    }
  }
  const Eigen::MatrixXd Vm = ts.point_matrix();
  for (int r = 0; r < n; ++r) {
    t.emplace_back(nz + r, iz(N) + r, 1.0);
    for (int j = 0; j < V; ++j)
      if (Vm(r, j) != 0.0) t.emplace_back(nz + r, il + j, -Vm(r, j));
  }
  for (int j = 0; j < V; ++j) t.emplace_back(nz + n, il + j, 1.0);
  qp.A_eq.resize(me, nx);
  qp.A_eq.setFromTriplets(t.begin(), t.end());
  qp.b_eq = Eigen::VectorXd::Zero(me);
  qp.b_eq[me - 1] = 1.0;

  // Tightened state constraints on z_1..z_{N-1}, inputs on v_0..v_{N-1}, lambda >= 0.
  t.clear();
  const auto& Hx = fs.X_tight.H();
  const auto& Hu = fs.U_tight.H();
  const int fx = fs.X_tight.num_facets(), fu = fs.U_tight.num_facets();
  const int mi = fx * (N - 1) + fu * N + V;
  qp.b_in.resize(mi);
  int row = 0;
  for (int i = 1; i < N; ++i, row += fx) {
    for (int r = 0; r < fx; ++r)
      for (int c = 0; c < n; ++c)
        if (Hx(r, c) != 0.0) t.emplace_back(row + r, iz(i) + c, Hx(r, c));
    qp.b_in.segment(row, fx) = fs.X_tight.h().array() - fs.config.constraint_margin;
  }
  for (int i = 0; i < N; ++i, row += fu) {
    for (int r = 0; r < fu; ++r)
      for (int c = 0; c < m; ++c)
        if (Hu(r, c) != 0.0) t.emplace_back(row + r, iv(i) + c, Hu(r, c));
    qp.b_in.segment(row, fu) = fs.U_tight.h().array() - fs.config.constraint_margin;
  }
  for (int j = 0; j < V; ++j) t.emplace_back(row + j, il + j, -1.0);
  qp.b_in.segment(row, V).setZero();
  qp.A_in.resize(mi, nx);
  qp.A_in.setFromTriplets(t.begin(), t.end());
  qp.q = Eigen::VectorXd::Zero(nx);

  fs.qp_template = std::move(qp);
  fs.template_terminal = &ts;
  fs.template_generation = ts.generation();
  fs.last_solution.resize(0);
  fs.last_duals.resize(0);
  return *fs.qp_template;
}

// Rolls v forward from z0 so the plan satisfies the nominal dynamics exactly.
NominalPlan rollout(const FilterState& fs, const Eigen::VectorXd& sol) {
  const int n = fs.n(), m = fs.m(), N = fs.horizon();
  NominalPlan p{Eigen::MatrixXd(m, N), Eigen::MatrixXd(n, N + 1)};
  p.z.col(0) = fs.z;
  for (int i = 0; i < N; ++i) {
    p.v.col(i) = sol.segment(m * i, m);
    p.z.col(i + 1) = fs.A * p.z.col(i) + fs.B * p.v.col(i);
  }
  return p;
}

std::vector<TerminalWeight> decompose(const TerminalSet& ts, const Eigen::VectorXd& point,
                                      double scale) {
  std::vector<TerminalWeight> out;
  if (point.cwiseAbs().maxCoeff() <= 1e-14) {
    out.push_back({scale, 0, 0});
    return out;
  }
  const auto w = hull_weights(ts.points(), point, 1e-6);
  if (!w) return out;
  for (int j = 0; j < ts.size(); ++j)
    if ((*w)[j] > 1e-12) out.push_back({scale * (*w)[j], ts.vertices()[j].id, 0});
  return out;
}

}  // namespace

double FilterConfig::tolerance(int m) const {
  return cert_tolerance > 0 ? cert_tolerance : 1e-6 * std::sqrt(static_cast<double>(m));
}

Eigen::VectorXd FilterState::backup_input(const Eigen::VectorXd& x) const {
  if (!backup) throw NoPreviousPlan("filter has no backup plan");
  return backup->v.col(0) + K * (x - z);
}

QuadraticProgram build_qp(FilterState& fs, const Eigen::VectorXd& x, const Eigen::VectorXd& u_L) {
  PMPSC_THROW_UNLESS(x.size() == fs.n() && u_L.size() == fs.m(), DimensionMismatch,
                     "filter: state/input dimension");
  QuadraticProgram qp = qp_template(fs);
  const Eigen::MatrixXd W = cert_weight(fs);
  const Eigen::VectorXd c = u_L - fs.K * (x - fs.z);
  qp.q.head(fs.m()) = -2.0 * W * c;
  qp.constant = c.dot(W * c);
  qp.b_eq.head(fs.n()) = fs.A * fs.z;
  return qp;
}

std::pair<NominalPlan, std::vector<TerminalWeight>> shift_plan(
    const NominalPlan& plan, const std::vector<TerminalWeight>& mix, const TerminalSet& ts,
    const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const int N = plan.horizon();
  const auto n = plan.z.rows(), m = plan.v.rows();
  // kappa_f: the same convex combination of the stored vertex plans.
  Eigen::VectorXd kappa = Eigen::VectorXd::Zero(m);
  std::map<std::pair<int, int>, double> next;
  bool lost = false;
  for (const auto& e : mix) {
    const TerminalVertex* v = ts.find(e.vertex_id);
    if (!v) {
      lost = true;
      break;
    }
    if (e.vertex_id == 0) {
      next[{0, 0}] += e.weight;
      continue;
    }
    kappa += e.weight * v->plan.v.col(e.offset);
    if (e.offset + 1 < N) {
      next[{e.vertex_id, e.offset + 1}] += e.weight;
    } else {
      // The stored plan ends inside the hull of earlier vertices.
      const auto parts = decompose(ts, v->plan.z.col(N), e.weight);
      if (parts.empty()) {
        lost = true;
        break;
      }
      for (const auto& p : parts) next[{p.vertex_id, p.offset}] += p.weight;
    }
  }
  NominalPlan out{Eigen::MatrixXd(m, N), Eigen::MatrixXd(n, N + 1)};
  out.v.leftCols(N - 1) = plan.v.rightCols(N - 1);
  out.z.leftCols(N) = plan.z.rightCols(N);
  std::vector<TerminalWeight> mix_out;
  if (lost) kappa.setZero();
  out.v.col(N - 1) = kappa;
  out.z.col(N) = A * plan.z.col(N) + B * kappa;
  if (!lost)
    for (const auto& [key, w] : next) mix_out.push_back({w, key.first, key.second});
  return {std::move(out), std::move(mix_out)};
}

Eigen::VectorXd fallback_shift(FilterState& fs, const Eigen::VectorXd& x) {
  if (!fs.backup) throw NoPreviousPlan("fallback requested before a feasible plan exists");
  const Eigen::VectorXd u = fs.backup_input(x);
  auto [plan, mix] = shift_plan(*fs.backup, fs.backup_terminal, *fs.terminal, fs.A, fs.B);
  fs.z = fs.A * fs.z + fs.B * fs.backup->v.col(0);
  fs.backup = std::move(plan);
  fs.backup_terminal = std::move(mix);
  ++fs.k;
  ++fs.fallbacks;
  return u;
}

FilterResult filter_step(FilterState& fs, const Eigen::VectorXd& x, const Eigen::VectorXd& u_L) {
  FilterResult res;
  res.u_proposed = u_L;
  res.z_before = fs.z;
  const QuadraticProgram qp = build_qp(fs, x, u_L);
  const int n = fs.n(), m = fs.m(), N = fs.horizon();
  const int V = fs.terminal->size();
  const int il = m * N + n * N;

  if (fs.config.qp.warm_start) {
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(qp.num_vars());
    if (fs.backup) {
      for (int i = 0; i < N; ++i) x0.segment(m * i, m) = fs.backup->v.col(i);
      for (int i = 1; i <= N; ++i) x0.segment(m * N + n * (i - 1), n) = fs.backup->z.col(i);
    }
    if (fs.last_solution.size() == qp.num_vars())
      x0.tail(V) = fs.last_solution.tail(V);
    else
      x0[il] = 1.0;
    fs.solver.warm_start(x0, fs.last_duals);
  }
  res.solver = fs.solver.solve(qp);

  bool ok = res.solver.status == QpStatus::Optimal;
  NominalPlan plan;
  Eigen::VectorXd lambda;
  if (ok) {
    plan = rollout(fs, res.solver.x_opt);
    lambda = res.solver.x_opt.tail(V).cwiseMax(0.0);
    const double sum = lambda.sum();
    ok = sum > 0 && plan.min_slack(fs.X_tight, fs.U_tight) >= -kPlanSlackTol &&
         (plan.z.col(N) - fs.terminal->point_matrix() * lambda / sum).cwiseAbs().maxCoeff() <=
             kPlanSlackTol * (1.0 + plan.z.cwiseAbs().maxCoeff());
    if (ok) lambda = caratheodory_reduce(fs.terminal->points(), lambda / sum);
  }

  const Eigen::MatrixXd W = cert_weight(fs);
  const Eigen::VectorXd c = u_L - fs.K * (x - fs.z);
  if (ok) {
    fs.last_solution = res.solver.x_opt;
    fs.last_duals.resize(res.solver.y_eq.size() + res.solver.y_in.size());
    fs.last_duals << res.solver.y_eq, res.solver.y_in;
    std::vector<TerminalWeight> mix;
    for (int j = 0; j < V; ++j)
      if (lambda[j] > 0) mix.push_back({lambda[j], fs.terminal->vertices()[j].id, 0});
    Eigen::VectorXd d = c - plan.v.col(0);
    // The backup is a feasible point of the same problem. When it scores at
    // least as well it is kept: the interior-point iterate only reaches the
    // optimum to about sqrt(tol), which matters when u_L is already safe.
    if (fs.backup) {
      const Eigen::VectorXd db = c - fs.backup->v.col(0);
      if (db.dot(W * db) <= d.dot(W * d)) {
        plan = *fs.backup;
        mix = fs.backup_terminal;
        d = db;
        lambda.resize(0);
      }
    }
    res.modification = std::sqrt(std::max(0.0, d.dot(W * d)));
    res.u_applied = plan.v.col(0) + fs.K * (x - fs.z);
    res.certified = res.modification <= fs.config.tolerance(m);
    res.terminal_lambda = lambda;
    fs.candidates.push_back(plan);
    auto [next, next_mix] = shift_plan(plan, mix, *fs.terminal, fs.A, fs.B);
    fs.z = fs.A * fs.z + fs.B * plan.v.col(0);
    fs.backup = std::move(next);
    fs.backup_terminal = std::move(next_mix);
    res.plan = std::move(plan);
    ++fs.k;
    return res;
  }

  res.fallback = true;
  fs.last_duals.resize(0);
  if (fs.backup) {
    res.plan = *fs.backup;
    const Eigen::VectorXd d = c - fs.backup->v.col(0);
    res.modification = std::sqrt(std::max(0.0, d.dot(W * d)));
    res.u_applied = fallback_shift(fs, x);
  } else {
    // No certificate at all (cannot happen after a successful init).
    const Eigen::VectorXd d = c;
    res.modification = std::sqrt(std::max(0.0, d.dot(W * d)));
    res.u_applied = fs.K * (x - fs.z);
    fs.z = fs.A * fs.z;
    ++fs.k;
    ++fs.fallbacks;
  }
  res.certified = res.modification <= fs.config.tolerance(m);
  return res;
}

FilterState init_filter(const Eigen::VectorXd& x0, const Eigen::MatrixXd& A,
                        const Eigen::MatrixXd& B, const Eigen::MatrixXd& K,
                        const HPolytope& X_tight, const HPolytope& U_tight,
                        std::shared_ptr<TerminalSet> terminal, const FilterConfig& config) {
  const auto n = A.rows(), m = B.cols();
  PMPSC_THROW_UNLESS(A.cols() == n && B.rows() == n && K.rows() == m && K.cols() == n &&
                         x0.size() == n && X_tight.dim() == n && U_tight.dim() == m,
                     DimensionMismatch, "init_filter: dimensions");
  PMPSC_THROW_UNLESS(config.horizon >= 1, InvalidArgument, "horizon must be >= 1");
  PMPSC_THROW_UNLESS(terminal && terminal->n() == n && terminal->m() == m &&
                         terminal->horizon() == config.horizon,
                     InvalidArgument, "terminal set does not match the filter");
  if (config.W_cert.size()) {
    PMPSC_THROW_UNLESS(config.W_cert.rows() == m && config.W_cert.cols() == m, DimensionMismatch,
                       "W_cert shape");
    PMPSC_THROW_UNLESS(config.W_cert.isApprox(config.W_cert.transpose()) &&
                           config.W_cert.llt().info() == Eigen::Success,
                       InvalidArgument, "W_cert must be positive definite");
  }
  if (X_tight.min_slack(x0) < -1e-9) throw InitiallyInfeasible("x0 violates the tightened state constraints");
  FilterState fs{.z = x0,
                 .A = A,
                 .B = B,
                 .K = K,
                 .X_tight = X_tight,
                 .U_tight = U_tight,
                 .terminal = std::move(terminal),
                 .config = config,
                 .solver = QpSolver(config.qp)};
  const auto r = filter_step(fs, x0, Eigen::VectorXd::Zero(m));
  if (r.fallback) throw InitiallyInfeasible("no feasible nominal plan from x0 (" + to_string(r.solver.status) + ")");
  // Undo the probing step: the backup is the plan from x0 itself.
  fs.backup = *r.plan;
  fs.backup_terminal.clear();
  for (int j = 0; j < r.terminal_lambda.size(); ++j)
    if (r.terminal_lambda[j] > 0)
      fs.backup_terminal.push_back({r.terminal_lambda[j], fs.terminal->vertices()[j].id, 0});
  fs.z = x0;
  fs.k = 0;
  fs.candidates.clear();
  return fs;
}

int end_episode(FilterState& fs) {
  std::vector<NominalPlan> unique;
  for (auto& p : fs.candidates) {
    bool dup = false;
    for (const auto& q : unique)
      if ((q.z.col(0) - p.z.col(0)).norm() <= fs.config.candidate_dedup) {
        dup = true;
        break;
      }
    if (!dup) unique.push_back(std::move(p));
  }
  fs.candidates.clear();
  int added = 0;
  try {
    for (const auto& p : unique) added += fs.terminal->enlarge(p.z.col(0), p);
  } catch (const CapReached&) {
  }
  // Pruning can drop vertices the backup's terminal part refers to.
  for (const auto& e : fs.backup_terminal)
    if (!fs.terminal->find(e.vertex_id)) {
      fs.backup.reset();
      fs.backup_terminal.clear();
      break;
    }
  return added;
}

std::string log_header(int n, int m) {
  std::ostringstream os;
  os << "k";
  for (int i = 0; i < n; ++i) os << ",x" << i + 1;
  for (int i = 0; i < m; ++i) os << ",uL" << i + 1;
  for (int i = 0; i < m; ++i) os << ",u" << i + 1;
  os << ",certified,cost,solver_status,min_constraint_slack";
  return os.str();
}

std::string log_line(long k, const Eigen::VectorXd& x, const Eigen::VectorXd& u_L,
                     const FilterResult& r, double min_constraint_slack) {
  std::ostringstream os;
  os.precision(10);
  os << k;
  for (double v : x) os << ',' << v;
  for (double v : u_L) os << ',' << v;
  for (double v : r.u_applied) os << ',' << v;
  os << ',' << (r.certified ? 1 : 0) << ',' << r.modification * r.modification << ','
     << (r.fallback ? "fallback_" : "") << to_string(r.solver.status) << ',' << min_constraint_slack;
  return os.str();
}

}  // namespace pmpsc
