#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pmpsc/qp.hpp"
#include "pmpsc/sets.hpp"
#include "pmpsc/terminal.hpp"

namespace pmpsc {

struct FilterConfig {
  int horizon = 30;
  double cert_tolerance = 0.0;  // <= 0 -> 1e-6 sqrt(m)
  Eigen::MatrixXd W_cert;       // empty -> identity
  double candidate_dedup = 1e-6;
  // Back-off on the tightened sets inside the QP so solver round-off never
  // leaves the plan outside X~ or U~.
  double constraint_margin = 1e-7;
  // Interior point by default: the terminal weights make the QP degenerate,
  // which stalls operator splitting.
  QpSettings qp = [] {
    QpSettings s;
    s.method = QpMethod::InteriorPoint;
    return s;
  }();

  double tolerance(int m) const;
};

// Terminal part of a backup plan: z_N = sum_j weight_j * plan_j.z[offset_j].
struct TerminalWeight {
  double weight;
  int vertex_id;
  int offset;
};

struct FilterState {
  Eigen::VectorXd z;  // nominal state; follows z+ = A z + B v_0 and is never reset
  Eigen::MatrixXd A, B, K;
  HPolytope X_tight, U_tight;
  std::shared_ptr<TerminalSet> terminal;
  FilterConfig config;
  // Feasible plan starting at the current z, together with how its final
  // state continues inside the terminal set.
  std::optional<NominalPlan> backup{};
  std::vector<TerminalWeight> backup_terminal{};
  long k = 0;
  std::vector<NominalPlan> candidates{};  // optimal plans since the last enlargement
  long fallbacks = 0;

  QpSolver solver = QpSolver();
  // Cached constant part of the QP (rebuilt when the terminal set changes).
  std::optional<QuadraticProgram> qp_template{};
  const TerminalSet* template_terminal = nullptr;
  int template_generation = -1;
  Eigen::VectorXd last_solution{}, last_duals{};

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  int horizon() const { return config.horizon; }
  // The applied input the backup would produce at state x.
  Eigen::VectorXd backup_input(const Eigen::VectorXd& x) const;
};

struct FilterResult {
  Eigen::VectorXd u_applied;
  Eigen::VectorXd u_proposed;
  bool certified = false;
  double modification = 0.0;  // sqrt((u_L - u)' W (u_L - u)) at the planned v_0
  bool fallback = false;
  SolveReport solver;
  std::optional<NominalPlan> plan;
  Eigen::VectorXd terminal_lambda;  // QP hull weights; empty when the backup plan was kept
  Eigen::VectorXd z_before;
};

FilterState init_filter(const Eigen::VectorXd& x0, const Eigen::MatrixXd& A,
                        const Eigen::MatrixXd& B, const Eigen::MatrixXd& K,
                        const HPolytope& X_tight, const HPolytope& U_tight,
                        std::shared_ptr<TerminalSet> terminal, const FilterConfig& config);

// Variables [v_0..v_{N-1}, z_1..z_N, lambda]; z_0 is the constant fs.z.
QuadraticProgram build_qp(FilterState& fs, const Eigen::VectorXd& x, const Eigen::VectorXd& u_L);

FilterResult filter_step(FilterState& fs, const Eigen::VectorXd& x, const Eigen::VectorXd& u_L);

// Applies the backup at x and advances it by one step with the terminal
// control law. Throws NoPreviousPlan without a backup.
Eigen::VectorXd fallback_shift(FilterState& fs, const Eigen::VectorXd& x);

// The backup advanced one step (v_1..v_{N-1}, kappa_f) and its new terminal mixture.
std::pair<NominalPlan, std::vector<TerminalWeight>> shift_plan(
    const NominalPlan& plan, const std::vector<TerminalWeight>& mix, const TerminalSet& terminal,
    const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

// Feeds the recorded optimal nominal states to the terminal set. Returns the
// number of vertices added.
int end_episode(FilterState& fs);

std::string log_header(int n, int m);
std::string log_line(long k, const Eigen::VectorXd& x, const Eigen::VectorXd& u_L,
                     const FilterResult& r, double min_constraint_slack);

}  // namespace pmpsc
