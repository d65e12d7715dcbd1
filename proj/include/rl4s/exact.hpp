#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rl4s/mdp.hpp"

namespace rl4s {

/// One application of the policy survival operator:
/// J'(s,a) = 1 on release rows, else (1 - h(s,a)) E_{s'~p, a'~pi}[J(s',a')].
QTable apply_T_pi(const HazardMdp& mdp, const Policy& policy, const QTable& J);

/// Optimality survival operator; the policy expectation becomes max over a'.
QTable apply_T(const HazardMdp& mdp, const QTable& J);

struct SolverOptions {
  double tol = 1e-10;
  int max_iters = 1'000'000;
};

struct ValueIterationResult {
  QTable q;
  int iterations = 0;
  /// Sup-norm of the last successive difference.
  double final_residual = 0.0;
  /// ||J_{k+1} - J_k|| for every sweep, in order.
  std::vector<double> differences;
};

/// Iterates apply_T from `initial` (J = 0 when null) until successive
/// iterates differ by at most tol. Throws ConvergenceError past max_iters.
ValueIterationResult survival_value_iteration(const HazardMdp& mdp, const SolverOptions& options = {},
                                              const QTable* initial = nullptr);

/// Worst-case sweep count from J = 0: ceil(log(tol) / log(1 - h_min)).
int value_iteration_bound(double tol, double h_min);

/// Exact Q_S^pi from a dense LU solve of Q = T_pi Q over all (s,a) pairs.
QTable survival_policy_evaluation(const HazardMdp& mdp, const Policy& policy);

/// State survival probabilities V_S^pi from the |S| x |S| state-value system.
/// This is a separate formulation from survival_policy_evaluation and is used
/// as the oracle throughout the tests.
std::vector<double> survival_state_values(const HazardMdp& mdp, const Policy& policy);

/// V_S^pi(s0).
double exact_survival_probability(const HazardMdp& mdp, const Policy& policy, StateId s0);

/// Start-distribution weighted survival probability.
double expected_survival(const HazardMdp& mdp, const Policy& policy, std::span<const double> start);

/// Deterministic argmax policy; ties go to the lowest action index.
Policy greedy_policy(const QTable& q);

struct TerminalRewards {
  double release = 1.0;
  double death = -1.0;
};

/// Optimal Q of the terminal-reward MDP: reward is credited on the
/// transition entering an absorbing state, absorbing states are worth 0,
/// and every step is discounted by gamma.
ValueIterationResult baseline_value_iteration(const HazardMdp& mdp, double gamma,
                                              const TerminalRewards& rewards = {},
                                              const SolverOptions& options = {});

struct EnumerationResult {
  /// Deterministic policy maximizing the summed survival over states.
  Policy best;
  /// State-wise maximum of V_S^pi over all enumerated policies.
  std::vector<double> best_values;
  std::size_t n_policies = 0;
};

/// Brute force over every deterministic stationary policy (absorbing states
/// fixed to action 0). Throws PreconditionError if more than `max_policies`.
EnumerationResult enumerate_deterministic_policies(const HazardMdp& mdp,
                                                   std::size_t max_policies = 1'000'000);

}  // namespace rl4s
