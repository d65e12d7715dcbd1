#include "rl4s/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

namespace rl4s {
namespace {

constexpr double kEvaluationResidual = 1e-10;

void check_shape(const HazardMdp& mdp, const QTable& J) {
  if (J.n_states != mdp.n_states || J.n_actions != mdp.n_actions) {
    throw PreconditionError("Q table shape does not match the MDP");
  }
}

void check_shape(const HazardMdp& mdp, const Policy& policy) {
  if (policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions) {
    throw PreconditionError("policy shape does not match the MDP");
  }
}

std::size_t pair_index(const HazardMdp& mdp, StateId s, ActionId a) {
  return static_cast<std::size_t>(s) * static_cast<std::size_t>(mdp.n_actions) +
         static_cast<std::size_t>(a);
}

// Shared sweep driver: `next` maps J_k to J_{k+1}.
template <typename Sweep>
ValueIterationResult iterate(QTable J, const SolverOptions& options, Sweep next, const char* what) {
  if (!(options.tol > 0.0)) throw PreconditionError(std::string(what) + ": tol must be > 0");
  ValueIterationResult result;
  for (int k = 1; k <= options.max_iters; ++k) {
    QTable J_next = next(J);
    const double diff = sup_distance(J_next, J);
    result.differences.push_back(diff);
    J = std::move(J_next);
    if (!std::isfinite(diff)) {
      throw ConvergenceError(std::string(what) + ": iterate became non-finite");
    }
    if (diff <= options.tol) {
      result.q = std::move(J);
      result.iterations = k;
      result.final_residual = diff;
      return result;
    }
  }
  throw ConvergenceError(std::string(what) + ": no convergence within " +
                         std::to_string(options.max_iters) + " iterations");
}

}  // namespace

QTable apply_T_pi(const HazardMdp& mdp, const Policy& policy, const QTable& J) {
  check_shape(mdp, J);
  check_shape(mdp, policy);
  // Policy-averaged next-state values, computed once per sweep.
  std::vector<double> v(static_cast<std::size_t>(mdp.n_states), 0.0);
  for (StateId s = 0; s < mdp.n_states; ++s) {
    for (ActionId a = 0; a < mdp.n_actions; ++a) v[s] += policy.prob(s, a) * J(s, a);
  }
  QTable out = QTable::filled(mdp.n_states, mdp.n_actions, 0.0, J.kind);
  for (StateId s = 0; s < mdp.n_states; ++s) {
    for (ActionId a = 0; a < mdp.n_actions; ++a) {
      if (mdp.is_release(s)) {
        out(s, a) = 1.0;
        continue;
      }
      const auto row = mdp.row(s, a);
      double expected = 0.0;
      for (StateId n = 0; n < mdp.n_states; ++n) expected += row[n] * v[n];
      out(s, a) = (1.0 - mdp.h(s, a)) * expected;
    }
  }
  return out;
}

QTable apply_T(const HazardMdp& mdp, const QTable& J) {
  check_shape(mdp, J);
  std::vector<double> v(static_cast<std::size_t>(mdp.n_states));
  for (StateId s = 0; s < mdp.n_states; ++s) v[s] = J.row_max(s);
  QTable out = QTable::filled(mdp.n_states, mdp.n_actions, 0.0, J.kind);
  for (StateId s = 0; s < mdp.n_states; ++s) {
    for (ActionId a = 0; a < mdp.n_actions; ++a) {
      if (mdp.is_release(s)) {
        out(s, a) = 1.0;
        continue;
      }
      const auto row = mdp.row(s, a);
      double expected = 0.0;
      for (StateId n = 0; n < mdp.n_states; ++n) expected += row[n] * v[n];
      out(s, a) = (1.0 - mdp.h(s, a)) * expected;
    }
  }
  return out;
}

ValueIterationResult survival_value_iteration(const HazardMdp& mdp, const SolverOptions& options,
                                              const QTable* initial) {
  QTable start = initial != nullptr ? *initial : QTable::filled(mdp.n_states, mdp.n_actions, 0.0);
  check_shape(mdp, start);
  return iterate(std::move(start), options, [&](const QTable& J) { return apply_T(mdp, J); },
                 "survival_value_iteration");
}

int value_iteration_bound(double tol, double h_min) {
  if (!(tol > 0.0) || !(h_min > 0.0)) throw PreconditionError("bound needs tol > 0 and h_min > 0");
  if (h_min >= 1.0 || tol >= 1.0) return 1;
  return static_cast<int>(std::ceil(std::log(tol) / std::log(1.0 - h_min)));
}

QTable survival_policy_evaluation(const HazardMdp& mdp, const Policy& policy) {
  check_shape(mdp, policy);
  const auto n = static_cast<Eigen::Index>(mdp.n_states) * mdp.n_actions;
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (StateId s = 0; s < mdp.n_states; ++s) {
    for (ActionId a = 0; a < mdp.n_actions; ++a) {
      const auto i = static_cast<Eigen::Index>(pair_index(mdp, s, a));
      if (mdp.is_release(s)) {
        b(i) = 1.0;
        continue;
      }
      const double survive = 1.0 - mdp.h(s, a);
      if (survive == 0.0) continue;
      const auto row = mdp.row(s, a);
      for (StateId next = 0; next < mdp.n_states; ++next) {
        if (row[next] == 0.0) continue;
        for (ActionId a2 = 0; a2 < mdp.n_actions; ++a2) {
          const double w = policy.prob(next, a2);
          if (w == 0.0) continue;
          M(i, static_cast<Eigen::Index>(pair_index(mdp, next, a2))) -= survive * row[next] * w;
        }
      }
    }
  }
  const Eigen::VectorXd x = M.partialPivLu().solve(b);
  QTable q = QTable::filled(mdp.n_states, mdp.n_actions, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) q.values[static_cast<std::size_t>(i)] = x(i);

  const double residual = sup_distance(apply_T_pi(mdp, policy, q), q);
  if (!(residual <= kEvaluationResidual)) {
    throw ConvergenceError("survival_policy_evaluation: singular or ill-conditioned system (residual " +
                           std::to_string(residual) + ")");
  }
  return q;
}

std::vector<double> survival_state_values(const HazardMdp& mdp, const Policy& policy) {
  check_shape(mdp, policy);
  const auto n = static_cast<Eigen::Index>(mdp.n_states);
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (StateId s = 0; s < mdp.n_states; ++s) {
    if (mdp.is_release(s)) {
      b(s) = 1.0;
      continue;
    }
    for (ActionId a = 0; a < mdp.n_actions; ++a) {
      const double w = policy.prob(s, a) * (1.0 - mdp.h(s, a));
      if (w == 0.0) continue;
      const auto row = mdp.row(s, a);
      for (StateId next = 0; next < mdp.n_states; ++next) M(s, next) -= w * row[next];
    }
  }
  const Eigen::VectorXd x = M.partialPivLu().solve(b);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (Eigen::Index s = 0; s < n; ++s) {
    if (!std::isfinite(x(s))) throw ConvergenceError("survival_state_values: singular system");
    v[static_cast<std::size_t>(s)] = x(s);
  }
  return v;
}

double exact_survival_probability(const HazardMdp& mdp, const Policy& policy, StateId s0) {
  if (s0 < 0 || s0 >= mdp.n_states) throw PreconditionError("start state out of range");
  return survival_state_values(mdp, policy)[s0];
}

double expected_survival(const HazardMdp& mdp, const Policy& policy, std::span<const double> start) {
  if (start.size() != static_cast<std::size_t>(mdp.n_states)) {
    throw PreconditionError("start distribution length does not match the MDP");
  }
  const auto v = survival_state_values(mdp, policy);
  double total = 0.0;
  for (std::size_t s = 0; s < v.size(); ++s) total += start[s] * v[s];
  return total;
}

Policy greedy_policy(const QTable& q) {
  std::vector<ActionId> actions(static_cast<std::size_t>(q.n_states));
  for (StateId s = 0; s < q.n_states; ++s) {
    const auto row = q.row(s);
    // max_element returns the first maximizer.
    actions[s] = static_cast<ActionId>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return Policy::deterministic(std::move(actions), q.n_actions);
}

ValueIterationResult baseline_value_iteration(const HazardMdp& mdp, double gamma,
                                              const TerminalRewards& rewards,
                                              const SolverOptions& options) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw PreconditionError("baseline: gamma must be in (0,1)");
  const StateId death = mdp.death_state();
  auto sweep = [&](const QTable& J) {
    QTable out = QTable::filled(mdp.n_states, mdp.n_actions, 0.0, ValueKind::kReturn);
    for (StateId s = 0; s < mdp.n_states; ++s) {
      if (mdp.is_absorbing(s)) continue;
      for (ActionId a = 0; a < mdp.n_actions; ++a) {
        const double h = mdp.h(s, a);
        const auto row = mdp.row(s, a);
        double survive_part = 0.0;
        for (StateId next = 0; next < mdp.n_states; ++next) {
          if (row[next] == 0.0) continue;
          double value = 0.0;
          if (mdp.is_release(next)) {
            value = rewards.release;
          } else if (mdp.is_death(next)) {
            value = rewards.death;
          } else {
            value = gamma * J.row_max(next);
          }
          survive_part += row[next] * value;
        }
        const double die_part = death >= 0 ? rewards.death : 0.0;
        out(s, a) = h * die_part + (1.0 - h) * survive_part;
      }
    }
    return out;
  };
  return iterate(QTable::filled(mdp.n_states, mdp.n_actions, 0.0, ValueKind::kReturn), options, sweep,
                 "baseline_value_iteration");
}

EnumerationResult enumerate_deterministic_policies(const HazardMdp& mdp, std::size_t max_policies) {
  const auto transient = mdp.transient_states();
  std::size_t total = 1;
  for (std::size_t i = 0; i < transient.size(); ++i) {
    if (total > max_policies / static_cast<std::size_t>(mdp.n_actions)) {
      throw PreconditionError("enumeration: too many deterministic policies");
    }
    total *= static_cast<std::size_t>(mdp.n_actions);
  }
  std::vector<ActionId> actions(static_cast<std::size_t>(mdp.n_states), 0);
  std::vector<ActionId> best_actions = actions;
  std::vector<double> best_values(static_cast<std::size_t>(mdp.n_states),
                                  -std::numeric_limits<double>::infinity());
  double best_total = -std::numeric_limits<double>::infinity();
  std::vector<ActionId> digits(transient.size(), 0);
  for (std::size_t k = 0; k < total; ++k) {
    for (std::size_t i = 0; i < transient.size(); ++i) actions[transient[i]] = digits[i];
    const auto v = survival_state_values(mdp, Policy::deterministic(actions, mdp.n_actions));
    double sum = 0.0;
    for (std::size_t s = 0; s < v.size(); ++s) {
      best_values[s] = std::max(best_values[s], v[s]);
      sum += v[s];
    }
    if (sum > best_total) {
      best_total = sum;
      best_actions = actions;
    }
    // Odometer increment over the transient states' actions.
    for (std::size_t i = 0; i < digits.size(); ++i) {
      if (++digits[i] < mdp.n_actions) break;
      digits[i] = 0;
    }
  }
  return {Policy::deterministic(best_actions, mdp.n_actions), best_values, total};
}

}  // namespace rl4s
