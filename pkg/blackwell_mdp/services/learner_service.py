import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from blackwell_mdp.config import settings
from blackwell_mdp.core.exceptions import InvalidParameterError
from blackwell_mdp.core.logger import get_logger
from blackwell_mdp.schemas.learner import (
    ExperimentRow,
    ExperimentTable,
    LearnerConfig,
    LearnerTrace,
    QUpdate,
    RunRecord,
)
from blackwell_mdp.schemas.mdp import Mdp, Policy
from blackwell_mdp.services.blackwell_service import BlackwellService, value_tolerance
from blackwell_mdp.services.mdp_service import MdpService
from blackwell_mdp.services.regret_service import RegretService

logger = get_logger(__name__)

STEP_BUDGET = "step_budget"
UNIFORM_BLOCK = 65536


def default_m(config: LearnerConfig, n_states: int, n_actions: int) -> int:
    """Heuristic samples-per-attempt: ceil(ln(3|S||A|/delta) / (2 eps^2 (1-gamma)^2))."""
    numerator = math.log(3 * n_states * n_actions / config.delta)
    return max(1, math.ceil(numerator / (2 * config.epsilon ** 2 * (1 - config.gamma) ** 2)))


class DelayedQLearner:
    """Delayed Q-learning on a simulated MDP.

    Q starts at r_max/(1-gamma). Each (s,a) batches m targets; an attempt
    lowers Q to mean + epsilon when that is at least 2 epsilon below the
    current estimate. A failed attempt with no successful update anywhere since
    the pair's previous attempt clears its learn flag. A later visit after some
    other update sets the flag again without taking a sample; the next visit
    starts a new batch.
    """

    def __init__(self, mdp: Mdp, config: LearnerConfig, model: Optional[MdpService] = None):
        self.mdp = mdp
        self.config = config
        self.model = model or MdpService(mdp)
        n = self.model.n_states
        self.m = config.m or default_m(config, n, len(mdp.actions))
        self.rng = np.random.default_rng(config.seed)
        self._uniform = np.empty(0)
        self._cursor = 0

        self.available = [list(actions) for actions in self.model.available]
        initial = mdp.r_max / (1.0 - config.gamma)
        k = len(mdp.actions)
        self.q = [[initial] * k for _ in range(n)]
        self.accumulator = [[0.0] * k for _ in range(n)]
        self.count = [[0] * k for _ in range(n)]
        self.attempt_time = [[0] * k for _ in range(n)]
        self.learn = [[True] * k for _ in range(n)]
        self.visits = [[0] * k for _ in range(n)]
        self.last_update = 0
        self.updates: List[QUpdate] = []

        self.successors = {}
        for (i, a), outcomes in self.model.outcomes.items():
            cumulative = np.cumsum([p for _, p, _ in outcomes]).tolist()
            self.successors[(i, a)] = ([j for j, _, _ in outcomes], cumulative, [r for _, _, r in outcomes])
        self.self_loop = {
            key: len(set(states)) == 1 and states[0] == key[0] for key, (states, _, _) in self.successors.items()
        }

    def _uniform_draw(self) -> float:
        if self._cursor >= self._uniform.size:
            self._uniform = self.rng.random(UNIFORM_BLOCK)
            self._cursor = 0
        u = self._uniform[self._cursor]
        self._cursor += 1
        return float(u)

    def _start_state(self) -> int:
        cumulative = np.cumsum(self.model.initial)
        return int(min(np.searchsorted(cumulative, self._uniform_draw(), side="right"), len(cumulative) - 1))

    def _sample(self, state: int, action: int) -> Tuple[int, float]:
        states, cumulative, rewards = self.successors[(state, action)]
        u = self._uniform_draw()
        for j, bound in enumerate(cumulative):
            if u < bound:
                return states[j], rewards[j]
        return states[-1], rewards[-1]

    def greedy(self, state: int) -> int:
        """Greedy action; ties go to the lowest action index."""
        row = self.q[state]
        best = self.available[state][0]
        for a in self.available[state][1:]:
            if row[a] > row[best]:
                best = a
        return best

    def _max_q(self, state: int) -> float:
        row = self.q[state]
        return max(row[a] for a in self.available[state])

    def _stuck(self, state: int, action: int) -> bool:
        if self.learn[state][action] or not self.self_loop[(state, action)]:
            return False
        return self.attempt_time[state][action] >= self.last_update

    def run(self) -> LearnerTrace:
        gamma = self.config.gamma
        state = self._start_state()
        terminated_by = STEP_BUDGET
        steps = 0

        for t in range(1, self.config.max_steps + 1):
            action = self.greedy(state)
            if self._stuck(state, action):
                terminated_by = f"converged_at_{self.mdp.states[state]}"
                break

            successor, reward = self._sample(state, action)
            self.visits[state][action] += 1
            steps = t
            if self.learn[state][action]:
                self.count[state][action] += 1
                self.accumulator[state][action] += reward + gamma * self._max_q(successor)
                if self.count[state][action] == self.m:
                    self._attempt(t, state, action)
            elif self.attempt_time[state][action] < self.last_update:
                self.learn[state][action] = True
            state = successor

        if terminated_by == STEP_BUDGET:
            logger.warning(f"Delayed Q-learning exhausted its budget of {self.config.max_steps} steps")
        else:
            logger.info(f"Delayed Q-learning stopped after {steps} steps ({terminated_by})")
        return self._trace(steps, terminated_by, state)

    def _attempt(self, t: int, state: int, action: int) -> None:
        epsilon, m = self.config.epsilon, self.m
        target = self.accumulator[state][action] / m
        before = self.q[state][action]
        if before - target >= 2 * epsilon:
            self.q[state][action] = target + epsilon
            self.last_update = t
            self.updates.append(QUpdate(
                step=t,
                state=self.mdp.states[state],
                action=self.mdp.actions[action],
                before=before,
                after=target + epsilon
            ))
        elif self.attempt_time[state][action] >= self.last_update:
            self.learn[state][action] = False
        self.attempt_time[state][action] = t
        self.accumulator[state][action] = 0.0
        self.count[state][action] = 0

    def greedy_policy(self) -> Policy:
        return self.model.policy_from_indices([self.greedy(i) for i in range(self.model.n_states)])

    def empirical_gap(self, state: int) -> Optional[float]:
        """Greedy Q-value minus the runner-up at `state`."""
        values = sorted((self.q[state][a] for a in self.available[state]), reverse=True)
        return values[0] - values[1] if len(values) > 1 else None

    def _trace(self, steps: int, terminated_by: str, state: int) -> LearnerTrace:
        states, actions = self.mdp.states, self.mdp.actions
        gap_state = gap_index(self.model, self.config.gap_state)
        gap = self.empirical_gap(gap_state)
        return LearnerTrace(
            steps_taken=steps,
            terminated_by=terminated_by,
            terminal_state=None if terminated_by == STEP_BUDGET else states[state],
            greedy_policy=self.greedy_policy(),
            m_used=self.m,
            q_final={states[i]: {actions[a]: self.q[i][a] for a in self.available[i]} for i in range(len(states))},
            visit_counts={
                states[i]: {actions[a]: self.visits[i][a] for a in self.available[i]} for i in range(len(states))
            },
            updates=self.updates,
            empirical_policy_gap_at=None if gap is None else (states[gap_state], gap)
        )


def gap_index(model: MdpService, gap_state: Optional[str]) -> int:
    """Designated state: the configured one, else the most likely initial state."""
    if gap_state is None:
        return int(np.argmax(model.initial))
    if gap_state not in model.state_index:
        raise InvalidParameterError(f"unknown gap state {gap_state!r}")
    return model.state_index[gap_state]


def run_delayed_q(mdp: Mdp, config: LearnerConfig) -> LearnerTrace:
    """Run delayed Q-learning until the termination rule or the step budget."""
    return DelayedQLearner(mdp, config).run()


class LearnerService:
    """Service for learner experiments classified by exact oracles."""

    def __init__(self, mdp: Mdp, regret: Optional[RegretService] = None, workers: Optional[int] = None):
        self.mdp = mdp
        self.workers = workers or settings.WORKERS
        self.regret = regret or RegretService(mdp)
        self.blackwell = self.regret.blackwell
        self.solver = self.blackwell.solver
        self.model = self.solver.model
        self._max_gain: Optional[np.ndarray] = None

    def max_gain(self) -> np.ndarray:
        if self._max_gain is None:
            gains = np.array([self.solver.gain_bias_arrays(row)[0] for row in self.blackwell.policy_table()])
            self._max_gain = gains.max(axis=0)
        return self._max_gain

    def is_gain_optimal(self, policy: Policy) -> bool:
        gain, _, _ = self.solver.gain_bias_arrays(self.model.policy_indices(policy))
        best = self.max_gain()
        return bool(np.all(gain >= best - value_tolerance(best)))

    def _record(self, run: int, config: LearnerConfig) -> Tuple[RunRecord, int]:
        learner = DelayedQLearner(self.mdp, config, self.model)
        trace = learner.run()
        report = self.blackwell.find_blackwell()
        gap = trace.empirical_policy_gap_at
        record = RunRecord(
            run=run,
            seed=config.seed,
            steps_taken=trace.steps_taken,
            terminated_by=trace.terminated_by,
            greedy_policy=trace.greedy_policy,
            blackwell_optimal=report.is_blackwell(trace.greedy_policy),
            gain_optimal=self.is_gain_optimal(trace.greedy_policy),
            empirical_policy_gap=None if gap is None else gap[1]
        )
        return record, trace.m_used

    def _exact_gap(self, config: LearnerConfig, state: str) -> Optional[float]:
        """Exact policy gap of the config-optimal policy at the designated state."""
        if len(self.model.available[self.model.state_index[state]]) < 2:
            return None
        policy = self.solver.optimal_policy(config.gamma).policy
        return self.regret.policy_gap(policy, config.gamma, state).policy_gap

    def experiment(self, configs: Sequence[LearnerConfig], runs_per_config: int) -> ExperimentTable:
        """Repeat seeded runs per config; run i uses seed + i."""
        if runs_per_config < 0:
            raise InvalidParameterError(f"runs_per_config must be >= 0, got {runs_per_config}")
        if runs_per_config == 0:
            return ExperimentTable()

        # warm the shared caches before fanning out
        self.blackwell.find_blackwell()
        self.max_gain()

        rows = []
        for config in configs:
            run_configs = [config.model_copy(update={"seed": config.seed + i}) for i in range(runs_per_config)]
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(self._record, range(runs_per_config), run_configs))
            records = [record for record, _ in results]
            steps = np.array([r.steps_taken for r in records], dtype=float)
            state = self.mdp.states[gap_index(self.model, config.gap_state)]
            rows.append(ExperimentRow(
                config=config,
                runs=runs_per_config,
                m_used=results[0][1],
                mean_steps=float(steps.mean()),
                std_steps=float(steps.std(ddof=1)) if len(steps) > 1 else 0.0,
                blackwell_fraction=sum(r.blackwell_optimal for r in records) / runs_per_config,
                gain_fraction=sum(r.gain_optimal for r in records) / runs_per_config,
                gap_state=state,
                exact_policy_gap=self._exact_gap(config, state),
                records=records
            ))
            logger.info(f"gamma={config.gamma}: {rows[-1].blackwell_fraction:.0%} Blackwell optimal")
        return ExperimentTable(rows=rows)
