"""Domain types: vector states, histories, and finite tabular decision processes.

A decision process history carries the full (state, action, reward) record up
to the current timestep; transitions of a non-Markovian process condition on
that whole record.  Everything here is immutable after construction so that
analysis code can share instances freely.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-12
EMBED_MATCH_TOL = 1e-9


class ValidationError(ValueError):
    """Raised when a constructed object violates its invariants."""


class EmptyComponentError(ValueError):
    """Raised when extracting the latest action/reward from a length-0 history."""


def as_state(x) -> np.ndarray:
    """Coerce to a read-only float vector, rejecting NaN/Inf and non-1d input."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValidationError(f"state vector must be 1-d and nonempty, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("state vector entries must be finite")
    v = v.copy()
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class History:
    """A (s_{0:t}, a_{0:t-1}, r_{0:t-1}) triple; |states| = |actions|+1 = |rewards|+1."""

    states: tuple
    actions: tuple
    rewards: tuple

    def __post_init__(self):
        states = tuple(as_state(s) for s in self.states)
        actions = tuple(int(a) for a in self.actions)
        rewards = tuple(float(r) for r in self.rewards)
        if len(states) != len(actions) + 1 or len(states) != len(rewards) + 1:
            raise ValidationError(
                "history lengths must satisfy |states| = |actions|+1 = |rewards|+1, "
                f"got {len(states)}/{len(actions)}/{len(rewards)}"
            )
        dims = {s.shape[0] for s in states}
        if len(dims) > 1:
            raise ValidationError(f"inconsistent state dimensions in history: {dims}")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)

    @property
    def t(self) -> int:
        return len(self.states) - 1

    def extend(self, action: int, reward: float, state) -> "History":
        return History(self.states + (as_state(state),),
                       self.actions + (int(action),),
                       self.rewards + (float(reward),))

    def is_prefix_of(self, other: "History") -> bool:
        """Proper prefix relation on histories."""
        if other.t <= self.t:
            return False
        return (
            all(np.array_equal(a, b) for a, b in zip(self.states, other.states))
            and other.actions[: len(self.actions)] == self.actions
            and other.rewards[: len(self.rewards)] == self.rewards
        )


def initial_history(s0) -> History:
    return History((as_state(s0),), (), ())


# -- extraction operators ----------------------------------------------------

def extract_states(h: History) -> tuple:
    return h.states


def extract_actions(h: History) -> tuple:
    return h.actions


def extract_rewards(h: History) -> tuple:
    return h.rewards


def latest_state(h: History) -> np.ndarray:
    return h.states[-1]


def latest_action(h: History) -> int:
    if not h.actions:
        raise EmptyComponentError("history at t=0 has no actions")
    return h.actions[-1]


def latest_reward(h: History) -> float:
    if not h.rewards:
        raise EmptyComponentError("history at t=0 has no rewards")
    return h.rewards[-1]


# -- finite distributions ----------------------------------------------------

def canonical_distribution(outcomes, tol: float = PROB_TOL):
    """Sort (key, prob) outcomes by key and merge duplicates.

    Keys must be comparable tuples.  Probabilities of identical keys are
    summed; the result is a tuple of (key, prob) pairs sorted by key.
    """
    merged: dict = {}
    for key, prob in outcomes:
        merged[key] = merged.get(key, 0.0) + prob
    return tuple(sorted(merged.items()))


def distributions_equal(d1, d2, tol: float = PROB_TOL) -> bool:
    """Exact comparison of canonicalized distributions.

    Keys are tuples of floats; two keys match when all components agree
    within `tol`, and matched probabilities must also agree within `tol`.
    """
    c1 = canonical_distribution(d1, tol)
    c2 = canonical_distribution(d2, tol)
    if len(c1) != len(c2):
        return False
    for (k1, p1), (k2, p2) in zip(c1, c2):
        if len(k1) != len(k2):
            return False
        if any(abs(a - b) > tol for a, b in zip(k1, k2)):
            return False
        if abs(p1 - p2) > tol:
            return False
    return True


@dataclass(frozen=True)
class Outcome:
    """One branch of a transition: next state index, reward, probability."""

    next_state: int
    reward: float
    prob: float

    def key(self):
        return (self.next_state, self.reward)


def _canonical_row(outcomes):
    """Canonicalize an outcome list: sort by (next, reward), merge duplicates."""
    merged: dict = {}
    for o in outcomes:
        merged[o.key()] = merged.get(o.key(), 0.0) + o.prob
    return tuple(sorted(merged.items()))


@dataclass(frozen=True)
class FiniteMDP:
    """Tabular time-homogeneous decision process with an injective vector embedding.

    `outcomes[s][a]` is the finite distribution over (next state, reward) and
    `embedding[s]` is the vector observation emitted for state `s`.
    """

    num_states: int
    num_actions: int
    rho0: np.ndarray
    outcomes: tuple  # outcomes[s][a] -> tuple of Outcome
    embedding: tuple  # embedding[s] -> StateVec

    def __post_init__(self):
        if self.num_states < 1 or self.num_actions < 1:
            raise ValidationError("num_states and num_actions must be >= 1")
        rho0 = np.asarray(self.rho0, dtype=float)
        if rho0.shape != (self.num_states,):
            raise ValidationError(f"rho0 must have shape ({self.num_states},)")
        if np.any(rho0 < 0) or abs(rho0.sum() - 1.0) > PROB_TOL:
            raise ValidationError("rho0 must be a probability vector (sum 1 within 1e-12)")
        rho0.flags.writeable = False
        object.__setattr__(self, "rho0", rho0)

        if len(self.outcomes) != self.num_states:
            raise ValidationError("outcomes must have one row per state")
        rows = []
        for s, per_action in enumerate(self.outcomes):
            if len(per_action) != self.num_actions:
                raise ValidationError(f"state {s}: expected {self.num_actions} action rows")
            arow = []
            for a, lst in enumerate(per_action):
                lst = tuple(lst)
                if not lst:
                    raise ValidationError(f"state {s}, action {a}: empty outcome list")
                total = 0.0
                for o in lst:
                    if not (0 <= o.next_state < self.num_states):
                        raise ValidationError(
                            f"state {s}, action {a}: next state {o.next_state} out of range")
                    if o.prob < 0:
                        raise ValidationError(f"state {s}, action {a}: negative probability")
                    total += o.prob
                if abs(total - 1.0) > PROB_TOL:
                    raise ValidationError(
                        f"state {s}, action {a}: outcome probs sum to {total!r}, not 1")
                arow.append(lst)
            rows.append(tuple(arow))
        object.__setattr__(self, "outcomes", tuple(rows))

        emb = tuple(as_state(e) for e in self.embedding)
        if len(emb) != self.num_states:
            raise ValidationError("embedding must have one vector per state")
        dims = {e.shape[0] for e in emb}
        if len(dims) != 1:
            raise ValidationError("embedding vectors must share one dimension")
        for i in range(len(emb)):
            for j in range(i + 1, len(emb)):
                if np.array_equal(emb[i], emb[j]):
                    raise ValidationError(f"embedding is not injective: states {i} and {j}")
        object.__setattr__(self, "embedding", emb)

    @property
    def obs_dim(self) -> int:
        return self.embedding[0].shape[0]

    def row(self, state: int, action: int):
        return self.outcomes[state][action]

    def match_state(self, vec, tol: float = EMBED_MATCH_TOL):
        """Index of the embedded state nearest to `vec`, or None if beyond tol."""
        v = np.asarray(vec, dtype=float)
        best, best_d = None, np.inf
        for i, e in enumerate(self.embedding):
            d = float(np.max(np.abs(e - v)))
            if d < best_d:
                best, best_d = i, d
        return best if best_d <= tol else None

    def reward_support(self):
        return sorted({o.reward for row in self.outcomes for lst in row for o in lst})


def is_degenerate(m: FiniteMDP) -> bool:
    """True iff two distinct states have identical outcome rows for every action."""
    canon = [
        tuple(_canonical_row(m.outcomes[s][a]) for a in range(m.num_actions))
        for s in range(m.num_states)
    ]

    def rows_equal(r1, r2):
        for d1, d2 in zip(r1, r2):
            if len(d1) != len(d2):
                return False
            for (k1, p1), (k2, p2) in zip(d1, d2):
                if k1[0] != k2[0] or abs(k1[1] - k2[1]) > PROB_TOL or abs(p1 - p2) > PROB_TOL:
                    return False
        return True

    for i in range(m.num_states):
        for j in range(i + 1, m.num_states):
            if rows_equal(canon[i], canon[j]):
                return True
    return False


class UndecodableHistoryError(ValueError):
    """Raised when a decoded observation matches no embedded state."""


class NMDPOracle:
    """Exact transition evaluator for a finite non-Markovian decision process.

    Subclasses implement `initial()` returning a finite distribution over
    first observations as (obs, prob) pairs, and `transition(h, a)` returning
    a finite distribution over (next observation, reward) as
    ((obs, reward), prob) pairs.  Both must be deterministic functions of
    their arguments and sum to 1 within 1e-12.
    """

    num_actions: int

    def initial(self):
        raise NotImplementedError

    def transition(self, h: History, action: int):
        raise NotImplementedError

    def substitution_candidates(self, h: History, index: int, state_pool):
        """Candidate observations to substitute at `index` of `h`.

        The default pool is the raw states themselves; oracles whose
        observations are aggregates override this to place pool states in
        the context of the history prefix.
        """
        return [as_state(p) for p in state_pool]


# -- JSON interchange --------------------------------------------------------

def mdp_to_json(m: FiniteMDP) -> dict:
    return {
        "num_states": m.num_states,
        "num_actions": m.num_actions,
        "rho0": [float(p) for p in m.rho0],
        "outcomes": [
            [[{"next": o.next_state, "reward": o.reward, "prob": o.prob} for o in lst]
             for lst in row]
            for row in m.outcomes
        ],
        "embedding": [[float(x) for x in e] for e in m.embedding],
    }


def mdp_from_dict(data: dict, source: str = "<dict>") -> FiniteMDP:
    def fail(path, msg):
        raise ValidationError(f"{source}: {path}: {msg}")

    for key in ("num_states", "num_actions", "rho0", "outcomes", "embedding"):
        if key not in data:
            fail(key, "missing field")
    try:
        outcomes = tuple(
            tuple(
                tuple(Outcome(int(o["next"]), float(o["reward"]), float(o["prob"]))
                      for o in lst)
                for lst in row
            )
            for row in data["outcomes"]
        )
    except (KeyError, TypeError) as exc:
        fail("outcomes", f"malformed outcome entry ({exc})")
    try:
        return FiniteMDP(
            num_states=int(data["num_states"]),
            num_actions=int(data["num_actions"]),
            rho0=np.asarray(data["rho0"], dtype=float),
            outcomes=outcomes,
            embedding=tuple(data["embedding"]),
        )
    except ValidationError as exc:
        raise ValidationError(f"{source}: {exc}") from exc


def load_mdp(path: str) -> FiniteMDP:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return mdp_from_dict(data, source=path)


def save_mdp(m: FiniteMDP, path: str) -> None:
    with open(path, "w") as f:
        json.dump(mdp_to_json(m), f, indent=1)
