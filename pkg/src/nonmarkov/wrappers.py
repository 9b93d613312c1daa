"""Apply a reversible history aggregator to an environment or tabular process.

Wrapping transforms the observation stream (and optionally the reward
stream) while leaving the inner dynamics untouched; the burden of decoding
the history back into the underlying state falls on the agent.  The exact
oracle form reproduces the same transformation analytically over finite
outcome distributions, for use by the dependency and category checks.
"""
from __future__ import annotations

import warnings

import numpy as np

from .aggregators import FunctorSpec, HarSpec, parse_har_spec, parse_spec
from .core import (
    EMBED_MATCH_TOL,
    FiniteMDP,
    History,
    NMDPOracle,
    UndecodableHistoryError,
    as_state,
    canonical_distribution,
    is_degenerate,
)
from .envs import Environment


class WrappedEnvironment(Environment):
    """Environment whose observations are aggregated histories.

    The inner environment's trajectory is untouched; only the emitted
    observations (state aggregator) and/or rewards (reward aggregator)
    are transformed.
    """

    def __init__(self, inner: Environment, spec: FunctorSpec = None,
                 har_spec: HarSpec = None):
        self.inner = inner
        self.spec = spec
        self.har_spec = har_spec
        self.observation_dim = inner.observation_dim
        self.num_actions = inner.num_actions
        self._agg = None
        self._har = None

    def reset(self, seed: int) -> np.ndarray:
        obs = self.inner.reset(seed)
        if self.spec is not None:
            self._agg = self.spec.make_aggregator()
            obs = self._agg.begin(obs)
        if self.har_spec is not None:
            self._har = self.har_spec.make_aggregator()
        return obs

    def step(self, action: int):
        obs, reward, terminated, truncated = self.inner.step(action)
        if self._agg is not None:
            obs = self._agg.push(obs)
        if self._har is not None:
            reward = self._har.feed(reward)
        return obs, reward, terminated, truncated


def wrap(env: Environment, spec=None, har_spec=None) -> Environment:
    """Wrap `env` with a state and/or reward aggregator.

    Specs may be strings in the shared grammar or parsed objects.  Chained
    state specs nest one wrapper per stage, so an n-stage chain is realized
    by n nested applications.
    """
    if spec is None and har_spec is None:
        return env
    if isinstance(spec, str):
        spec = parse_spec(spec)
    if isinstance(har_spec, str):
        har_spec = parse_har_spec(har_spec)
    out = env
    if spec is not None:
        for atom in spec.atoms:
            out = WrappedEnvironment(out, spec=FunctorSpec(atoms=(atom,)))
    if har_spec is not None:
        out = WrappedEnvironment(out, har_spec=har_spec)
    return out


class AggregatedMDPOracle(NMDPOracle):
    """Exact transition law of a tabular process under a reversible aggregator.

    Given a history of aggregated observations, decodes the raw state
    stream, looks up the tabular row for the latest state, and maps each
    outcome to the unique next aggregate that decodes back to it.
    """

    def __init__(self, mdp: FiniteMDP, spec: FunctorSpec,
                 match_tol: float = EMBED_MATCH_TOL):
        self.mdp = mdp
        self.spec = spec
        self.match_tol = match_tol
        self.num_actions = mdp.num_actions

    def initial(self):
        agg_outs = []
        for s in range(self.mdp.num_states):
            p = float(self.mdp.rho0[s])
            if p == 0.0:
                continue
            agg = self.spec.make_aggregator()
            g0 = agg.begin(self.mdp.embedding[s])
            agg_outs.append((tuple(g0), p))
        return [(np.array(k), p) for k, p in canonical_distribution(agg_outs)]

    def _decode(self, h: History):
        """Decoder fed with the history's observations, plus decoded raws."""
        dec = self.spec.make_decoder()
        raws = [dec.feed(g) for g in h.states]
        return dec, raws

    def decode_last_state(self, h: History) -> int:
        dec, raws = self._decode(h)
        idx = self.mdp.match_state(raws[-1], tol=self.match_tol)
        if idx is None:
            raise UndecodableHistoryError(
                f"decoded state at t={h.t} matches no embedded state")
        return idx

    def transition(self, h: History, action: int):
        dec, raws = self._decode(h)
        idx = self.mdp.match_state(raws[-1], tol=self.match_tol)
        if idx is None:
            raise UndecodableHistoryError(
                f"decoded state at t={h.t} matches no embedded state")
        outs = []
        for o in self.mdp.row(idx, action):
            g_next = dec.project(self.mdp.embedding[o.next_state])
            outs.append(((tuple(g_next), o.reward), o.prob))
        merged = canonical_distribution(outs)
        return [((np.array(k[0]), k[1]), p) for k, p in merged]

    def substitution_candidates(self, h: History, index: int, state_pool):
        """Pool states re-aggregated in the context of the history prefix.

        The candidate for pool state p at position i is the aggregate
        obtained by aggregating the decoded raw prefix s_0..s_{i-1}
        followed by p.
        """
        _, raws = self._decode(h)
        candidates = []
        for p in state_pool:
            agg = self.spec.make_aggregator()
            g = None
            for s in raws[:index]:
                g = agg.push(s) if g is not None else agg.begin(s)
            g = agg.push(p) if g is not None else agg.begin(p)
            candidates.append(as_state(g))
        return candidates


def as_nmdp_oracle(m: FiniteMDP, spec) -> AggregatedMDPOracle:
    """Exact oracle for the aggregated form of a tabular process."""
    if isinstance(spec, str):
        spec = parse_spec(spec)
    if is_degenerate(m):
        warnings.warn("MDP is degenerate: dependency-structure guarantees do not apply",
                      stacklevel=2)
    return AggregatedMDPOracle(m, spec)
