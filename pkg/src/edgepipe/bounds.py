"""Optimality-gap upper bounds and block-size optimization.

Two routes to the expected gap at time T:

* a closed-form bound built from constants only (contraction factor, noise
  floor, iterate diameter), evaluated per schedule regime with geometric
  sums in closed form -- cheap enough to sweep over block sizes;
* a Monte Carlo evaluation of the tighter per-block bound, which needs the
  realized block partitions and iterates from simulated runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, NumericalConditionError
from .learner import LossSpec, solve_erm, subset_loss
from .schedule import PipelineSchedule, ProtocolConfig, Regime, compute_schedule
from .simulator import derive_run_streams, gaussian_init, run_pipeline


def compute_gamma(alpha: float, L: float, M_G: float) -> float:
    """Per-update contraction coefficient gamma = alpha * (1 - alpha*L*M_G/2).

    Requires 0 < alpha < 2/(L*M_G). The boundary alpha = 2/(L*M_G) is
    rejected: it gives gamma = 0 and every bound expression divides by gamma.
    """
    if L <= 0 or M_G <= 0:
        raise ConfigurationError(f"L and M_G must be positive, got L={L}, M_G={M_G}")
    if not 0 < alpha < 2.0 / (L * M_G):
        raise NumericalConditionError(
            f"step size alpha={alpha} violates 0 < alpha < 2/(L*M_G) = {2.0 / (L * M_G)}"
        )
    return alpha * (1.0 - 0.5 * alpha * L * M_G)


@dataclass(frozen=True)
class BoundConstants:
    """Everything the gap bounds consume. Build via `BoundConstants.create`
    so that gamma is derived consistently from (alpha, L, M_G)."""

    L: float
    c: float
    M: float
    M_V: float
    M_G: float
    D: float
    alpha: float
    gamma: float

    @classmethod
    def create(
        cls,
        L: float,
        c: float,
        M: float,
        D: float,
        alpha: float,
        M_V: float = 0.0,
        M_G: float | None = None,
    ) -> "BoundConstants":
        if M_G is None:
            M_G = M_V + 1.0  # standard choice when only M_V is certified
        gamma = compute_gamma(alpha, L, M_G)
        k = cls(L=L, c=c, M=M, M_V=M_V, M_G=M_G, D=D, alpha=alpha, gamma=gamma)
        k.validate()
        return k

    def validate(self) -> None:
        if self.c <= 0 or self.L <= 0:
            raise ConfigurationError(f"need 0 < c <= L, got c={self.c}, L={self.L}")
        if self.c > self.L:
            raise ConfigurationError(f"c={self.c} exceeds L={self.L}")
        if self.M < 0 or self.M_V < 0:
            raise ConfigurationError("M and M_V must be non-negative")
        if self.D <= 0:
            raise ConfigurationError(f"D must be positive, got {self.D}")
        if self.gamma * self.c >= 1.0:
            raise NumericalConditionError(
                f"gamma*c = {self.gamma * self.c} >= 1: geometric terms do not contract"
            )


def noise_floor(k: BoundConstants) -> float:
    """Non-vanishing bias term from stochastic-gradient variance:
    alpha^2 * L * M / (2 * gamma * c)."""
    return k.alpha**2 * k.L * k.M / (2.0 * k.gamma * k.c)


def _geom_sum(r: float, n: int) -> float:
    """sum_{l=0}^{n-1} r^l, closed form unless r == 1."""
    if n <= 0:
        return 0.0
    if r == 1.0:
        return float(n)
    return (1.0 - r**n) / (1.0 - r)


def corollary_bound(sched: PipelineSchedule, k: BoundConstants) -> float:
    """Closed-form upper bound on the expected optimality gap at time T."""
    q = 1.0 - k.gamma * k.c
    if q >= 1.0 or q < 0.0:
        raise NumericalConditionError(f"contraction factor 1 - gamma*c = {q} outside [0, 1)")
    nf = noise_floor(k)
    half = 0.5 * k.L * k.D**2
    r = q**sched.n_p
    if sched.regime is Regime.FULL:
        return nf + (q**sched.n_l) * (half - nf) * _geom_sum(r, sched.B_d) / sched.B_d
    f = (sched.B - 1) / sched.B_d
    # sum_{l=1}^{B-1} r^l = r * sum_{l=0}^{B-2} r^l
    tail = r * _geom_sum(r, sched.B - 1)
    return nf * f + (1.0 - f) * half + (half - nf) * tail / sched.B_d


@dataclass
class BoundCurve:
    """Bound value per grid block size, for one config template."""

    entries: list[tuple[int, float, Regime, PipelineSchedule]]
    constants: BoundConstants
    cfg_template: ProtocolConfig


@dataclass
class OptimizationResult:
    """Grid argmin of the closed-form bound.

    boundary_n_c is the smallest grid block size whose schedule is in the
    full-delivery regime (None when every grid point is partial).
    """

    n_c_opt: int
    bound_at_opt: float
    regime_at_opt: Regime
    boundary_n_c: int | None
    curve: BoundCurve


def optimize_block_size(
    cfg_template: ProtocolConfig, grid: Sequence[int], k: BoundConstants
) -> OptimizationResult:
    """Evaluate the closed-form bound on every grid block size and pick the
    argmin (ties toward smaller n_c)."""
    if not grid:
        raise ConfigurationError("empty block-size grid")
    entries = []
    for n_c in sorted(grid):
        try:
            cfg = cfg_template.with_block_size(int(n_c))
            sched = compute_schedule(cfg)
            val = corollary_bound(sched, k)
        except (ConfigurationError, NumericalConditionError) as exc:
            raise type(exc)(f"bound evaluation failed at n_c={n_c}: {exc}") from exc
        if math.isnan(val):
            raise NumericalConditionError(f"bound is NaN at n_c={n_c}")
        entries.append((int(n_c), val, sched.regime, sched))
    best = min(entries, key=lambda e: (e[1], e[0]))
    boundary = next((e[0] for e in entries if e[2] is Regime.FULL), None)
    return OptimizationResult(
        n_c_opt=best[0],
        bound_at_opt=best[1],
        regime_at_opt=best[2],
        boundary_n_c=boundary,
        curve=BoundCurve(entries=entries, constants=k, cfg_template=cfg_template),
    )


def pilot_diameter(
    dataset, cfg: ProtocolConfig, spec: LossSpec, seed, margin: float = 1.1
) -> float:
    """Helper default for D: max pairwise distance among the iterates of one
    pilot run (block-end iterates plus init and final), inflated by `margin`."""
    data = Dataset.coerce(dataset)
    run_seq, _ = derive_run_streams(seed)
    w0 = gaussian_init(data.dim, seed)
    trace, _ = run_pipeline(data, cfg, spec, w0, run_seq, record_every=max(1, cfg.N // 100))
    pts = np.stack([w0, trace.final_w] + trace.block_end_w)
    diffs = pts[:, None, :] - pts[None, :, :]
    dmax = float(np.sqrt((diffs**2).sum(axis=2)).max())
    if dmax == 0.0:
        dmax = float(np.linalg.norm(w0)) or 1.0
    return margin * dmax


@dataclass
class MCBoundResult:
    """Monte Carlo estimate of the per-block gap bound at time T."""

    estimate: float
    stderr: float
    gap_mean: float  # measured E[L(w_final) - L(w*)] on the same runs
    gap_stderr: float
    per_run_bounds: np.ndarray
    per_run_gaps: np.ndarray


def theorem_bound_mc(
    dataset,
    cfg: ProtocolConfig,
    spec: LossSpec,
    k: BoundConstants,
    runs: int,
    seed,
    w0_policy="gaussian",
) -> MCBoundResult:
    """Evaluate the per-block gap bound by simulation.

    Each run records the end-of-block iterates and the realized block
    partition, then evaluates the bound's right-hand side with empirical
    per-block losses. Returns the sample mean and standard error across runs,
    plus the directly measured optimality gap for validity checks.
    """
    if runs < 2:
        raise ConfigurationError(f"need at least 2 runs, got {runs}")
    data = Dataset.coerce(dataset)
    if len(data) != cfg.N:
        raise ConfigurationError(f"dataset has {len(data)} samples, config says N={cfg.N}")
    sched = compute_schedule(cfg)
    q = 1.0 - k.gamma * k.c
    nf = noise_floor(k)
    w_star, loss_star = solve_erm(data, spec)

    bounds_per_run = np.empty(runs)
    gaps_per_run = np.empty(runs)
    for r in range(runs):
        sub = _mc_seed(seed, r)
        run_seq, _ = derive_run_streams(sub)
        if isinstance(w0_policy, str):
            w0 = gaussian_init(data.dim, sub)
        else:
            w0 = np.asarray(w0_policy, dtype=np.float64)
        trace, log = run_pipeline(data, cfg, spec, w0, run_seq, record_every=max(1, sched.n_p or 1))

        def block_gap(b: int) -> float:
            """L_b(w_b_end) - L_b(w*) over the samples of block b (1-based)."""
            blk = data.subset(log.blocks[b - 1])
            w_end = trace.block_end_w[b - 1]
            return subset_loss(w_end, blk, spec) - subset_loss(w_star, blk, spec)

        if sched.regime is Regime.FULL:
            total = nf
            for l in range(sched.B_d):
                total += (
                    (q**sched.n_l) * (q ** (l * sched.n_p)) * (block_gap(sched.B_d - l) - nf)
                ) / sched.B_d
        else:
            B, B_d = sched.B, sched.B_d
            f = (B - 1) / B_d
            delivered = log.cumulative[B - 2] if B >= 2 else 0
            undelivered_idx = np.concatenate(log.blocks[B - 1 :]) if delivered < cfg.N else None
            if undelivered_idx is None or len(undelivered_idx) == 0:
                mid = 0.0
            else:
                und = data.subset(undelivered_idx)
                w_end = trace.block_end_w[B - 1]
                mid = subset_loss(w_end, und, spec) - subset_loss(w_star, und, spec)
            total = nf * f + (1.0 - f) * mid
            for l in range(1, B):
                total += (q ** (l * sched.n_p)) * (block_gap(B - l) - nf) / B_d
        bounds_per_run[r] = total
        gaps_per_run[r] = subset_loss(trace.final_w, data, spec) - loss_star

    est = float(bounds_per_run.mean())
    se = float(bounds_per_run.std(ddof=1) / np.sqrt(runs))
    return MCBoundResult(
        estimate=est,
        stderr=se,
        gap_mean=float(gaps_per_run.mean()),
        gap_stderr=float(gaps_per_run.std(ddof=1) / np.sqrt(runs)),
        per_run_bounds=bounds_per_run,
        per_run_gaps=gaps_per_run,
    )


def _mc_seed(seed, run_index: int) -> tuple[int, ...]:
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed) + (int(run_index),)
    return (int(seed), int(run_index))
