"""End-to-end protocol simulation.

Executes the block-pipelined offload/train timeline: a seeded random
permutation fixes the transmission order, each block delivers the next n_c
indices, and while block b is on the air the edge runs SGD sampling
uniformly from the blocks delivered so far (block 1 is idle, nothing has
arrived yet). After full delivery a residual period trains on the whole set.

The traced loss is the full-dataset empirical loss: the simulator is an
omniscient evaluator of the quantity the bounds govern, even though the edge
could not compute it online.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend import sgd_trace
from .data import Dataset
from .errors import ConfigurationError
from .learner import LossSpec
from .schedule import PipelineSchedule, ProtocolConfig, Regime, compute_schedule


@dataclass
class TransmissionLog:
    """Realized sample delivery: blocks[b-1] holds the indices sent in block b."""

    blocks: list[np.ndarray]
    cumulative: list[int]  # delivered counts after each block


@dataclass
class TrainingTrace:
    """Loss trajectory of one simulated run.

    times/losses are aligned; block_end_w[b-1] is the iterate at the end of
    block b (needed by the Monte Carlo bound evaluation); final_w is the
    iterate at time T.
    """

    times: np.ndarray
    losses: np.ndarray
    block_boundaries: list[tuple[int, float]]
    final_w: np.ndarray
    seed: object
    block_end_w: list[np.ndarray]
    initial_loss: float
    schedule: PipelineSchedule


@dataclass
class AveragedTrace:
    """Pointwise mean over runs sharing one config (and hence one time grid)."""

    times: np.ndarray
    mean_losses: np.ndarray
    stderr: np.ndarray
    final_mean: float
    final_stderr: float
    n_runs: int
    per_run_final: np.ndarray


def _loss_stats(data: Dataset, spec: LossSpec):
    """Sufficient statistics for O(d^2) full-data loss evaluation."""
    n = len(data)
    A = data.X.T @ data.X / n
    h = data.X.T @ data.y / n
    c0 = float(data.y @ data.y) / n
    return A, h, c0


def _full_loss(w: np.ndarray, A, h, c0, lam_n: float) -> float:
    return float(w @ (A @ w)) - 2.0 * float(h @ w) + c0 + lam_n * float(w @ w)


class _TraceRecorder:
    """Subsampled loss recording; the final update is always kept exactly."""

    def __init__(self, record_every: int):
        if record_every < 1:
            raise ConfigurationError(f"record_every must be >= 1, got {record_every}")
        self.k = record_every
        self.times: list[float] = []
        self.losses: list[float] = []
        self._count = 0
        self._last: tuple[float, float] | None = None

    def add_chunk(self, times: np.ndarray, losses: np.ndarray) -> None:
        n = len(times)
        if n == 0:
            return
        pos = np.arange(self._count + 1, self._count + n + 1)
        mask = pos % self.k == 0
        self.times.extend(times[mask])
        self.losses.extend(losses[mask])
        self._count += n
        self._last = (float(times[-1]), float(losses[-1]))

    def finish(self) -> tuple[np.ndarray, np.ndarray]:
        if self._last is not None and self._count % self.k != 0:
            self.times.append(self._last[0])
            self.losses.append(self._last[1])
        return np.asarray(self.times), np.asarray(self.losses)


def _run_chunk(w, data, idx, cfg, spec, stats, t0, recorder, debug_allowed=None):
    """n updates of the hot loop starting at protocol time t0."""
    A, h, c0 = stats
    if debug_allowed is not None:
        assert np.isin(idx, debug_allowed).all(), "SGD sampled an undelivered index"
    scratch = np.empty(len(idx))
    sgd_trace(
        w, data.X, data.y, idx.astype(np.int64), cfg.alpha, 2.0 * spec.reg,
        A, h, c0, spec.reg, scratch,
    )
    times = t0 + cfg.tau_p * np.arange(1, len(idx) + 1)
    recorder.add_chunk(times, scratch)


def run_pipeline(
    dataset,
    cfg: ProtocolConfig,
    spec: LossSpec,
    w0: np.ndarray,
    seed,
    record_every: int = 1,
    debug_checks: bool = False,
) -> tuple[TrainingTrace, TransmissionLog]:
    """Simulate one seeded pipelined run; deterministic given all inputs."""
    data = Dataset.coerce(dataset)
    if len(data) != cfg.N:
        raise ConfigurationError(f"dataset has {len(data)} samples, config says N={cfg.N}")
    sched = compute_schedule(cfg)
    if sched.n_p == 0 and sched.n_l == 0:
        raise ConfigurationError(
            "no training occurs: tau_p exceeds both the block duration and the residual time"
        )
    w0 = np.asarray(w0, dtype=np.float64)
    if w0.shape != (data.dim,):
        raise ConfigurationError(f"w0 has shape {w0.shape}, expected ({data.dim},)")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(cfg.N)
    blocks = [perm[(b - 1) * cfg.n_c : min(b * cfg.n_c, cfg.N)] for b in range(1, sched.B_d + 1)]
    log = TransmissionLog(
        blocks=blocks, cumulative=[min(b * cfg.n_c, cfg.N) for b in range(1, sched.B_d + 1)]
    )

    stats = _loss_stats(data, spec)
    lam_n = spec.reg
    w = w0.copy()
    recorder = _TraceRecorder(record_every)
    boundaries: list[tuple[int, float]] = []
    block_end_w: list[np.ndarray] = []
    bt = cfg.block_duration

    for b in range(1, sched.B + 1):
        if b >= 2 and sched.n_p > 0:
            avail_n = min((b - 1) * cfg.n_c, cfg.N)
            raw = rng.integers(0, avail_n, size=sched.n_p)
            idx = perm[raw]
            allowed = perm[:avail_n] if debug_checks else None
            _run_chunk(w, data, idx, cfg, spec, stats, (b - 1) * bt, recorder, allowed)
        block_end_w.append(w.copy())
        boundaries.append((b, b * bt))

    if sched.regime is Regime.FULL and sched.n_l > 0:
        raw = rng.integers(0, cfg.N, size=sched.n_l)
        idx = perm[raw]
        allowed = perm if debug_checks else None
        _run_chunk(w, data, idx, cfg, spec, stats, sched.B_d * bt, recorder, allowed)
        boundaries.append((sched.B_d + 1, cfg.T))

    times, losses = recorder.finish()
    trace = TrainingTrace(
        times=times,
        losses=losses,
        block_boundaries=boundaries,
        final_w=w,
        seed=seed,
        block_end_w=block_end_w,
        initial_loss=_full_loss(w0, *stats, lam_n),
        schedule=sched,
    )
    return trace, log


def offload_then_train(
    dataset,
    cfg: ProtocolConfig,
    spec: LossSpec,
    w0: np.ndarray,
    seed,
    record_every: int = 1,
) -> TrainingTrace:
    """Baseline: ship the whole dataset in one block, then train on all of it.

    Implemented directly (not via run_pipeline) as a sequential transmit-then
    -train loop. It consumes randomness in the same order as run_pipeline with
    n_c = N, so the two are update-for-update identical under a shared seed.
    """
    data = Dataset.coerce(dataset)
    if len(data) != cfg.N:
        raise ConfigurationError(f"dataset has {len(data)} samples, config says N={cfg.N}")
    cfg = cfg.with_block_size(cfg.N)
    bt = cfg.block_duration
    if cfg.T <= bt:
        raise ConfigurationError("time budget too small to deliver the dataset")
    n_l = int((cfg.T - bt) // cfg.tau_p)
    if n_l == 0:
        raise ConfigurationError("no training occurs: no residual time after delivery")

    w0 = np.asarray(w0, dtype=np.float64)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(cfg.N)
    idx = perm[rng.integers(0, cfg.N, size=n_l)]

    stats = _loss_stats(data, spec)
    w = w0.copy()
    recorder = _TraceRecorder(record_every)
    _run_chunk(w, data, idx, cfg, spec, stats, bt, recorder)
    times, losses = recorder.finish()
    return TrainingTrace(
        times=times,
        losses=losses,
        block_boundaries=[(1, bt), (2, cfg.T)],
        final_w=w,
        seed=seed,
        block_end_w=[w0.copy()],
        initial_loss=_full_loss(w0, *stats, spec.reg),
        schedule=compute_schedule(cfg),
    )


def _seed_tuple(seed) -> tuple[int, ...]:
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return (int(seed),)


def derive_run_streams(seed) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Disjoint (pipeline, init) RNG streams for one run seed."""
    t = _seed_tuple(seed)
    return np.random.SeedSequence(t + (0,)), np.random.SeedSequence(t + (1,))


def gaussian_init(dim: int, seed) -> np.ndarray:
    """Per-coordinate i.i.d. standard normal initialization."""
    _, init_seq = derive_run_streams(seed)
    return np.random.default_rng(init_seq).standard_normal(dim)


def average_runs(
    dataset,
    cfg: ProtocolConfig,
    spec: LossSpec,
    w0_policy,
    seeds: Sequence,
    record_every: int = 1,
) -> AveragedTrace:
    """Mean loss trajectory over seeded runs sharing one config.

    w0_policy is "gaussian" (fresh init per run, derived from the run seed),
    a fixed weight vector, or a list of per-run weight vectors (useful as
    common random numbers when comparing block sizes).
    """
    if len(seeds) < 1:
        raise ConfigurationError("at least one seed is required")
    data = Dataset.coerce(dataset)
    per_run_w0 = None
    if isinstance(w0_policy, (list, tuple)):
        if len(w0_policy) != len(seeds):
            raise ConfigurationError("need one init vector per seed")
        per_run_w0 = [np.asarray(w, dtype=np.float64) for w in w0_policy]
    all_losses = []
    times = None
    for i, s in enumerate(seeds):
        run_seq, _ = derive_run_streams(s)
        if per_run_w0 is not None:
            w0 = per_run_w0[i]
        elif isinstance(w0_policy, str):
            if w0_policy != "gaussian":
                raise ConfigurationError(f"unknown init policy {w0_policy!r}")
            w0 = gaussian_init(data.dim, s)
        else:
            w0 = np.asarray(w0_policy, dtype=np.float64)
        trace, _ = run_pipeline(data, cfg, spec, w0, run_seq, record_every)
        if times is None:
            times = trace.times
        elif trace.times.shape != times.shape or not np.array_equal(trace.times, times):
            raise RuntimeError("internal error: traces misaligned despite shared config")
        all_losses.append(trace.losses)
    L = np.stack(all_losses)
    n = L.shape[0]
    mean = L.mean(axis=0)
    stderr = L.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
    return AveragedTrace(
        times=times,
        mean_losses=mean,
        stderr=stderr,
        final_mean=float(mean[-1]),
        final_stderr=float(stderr[-1]),
        n_runs=n,
        per_run_final=L[:, -1].copy(),
    )


def experimental_optimum(
    dataset,
    cfg_template: ProtocolConfig,
    spec: LossSpec,
    grid: Sequence[int],
    seeds: Sequence,
    record_every: int = 1,
) -> tuple[int, list[tuple[int, float, float]]]:
    """Mean final loss per grid block size; argmin with ties toward smaller n_c.

    Per-run streams depend on (seed, n_c) so different block sizes draw
    independent randomness.
    """
    if not grid:
        raise ConfigurationError("empty block-size grid")
    table = []
    for n_c in sorted(grid):
        cfg = cfg_template.with_block_size(n_c)
        seeds_nc = [_seed_tuple(s) + (int(n_c),) for s in seeds]
        avg = average_runs(dataset, cfg, spec, "gaussian", seeds_nc, record_every)
        table.append((n_c, avg.final_mean, avg.final_stderr))
    best = min(table, key=lambda row: (row[1], row[0]))
    return best[0], table
