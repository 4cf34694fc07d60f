"""Timeline arithmetic for block-pipelined offloading.

All times are normalized so that transmitting one sample takes time 1.
A transmission block carries ``n_c`` samples plus a fixed overhead ``n_o``,
so one block lasts ``n_c + n_o``. While block ``b`` is on the air, the edge
runs SGD on the samples delivered in blocks ``1..b-1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .errors import ConfigurationError


class Regime(enum.Enum):
    """Whether the time budget suffices to deliver the whole dataset."""

    PARTIAL = "partial"
    FULL = "full"


@dataclass(frozen=True)
class ProtocolConfig:
    """Tunables of one protocol instance.

    N: dataset size, n_c: samples per block, n_o: per-block overhead,
    tau_p: duration of one SGD update, T: total time budget,
    alpha: SGD step size.
    """

    N: int
    n_c: int
    n_o: float
    tau_p: float
    T: float
    alpha: float

    def __post_init__(self) -> None:
        if not isinstance(self.N, int) or self.N < 1:
            raise ConfigurationError(f"N must be a positive integer, got {self.N!r}")
        if not isinstance(self.n_c, int) or self.n_c < 1:
            raise ConfigurationError(f"n_c must be a positive integer, got {self.n_c!r}")
        if self.n_c > self.N:
            raise ConfigurationError(f"n_c={self.n_c} exceeds dataset size N={self.N}")
        if self.n_o < 0:
            raise ConfigurationError(f"n_o must be non-negative, got {self.n_o!r}")
        if self.tau_p <= 0:
            raise ConfigurationError(f"tau_p must be positive, got {self.tau_p!r}")
        if self.T <= self.n_c + self.n_o:
            raise ConfigurationError(
                f"T={self.T} must exceed one block duration n_c+n_o={self.n_c + self.n_o}"
            )
        if self.alpha <= 0:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha!r}")

    @property
    def block_duration(self) -> float:
        return self.n_c + self.n_o

    def with_block_size(self, n_c: int) -> "ProtocolConfig":
        return replace(self, n_c=n_c)


@dataclass(frozen=True)
class PipelineSchedule:
    """Derived timing quantities for one ProtocolConfig.

    B_d: blocks needed to deliver everything; B: completed blocks within T;
    n_p: SGD updates fitting in one block; tau_l / n_l: residual time and
    updates after full delivery (zero in the partial regime).
    """

    B_d: int
    B: int
    n_p: int
    tau_l: float
    n_l: int
    regime: Regime
    delivered_fraction: float


def compute_schedule(cfg: ProtocolConfig) -> PipelineSchedule:
    """Derive the block/update counts and regime for a config.

    Rounding conventions: B_d = ceil(N/n_c) (last block may be short);
    B, n_p, n_l are floors (only completed blocks/updates count).
    """
    B_d = math.ceil(cfg.N / cfg.n_c)
    bt = cfg.block_duration
    full = cfg.T > B_d * bt
    n_p = math.floor(bt / cfg.tau_p)
    if full:
        B = B_d
        tau_l = cfg.T - B_d * bt
        n_l = math.floor(tau_l / cfg.tau_p)
        delivered = 1.0
    else:
        B = min(B_d, math.floor(cfg.T / bt))
        tau_l = 0.0
        n_l = 0
        delivered = (B - 1) / B_d
    return PipelineSchedule(
        B_d=B_d,
        B=B,
        n_p=n_p,
        tau_l=tau_l,
        n_l=n_l,
        regime=Regime.FULL if full else Regime.PARTIAL,
        delivered_fraction=delivered,
    )


@dataclass(frozen=True)
class GridPolicy:
    """Descriptor for a block-size sweep grid.

    kind="step": arithmetic grid from min to max with the given step, with
    max always included. kind="divisors": divisors of N within [min, max],
    so every candidate divides N exactly.
    """

    kind: str  # "step" | "divisors"
    min: int = 1
    max: int | None = None
    step: int | None = None


def candidate_block_sizes(cfg_template: ProtocolConfig, policy: GridPolicy) -> list[int]:
    """Enumerate a strictly increasing grid of valid block sizes."""
    hi = cfg_template.N if policy.max is None else policy.max
    lo = policy.min
    if policy.kind == "divisors":
        values = [k for k in range(1, cfg_template.N + 1) if cfg_template.N % k == 0]
        values = [v for v in values if lo <= v <= hi]
    elif policy.kind == "step":
        if policy.step is None or policy.step < 1:
            raise ConfigurationError("step grid requires a positive step")
        values = list(range(lo, hi + 1, policy.step))
        if values and values[-1] != hi:
            values.append(hi)
    else:
        raise ConfigurationError(f"unknown grid kind {policy.kind!r}")
    if not values:
        raise ConfigurationError(
            f"empty block-size grid for min={lo}, max={hi}, kind={policy.kind!r}"
        )
    for v in values:
        # raises ConfigurationError naming the constraint if invalid
        cfg_template.with_block_size(v)
    return values
