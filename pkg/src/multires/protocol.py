"""Finite-n bookkeeping of the energy/entanglement interconversion protocol.

The bank holds ``n`` copies of ``rho_in = p0 |s><s| + (1-p0) |t1><t1|``.  Three
stages move ``r`` singlets into the entanglement battery while the energy
battery absorbs every change of the bank energy:

1. typicalise: ``rho_in^n -> sigma_mm^{n h(p0)} ⊗ singlet^{n (1-h(p0))}``;
2. swap ``r`` singlets with ``sigma_mm`` cells of the entanglement battery;
3. re-typicalise to ``rho_fin^n`` with ``h(p0') = h(p0) + r/n``.

Counts are kept as real numbers (the monotone ledger); a parallel integer
ledger rounds them and reports the residue.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernels import binary_entropy_upper_inverse
from .quantum import binary_entropy


class ProtocolError(ValueError):
    """Infeasible exchange or insufficient battery capacity."""


def _dh(p: float) -> float:
    return math.log2((1 - p) / p)


def solve_p0_prime(p0: float, r: int, n: int, tol: float = 1e-12) -> float:
    """The ``p0' in [1/2, 1]`` with ``h(p0') = h(p0) + r/n`` (bisection, then Newton polish)."""
    if not 0.5 < p0 < 1.0:
        raise ProtocolError(f"p0={p0} must lie in (1/2, 1)")
    if n < 1:
        raise ProtocolError("n must be positive")
    if r == 0:
        return float(p0)
    target = binary_entropy(p0) + r / n
    if target > 1.0 + 1e-15 or target < -1e-15:
        raise ProtocolError(f"target entropy {target:.6g} outside [0, 1] (n={n}, r={r})")
    target = min(max(target, 0.0), 1.0)
    p = binary_entropy_upper_inverse(target, tol)
    for _ in range(3):
        if not 0.5 < p < 1.0:
            break
        d = _dh(p)
        if d == 0:
            break
        q = p - (binary_entropy(p) - target) / d
        if not 0.5 <= q <= 1.0 or abs(q - p) > 10 * tol:
            break
        p = q
    return float(p)


@dataclass
class BatteryLedger:
    """Energy battery ``(m cells, k ground)`` and entanglement battery ``(l cells, h singlets)``."""

    m: float
    k: float
    l: float
    h: float

    def __post_init__(self):
        if not (0 <= self.k <= self.m and 0 <= self.h <= self.l):
            raise ProtocolError(f"invalid ledger {self}")


@dataclass
class ProtocolStep:
    stage: str
    bank: dict
    batteries: dict
    totals: dict


@dataclass
class ProtocolTrace:
    n: int
    p0_initial: float
    p0_final: float
    r: int
    dW_E: float
    dW_W: float
    delta_n: float
    E0: float
    E1: float
    steps: list = field(default_factory=list)
    integer_ledger: dict = field(default_factory=dict)
    rounding_residue: float = 0.0

    @property
    def rate(self) -> float:
        return self.dW_W / self.dW_E if self.dW_E else math.nan

    @property
    def asymptotic_rate(self) -> float:
        return -(self.E1 - self.E0) / math.log2(self.p0_initial / (1 - self.p0_initial))

    @property
    def rate_error(self) -> float:
        return abs(self.rate - self.asymptotic_rate) if self.dW_E else 0.0

    def conservation_residuals(self) -> tuple[float, float]:
        """Largest drift of total energy and total entanglement across stages."""
        e = [s.totals["energy"] for s in self.steps]
        q = [s.totals["entanglement"] for s in self.steps]
        return max(e) - min(e), max(q) - min(q)

    def to_text(self) -> str:
        lines = [
            f"# protocol n={self.n} p0={self.p0_initial!r} r={self.r} E0={self.E0!r} E1={self.E1!r}",
            f"p0_final={self.p0_final!r} dW_W={self.dW_W!r} dW_E={self.dW_E!r} delta_n={self.delta_n!r}",
        ]
        for s in self.steps:
            lines.append(f"[{s.stage}] bank={s.bank} batteries={s.batteries} totals={s.totals}")
        lines.append(f"integer_ledger={self.integer_ledger} rounding_residue={self.rounding_residue!r}")
        return "\n".join(lines)


def delta_n_linear(n: int, p0: float, p0p: float) -> float:
    """``n [E_S(rho_fin) - E_S(rho_in)]`` with ``E_S`` the linear combination of ``E_css`` and ``M_H``.

    The energy gap cancels: ``n [h(p0) - h(p0') + log2(p0/(1-p0)) (p0 - p0')]``.
    """
    return n * (binary_entropy(p0) - binary_entropy(p0p) + math.log2(p0 / (1 - p0)) * (p0 - p0p))


def run_interconversion(n: int, p0: float, r: int, E0: float = 0.0, E1: float = 1.0,
                        ledger: BatteryLedger | None = None) -> ProtocolTrace:
    """Simulate the three protocol stages with exact real-valued bookkeeping."""
    if not E0 < E1:
        raise ProtocolError("need E0 < E1")
    if not 0.5 < p0 < 1.0:
        raise ProtocolError(f"p0={p0} must lie in (1/2, 1)")
    r = int(r)
    de = E1 - E0
    h0 = float(binary_entropy(p0))
    if r > 0 and n * (1 - h0) < r:
        raise ProtocolError(f"only {n * (1 - h0):.4g} singlets in the typical bank, cannot move r={r}")
    if r < 0 and n * h0 < -r:
        raise ProtocolError(f"only {n * h0:.4g} sigma_mm cells in the typical bank, cannot absorb {-r} singlets")
    p0p = solve_p0_prime(p0, r, n)
    if ledger is None:
        ledger = BatteryLedger(m=2 * n + 2, k=n + 1, l=2 * abs(r) + 1, h=abs(r))

    # bank energies measured from n E0; bank entanglement in singlet units
    u0 = n * (1 - p0) * de
    u1 = n * h0 * de / 2
    u2 = (n * h0 + r) * de / 2
    u3 = n * (1 - p0p) * de
    q0 = n * (1 - h0)
    q2 = n * (1 - h0) - r
    q3 = n * (1 - float(binary_entropy(p0p)))

    k, h = ledger.k, ledger.h
    steps = []

    def record(stage, bank, u, q, kk, hh):
        bat_energy = (ledger.m - kk) * de
        steps.append(
            ProtocolStep(
                stage,
                bank,
                {"energy_k": kk, "energy_m": ledger.m, "ent_h": hh, "ent_l": ledger.l},
                {"energy": u + bat_energy, "entanglement": q + hh},
            )
        )
        if not (0 <= kk <= ledger.m):
            need = max(kk - ledger.m, -kk)
            raise ProtocolError(f"energy battery capacity exceeded at {stage}: need {need:.4g} more cells")
        if not (0 <= hh <= ledger.l):
            raise ProtocolError(f"entanglement battery capacity exceeded at {stage}: h={hh} not in [0, {ledger.l}]")

    record("initial", {"state": f"rho_in(p0={p0!r})^{n}", "energy": u0, "E_css": q0}, u0, q0, k, h)
    k1 = k + (u1 - u0) / de
    record("typicalise", {"state": f"sigma_mm^{n * h0:.6g} ⊗ singlet^{q0:.6g}", "energy": u1, "E_css": q0}, u1, q0, k1, h)
    k2 = k1 + (u2 - u1) / de
    h2 = h + r
    record("swap", {"state": f"sigma_mm^{n * h0 + r:.6g} ⊗ singlet^{q2:.6g}", "energy": u2, "E_css": q2}, u2, q2, k2, h2)
    k3 = k2 + (u3 - u2) / de
    record("retypicalise", {"state": f"rho_fin(p0'={p0p!r})^{n}", "energy": u3, "E_css": q3}, u3, q3, k3, h2)

    dk = k3 - k
    dW_W = -dk * de + 0.0
    ints = {
        "sigma_mm_cells": round(n * h0),
        "bank_singlets": round(q0),
        "dk_stage1": round(k1 - k),
        "dk_stage2": round(k2 - k1),
        "dk_stage3": round(k3 - k2),
    }
    residue = abs(sum(ints[x] for x in ("dk_stage1", "dk_stage2", "dk_stage3")) - dk) * de
    return ProtocolTrace(
        n, float(p0), p0p, r, float(r), dW_W, delta_n_linear(n, p0, p0p), E0, E1, steps, ints, residue
    )


@dataclass
class ScalingTable:
    p0: float
    r: int
    rows: list
    slope_delta: float
    slope_rate_error: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "dW_W", "dW_E", "delta_n", "rate_error"])
        for row in self.rows:
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
        return buf.getvalue()


def _loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def back_action_scaling(p0: float, r: int, n_list: Sequence[int], E0: float = 0.0, E1: float = 1.0) -> ScalingTable:
    """``(n, dW_W, dW_E, delta_n, rate_error)`` per ``n`` plus log-log slopes."""
    rows = []
    for n in n_list:
        t = run_interconversion(int(n), p0, r, E0, E1)
        rows.append((int(n), t.dW_W, t.dW_E, t.delta_n, t.rate_error))
    ns = [row[0] for row in rows]
    return ScalingTable(
        p0, r, rows, _loglog_slope(ns, [row[3] for row in rows]), _loglog_slope(ns, [row[4] for row in rows])
    )
