"""Coefficient schedules and the index bookkeeping of the construction.

Indices are 1-based throughout (a_1 is the first coefficient).  Schedules
are stored sparsely: sorted nonzero indices, their values and prefix sums
of |a_n| and |a_n|^2, so block sums over huge index ranges are O(log n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circle_core import GaugeFunction, psi_generalized_inverse


def _parse_complex(v) -> complex:
    if isinstance(v, dict):
        if set(v) - {"re", "im"}:
            raise ValueError("complex values are given as {re, im}")
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    return complex(v)


def _complex_config(z: complex):
    return {"re": z.real, "im": z.imag}


@dataclass(frozen=True)
class CoefficientSchedule:
    """Sparse a_n for 1 <= n <= horizon; entries not listed are zero."""

    indices: np.ndarray
    values: np.ndarray
    horizon: int
    kind: str = "explicit"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=complex)
        if idx.shape != val.shape:
            raise ValueError("indices and values differ in length")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 1 or idx[-1] > self.horizon):
            raise ValueError("indices must be strictly increasing within [1, horizon]")
        keep = val != 0
        idx, val = idx[keep], val[keep]
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        object.__setattr__(self, "_abs_prefix", np.concatenate([[0.0], np.cumsum(np.abs(val))]))
        object.__setattr__(self, "_sq_prefix", np.concatenate([[0.0], np.cumsum(np.abs(val) ** 2)]))

    # -- access
    def _span(self, lo: int, hi: int):
        """Positions in the sparse arrays of indices in [lo, hi]."""
        if hi > self.horizon:
            raise ValueError(f"index {hi} beyond materialised horizon {self.horizon}")
        i = int(np.searchsorted(self.indices, lo, side="left"))
        j = int(np.searchsorted(self.indices, hi, side="right"))
        return i, max(i, j)

    def value(self, n: int) -> complex:
        i, j = self._span(n, n)
        return complex(self.values[i]) if j > i else 0j

    def abs_sum(self, lo: int, hi: int) -> float:
        """sum_{n=lo}^{hi} |a_n| (empty when hi < lo)."""
        if hi < lo:
            return 0.0
        i, j = self._span(lo, hi)
        return float(self._abs_prefix[j] - self._abs_prefix[i])

    def square_sum(self, lo: int, hi: int) -> float:
        if hi < lo:
            return 0.0
        i, j = self._span(lo, hi)
        return float(self._sq_prefix[j] - self._sq_prefix[i])

    def block(self, lo: int, hi: int):
        """(indices, values) of the nonzero coefficients with lo <= n <= hi."""
        if hi < lo:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex)
        i, j = self._span(lo, hi)
        return self.indices[i:j], self.values[i:j]

    def dense(self, upto: int | None = None) -> np.ndarray:
        """a_1..a_upto as a dense array (position n-1 holds a_n)."""
        upto = self.horizon if upto is None else upto
        out = np.zeros(upto, dtype=complex)
        idx, val = self.block(1, upto)
        out[idx - 1] = val
        return out

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def to_config(self) -> dict:
        if self.kind == "explicit":
            return {"kind": "explicit",
                    "values": [_complex_config(complex(v)) for v in self.dense()]}
        return {"kind": self.kind, **self.params}


def explicit_schedule(values) -> CoefficientSchedule:
    vals = np.array([_parse_complex(v) for v in values], dtype=complex)
    return CoefficientSchedule(np.arange(1, vals.size + 1), vals, max(int(vals.size), 1))


def paper_example_schedule(outer: "OuterSequences", beta: float = 0.5) -> CoefficientSchedule:
    """a_n = 1/k at n = Mbar_k, zero elsewhere, through the outer horizon."""
    k = np.arange(1, len(outer.Mbar) + 1)
    return CoefficientSchedule(np.asarray(outer.Mbar, dtype=np.int64), 1.0 / k,
                               outer.horizon_index, kind="paper_example",
                               params={"beta": beta})


# ---------------------------------------------------------------- outer sequences

def compute_epsilons(g: GaugeFunction, C: float, k_max: int) -> list:
    """eps_k = min{C, psi^-1(C^-(k+1)) / psi^-1(C^-k)} / 4 for k = 1..k_max."""
    if not (0 < C < 1):
        raise ValueError("C must lie in (0, 1)")
    if not g.check()["psi_unbounded"]:
        raise ValueError("psi of the gauge is bounded")
    out = []
    for k in range(1, k_max + 1):
        if g.kind == "power":
            # closed form keeps the ratio exact for large k
            ratio = C ** (1.0 / (1.0 - g.s))
        else:
            lo_val = psi_generalized_inverse(g, C ** -(k + 1))
            hi_val = psi_generalized_inverse(g, C ** -k)
            if lo_val <= 1e-300:
                raise ValueError(f"psi inverse underflows at k={k}")
            ratio = lo_val / hi_val
        out.append(0.25 * min(C, ratio))
    return out


@dataclass(frozen=True)
class OuterSequences:
    eps: tuple
    G: tuple
    Mbar: tuple       # Mbar_1 .. Mbar_{k_max+1}
    Nbar: tuple       # Nbar_1 .. Nbar_{k_max}
    Q: int
    N: int
    C: float
    C0: float
    K: float

    @property
    def k_max(self) -> int:
        return len(self.Nbar)

    @property
    def horizon_index(self) -> int:
        """Last index any block up to k_max can touch."""
        return self.Mbar[-1] + self.G[-1] + self.N * self.Q

    def mbar(self, k: int) -> int:
        return self.Mbar[k - 1]

    def nbar(self, k: int) -> int:
        return self.Nbar[k - 1]


def minimal_G(K: float, C0: float, Q: int, eps: float) -> int:
    """First positive integer G with K * C0^-G * C0^Q <= eps."""
    def ok(G):
        return math.log(K) + (Q - G) * math.log(C0) <= math.log(eps) + 1e-12

    G = max(1, math.ceil(Q + (math.log(K) - math.log(eps)) / math.log(C0) - 1e-9))
    while G > 1 and ok(G - 1):
        G -= 1
    while not ok(G):
        G += 1
    return G


def compute_outer_sequences(g: GaugeFunction, C0: float, c: float, d: int, K: float,
                            Q: int, N: int, k_max: int) -> OuterSequences:
    """eps_k, G_k and the long blocks [Mbar_k, Nbar_k] with Mbar_1 = 1."""
    if not C0 > 1:
        raise ValueError("C0 must exceed 1")
    C = c / (2 * d)
    eps = compute_epsilons(g, C, k_max + 1)
    G = [minimal_G(K, C0, Q, e) for e in eps]
    Mbar, Nbar = [1], []
    for k in range(k_max):
        Nbar.append(Mbar[k] + G[k])
        Mbar.append(Nbar[k] + N * Q)
    return OuterSequences(tuple(eps), tuple(G), tuple(Mbar), tuple(Nbar), int(Q), int(N),
                          C, float(C0), float(K))


# ---------------------------------------------------------------- inner sequences

@dataclass(frozen=True)
class InnerSequences:
    t: tuple          # t_1 .. t_{k_max}
    M: tuple          # M_1 .. M_{k_max+1}
    N_idx: tuple      # N_1 .. N_{k_max}
    Q: int
    N: int

    def m(self, k: int) -> int:
        return self.M[k - 1]

    def n(self, k: int) -> int:
        return self.N_idx[k - 1]


def select_inner_sequences(a: CoefficientSchedule, outer: OuterSequences) -> InnerSequences:
    """t_k minimises the length-Q short block after Nbar_k (ties go to the smallest t)."""
    Q, N = outer.Q, outer.N
    ts, Ms, Ns = [], [1], []
    for k in range(1, outer.k_max + 1):
        nb = outer.nbar(k)
        sums = [a.abs_sum(nb + (t - 1) * Q, nb + t * Q - 1) for t in range(1, N + 1)]
        t = int(np.argmin(sums)) + 1
        ts.append(t)
        Ns.append(nb + (t - 1) * Q)
        Ms.append(nb + t * Q)
    return InnerSequences(tuple(ts), tuple(Ms), tuple(Ns), Q, N)


# ---------------------------------------------------------------- hypotheses

ANCHORS = {
    "FirstInequalityN": "(c beta / 2 sqrt 3)(1 + 2/(N-1))^-1 - 2/(N-1) > 0",
    "SecondInequalityN": "c / (2 sqrt(3(NQ+1)))(1 + 2/(N-1))^-1 - 2/(N-1) > 0",
    "LongBlockTendingToZero": "lim sum_{Mbar_k}^{Nbar_k - 1} |a_n| = 0",
    "LongBlockReverseCauchy": "(sum |a_n|^2)^(1/2) >= beta sum |a_n| on long blocks",
    "NonSummable": "sum |a_n| = infinity",
}


@dataclass
class HypothesisReport:
    beta: float
    N: int
    beta1: float
    R: float
    r: float
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c["status"] == "pass" for c in self.checks.values())

    def first_failure(self):
        for name, c in self.checks.items():
            if c["status"] != "pass":
                return name
        return None


def beta_one(beta: float, N: int, Q: int) -> float:
    return min(beta, 1.0 / math.sqrt(N * Q + 1)) / (2 * math.sqrt(3))


def _tail_factor(N: int):
    if N < 2:
        return None
    return 1.0 / (1.0 + 2.0 / (N - 1)), 2.0 / (N - 1)


def check_hypotheses(a: CoefficientSchedule, outer: OuterSequences, beta: float, c: float,
                     horizon_k: int, tolerance: float = 1e-3,
                     summable_tolerance: float = 1e-3) -> HypothesisReport:
    """Evaluate the four conditions on (beta, N, a_n) plus the nonsummability gate.

    ``c`` plays the role of the constant in the two inequalities (the
    covering constant C = c/(2d) when called from the construction).
    Limits are replaced by finite-horizon surrogates and labelled as such.
    """
    if horizon_k < 3:
        raise ValueError("horizon_k must be >= 3")
    if horizon_k > outer.k_max:
        raise ValueError("outer sequences are shorter than horizon_k")
    N, Q = outer.N, outer.Q
    checks = {}
    tf = _tail_factor(N)
    b1 = beta_one(beta, N, Q)
    if tf is None:
        first = second = R = -math.inf
    else:
        factor, tail = tf
        first = c * beta / (2 * math.sqrt(3)) * factor - tail
        second = c / (2 * math.sqrt(3 * (N * Q + 1))) * factor - tail
        R = c * b1 * factor - tail
    checks["FirstInequalityN"] = {"status": "pass" if first > 0 else "fail", "margin": first}
    checks["SecondInequalityN"] = {"status": "pass" if second > 0 else "fail", "margin": second}

    long_sums = np.array([a.abs_sum(outer.mbar(k), outer.nbar(k) - 1) for k in range(1, horizon_k + 1)])
    long_sq = np.array([a.square_sum(outer.mbar(k), outer.nbar(k) - 1) for k in range(1, horizon_k + 1)])
    rc_margin = float(np.min(np.sqrt(long_sq) - beta * long_sums))
    checks["LongBlockReverseCauchy"] = {"status": "pass" if rc_margin >= -1e-15 else "fail",
                                        "margin": rc_margin}

    peak = int(np.argmax(long_sums))
    after = long_sums[peak:]
    monotone = bool(np.all(np.diff(after) <= 1e-15))
    last = float(long_sums[-1])
    checks["LongBlockTendingToZero"] = {
        "status": "pass" if (last < tolerance and monotone) else "fail",
        "margin": tolerance - last, "note": "finite-horizon surrogate",
    }

    half = max(1, horizon_k // 2)
    tail_mass = a.abs_sum(outer.mbar(half + 1), outer.mbar(horizon_k + 1) - 1) \
        if horizon_k + 1 <= len(outer.Mbar) else a.abs_sum(outer.mbar(half + 1), a.horizon)
    checks["NonSummable"] = {
        "status": "pass" if tail_mass >= summable_tolerance else "fail",
        "margin": tail_mass - summable_tolerance, "note": "finite-horizon surrogate",
    }
    for name, chk in checks.items():
        chk["anchor"] = ANCHORS[name]
    # steering contraction constant, see cantor.steer_block
    r = 2.0 * R / 3.0 if R > 0 else 0.0
    return HypothesisReport(beta, N, b1, R, r, checks)


def block_inequalities(a: CoefficientSchedule, inner: InnerSequences, k1: int, k2: int,
                       beta: float) -> dict:
    """Evaluate both sides of the three block estimates between k1 and k2."""
    if not k1 < k2:
        raise ValueError("need k1 < k2")
    N = inner.N
    long_total = sum(a.abs_sum(inner.m(k), inner.n(k)) for k in range(k1, k2 + 1))
    short_total = sum(a.abs_sum(inner.n(k) + 1, inner.m(k + 1) - 1) for k in range(k1, k2))
    first_rhs = (N - 1) / 2 * short_total
    whole = a.abs_sum(inner.m(k1), inner.n(k2))
    second_rhs = (1 + 2 / (N - 1)) * long_total
    b1 = beta_one(beta, N, inner.Q)
    rc = [math.sqrt(a.square_sum(inner.m(k), inner.n(k))) - b1 * a.abs_sum(inner.m(k), inner.n(k))
          for k in range(k1, k2 + 1)]
    tol = 1e-12 * max(1.0, whole)
    return {
        "FirstBoundWithLongBlocks": {"lhs": long_total, "rhs": first_rhs,
                                     "holds": long_total >= first_rhs - tol},
        "SecondBoundWithLongBlocks": {"lhs": whole, "rhs": second_rhs,
                                      "holds": whole <= second_rhs + tol},
        "CoefficientsReverseCauchy": {"min_margin": min(rc), "holds": min(rc) >= -tol},
    }
