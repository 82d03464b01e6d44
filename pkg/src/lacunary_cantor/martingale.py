"""The nu-adic martingale of F(z) = sum a_n z^(nu^n) and the optimality construction.

Level-n arcs are [k nu^-(n+1), (k+1) nu^-(n+1)).  Under z -> z^(nu^j) such an
arc maps onto the level-(n-j) arc with index k mod nu^(n-j+1), and averages
of z over an arc of length L centred at theta equal e^(2 pi i theta) sinc(L).
So M_n on arc k is

    sum_{j <= n} a_j * sinc(nu^-(n-j+1)) * exp(2 pi i ((k mod nu^(n-j+1)) + 1/2) / nu^(n-j+1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .circle_core import TAU, Arc, GaugeFunction, turn_to_point


def arc_average_z(arc: Arc) -> complex:
    """(1/m(I)) * integral of z over I, from the endpoint formula."""
    if arc.is_full:
        return 0j
    integral = -1j / TAU * (arc.z_plus - arc.z_minus)
    return complex(integral / float(arc.length))


def sinc_length(nu: int, m):
    """|average of z| over an arc of length nu^-m."""
    m = np.asarray(m, dtype=float)
    return np.sinc(np.power(float(nu), -m))


@dataclass(frozen=True)
class NuAdicArc:
    nu: int
    level: int
    index: int

    def __post_init__(self):
        if not (0 <= self.index < self.nu ** (self.level + 1)):
            raise ValueError("index out of range for this level")

    @property
    def start(self) -> Fraction:
        return Fraction(self.index, self.nu ** (self.level + 1))

    @property
    def length(self) -> Fraction:
        return Fraction(1, self.nu ** (self.level + 1))

    def as_arc(self) -> Arc:
        return Arc(self.start, self.length)


@dataclass
class MartingaleState:
    nu: int
    a: np.ndarray                   # a[n-1] = a_n
    tau: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.nu < 2:
            raise ValueError("nu must be >= 2")
        self.a = np.asarray(self.a, dtype=complex)
        self.tau = np.flatnonzero(self.a) + 1
        self._sigma2 = None

    @property
    def horizon(self) -> int:
        return int(self.a.size)

    def coefficient(self, n: int) -> complex:
        return complex(self.a[n - 1]) if 1 <= n <= self.horizon else 0j

    # -- closed-form second moments
    def sigma2_levels(self) -> np.ndarray:
        """sigma(N)^2 for N = 0..horizon (orthogonality of the terms)."""
        if self._sigma2 is None:
            H = self.horizon
            out = np.zeros(H + 1)
            tau = self.tau
            w = np.abs(self.a[tau - 1]) ** 2
            for N in range(1, H + 1):
                sel = tau <= N
                if np.any(sel):
                    out[N] = float(np.sum(w[sel] * sinc_length(self.nu, N - tau[sel] + 1) ** 2))
            self._sigma2 = out
        return self._sigma2

    def increment_norms2(self) -> np.ndarray:
        """||Delta M_n||_2^2 for n = 1..horizon (position n-1)."""
        return np.diff(self.sigma2_levels())

    def sigma_bar2_levels(self) -> np.ndarray:
        """sigma_bar(N, tau)^2 for N = 0..horizon."""
        inc = self.increment_norms2()
        mask = np.zeros(self.horizon, dtype=bool)
        mask[self.tau - 1] = True
        return np.concatenate([[0.0], np.cumsum(np.where(mask, inc, 0.0))])


def martingale_state(nu: int, coefficients) -> MartingaleState:
    return MartingaleState(nu, np.asarray(coefficients, dtype=complex))


def level_values(s: MartingaleState, n: int) -> np.ndarray:
    """M_n on every level-n arc (array indexed by k); feasible for nu^(n+1) <= ~2^22."""
    nu = s.nu
    if nu ** (n + 1) > 1 << 24:
        raise ValueError("level too deep for full enumeration")
    k = np.arange(nu ** (n + 1), dtype=np.int64)
    out = np.zeros(k.size, dtype=complex)
    for j in s.tau[s.tau <= n]:
        m = n - int(j) + 1
        period = nu ** m
        phase = ((k % period) + 0.5) / period
        out += s.a[j - 1] * sinc_length(nu, m) * np.exp(1j * TAU * phase)
    return out


def martingale_value(s: MartingaleState, n: int, arc: NuAdicArc) -> complex:
    """M_n on one arc via exact rational image arcs."""
    if arc.level != n or arc.nu != s.nu:
        raise ValueError("arc does not belong to level n")
    total = 0j
    for j in s.tau[s.tau <= n]:
        j = int(j)
        image = Arc(arc.start * s.nu ** j, arc.length * s.nu ** j)
        total += s.a[j - 1] * arc_average_z(image)
    return total


def increments(s: MartingaleState, n: int) -> np.ndarray:
    """Delta M_n on every level-n arc."""
    prev = level_values(s, n - 1) if n >= 1 else None
    cur = level_values(s, n)
    if prev is None:
        return cur
    return cur - np.repeat(prev, s.nu)


def variance(s: MartingaleState, N: int):
    """(sigma(N)^2, sigma_bar(N, tau)^2) from the closed form."""
    return float(s.sigma2_levels()[N]), float(s.sigma_bar2_levels()[N])


def variance_by_enumeration(s: MartingaleState, N: int) -> dict:
    """sigma(N)^2 and sum of increment norms from the arc values themselves."""
    prev = np.zeros(s.nu, dtype=complex)
    sum_inc = 0.0
    worst_mean_gap = 0.0
    for n in range(0, N + 1):
        cur = level_values(s, n)
        if n >= 1:
            parents = cur.reshape(-1, s.nu).mean(axis=1)
            worst_mean_gap = max(worst_mean_gap, float(np.max(np.abs(parents - prev))))
            sum_inc += float(np.mean(np.abs(cur - np.repeat(prev, s.nu)) ** 2))
        prev = cur
    sigma2 = float(np.mean(np.abs(prev) ** 2))
    return {"sigma2": sigma2, "sum_increments": sum_inc, "martingale_gap": worst_mean_gap}


def n_bar(s: MartingaleState, k: int):
    """First N with sigma_bar(N)^2 >= k, or math.inf past the horizon."""
    if k < 1:
        raise ValueError("k must be >= 1")
    sb = s.sigma_bar2_levels()
    hit = np.flatnonzero(sb >= k)
    return int(hit[0]) if hit.size else math.inf


def increment_bound_check(s: MartingaleState, n: int, m: int) -> dict:
    """max over level-n arcs of ||Delta M_n| - c|a_n|| and the scaled value times nu^m."""
    if np.max(np.abs(s.a)) > 1 + 1e-15:
        raise ValueError("increment bound needs |a_k| <= 1")
    for j in range(max(1, n - m), n):
        if s.coefficient(j) != 0:
            raise ValueError(f"a_{j} must vanish for a gap of {m}")
    c = float(sinc_length(s.nu, 1))
    dev = np.abs(np.abs(increments(s, n)) - c * abs(s.coefficient(n)))
    worst = float(np.max(dev))
    return {"n": n, "m": m, "c": c, "deviation": worst, "scaled": worst * s.nu ** m}


def increment_bound_sweep(nu: int, gaps=range(2, 13), prefix: int = 1) -> dict:
    """Deviation of |Delta M_N| from c|a_N| with a_1..a_prefix = 1, a zero gap, then a_N = 1."""
    rows = []
    for m in gaps:
        N = prefix + m + 1
        a = np.zeros(N, dtype=complex)
        a[:prefix] = 1.0
        a[N - 1] = 1.0
        rows.append(increment_bound_check(martingale_state(nu, a), N, m))
    ms = np.array([r["m"] for r in rows], dtype=float)
    devs = np.array([r["deviation"] for r in rows])
    slope = float(np.polyfit(ms, np.log(devs), 1)[0])
    return {"rows": rows, "slope": slope, "C_hat": max(r["scaled"] for r in rows)}


# ---------------------------------------------------------------- optimality generator

def gauge_surrogates(g: GaugeFunction, x_max: float = 50_000.0) -> dict:
    """Finite surrogates for phi being below every power t^s yet above t.

    Works in x = log(1/t).  psi(t) t^s -> 0 becomes "log psi - s x strictly
    decreasing on the deepest third of the grid"; t/phi(t) -> 0 becomes
    "log psi strictly increasing there".
    """
    x = np.linspace(0.0, x_max, 30_001)
    lpsi = g.log_psi_neglog(x)
    tail = slice(2 * x.size // 3, None)
    out = {}
    for s in (0.5, 0.1, 0.01):
        h = lpsi - s * x
        out[f"restrictive_s={s}"] = bool(np.all(np.diff(h[tail]) < 0))
    out["below_lebesgue"] = bool(np.all(np.diff(lpsi[tail]) > 0))
    # a power t^s is never below every power, whatever the finite grid says
    out["not_a_power"] = g.kind != "power"
    return out


def psi_threshold(g: GaugeFunction, exponent: float, x_max: float = 1e9) -> float:
    """Smallest x >= 0 with log psi(e^-y) <= exponent * y for every y >= x.

    This is log(1/t_l) for the threshold t_l of psi(t) <= t^-exponent.
    """
    ys = np.concatenate([[0.0], np.logspace(-6, math.log10(x_max), 200_000)])
    h = g.log_psi_neglog(ys) - exponent * ys
    if h[-1] > 0:
        raise ValueError(f"psi(t) <= t^-{exponent} does not hold by log(1/t) = {x_max}")
    bad = np.flatnonzero(h > 0)
    if bad.size == 0:
        return 0.0
    lo, hi = ys[bad[-1]], ys[bad[-1] + 1]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g.log_psi_neglog(mid) - exponent * mid > 0:
            lo = mid
        else:
            hi = mid
    return float(hi)


@dataclass
class OptimalityRun:
    nu: int
    m0: int
    c: float
    c0: float
    C_lemma: float
    thresholds: list          # log(1/t_l)
    blocks: list              # per-block dicts
    coefficients: np.ndarray
    tau: np.ndarray
    state: MartingaleState

    def n_bar(self, k: int):
        return n_bar(self.state, k)


def choose_m0(nu: int, C_lemma: float):
    c = float(sinc_length(nu, 1))
    m0 = 1
    while c - C_lemma / nu ** (m0 - 1) <= 0:
        m0 += 1
    return m0, c, c - C_lemma / nu ** (m0 - 1)


def generate_optimality_coefficients(g: GaugeFunction, nu: int, horizon: int, C_hat: float,
                                     safety: float = 2.0) -> OptimalityRun:
    """Block-by-block coefficient construction (magnitudes nu^(-l+1/2), phases 1)."""
    sur = gauge_surrogates(g)
    failed = [k for k, v in sur.items() if not v]
    if failed:
        raise ValueError(f"gauge fails surrogate(s) {failed}")
    C_lemma = safety * C_hat
    m0, c, c0 = choose_m0(nu, C_lemma)
    log_nu = math.log(nu)
    csq = sinc_length(nu, np.arange(0, 80)) ** 2       # csq[m] = c_m^2; beyond 79 it is 1
    a = np.zeros(horizon, dtype=float)
    tau = []
    sb2 = 0.0
    abs_sum = 0.0

    def add(n, value):
        nonlocal sb2, abs_sum
        a[n - 1] = value
        # ||Delta M_n||^2 = |a_n|^2 c_1^2 + sum_{j<n} |a_j|^2 (c_{n-j+1}^2 - c_{n-j}^2)
        inc = value ** 2 * csq[1]
        if tau:
            js = np.asarray(tau)
            ages = n - js + 1
            near = ages < 80
            inc += float(np.sum(a[js[near] - 1] ** 2 * (csq[ages[near]] - csq[ages[near] - 1])))
        tau.append(n)
        sb2 += inc
        abs_sum += value

    blocks, thresholds = [], []
    N_prev, k_prev = 0, 0
    n = 0
    l = 0
    while n < horizon:
        l += 1
        x_l = psi_threshold(g, float(nu) ** (-3 * (l + 1)))
        thresholds.append(x_l)
        if l >= 2 and N_prev * log_nu >= x_l:
            blocks.append({"l": l, "skipped": True, "N_tilde": None, "N_prime": N_prev,
                           "N": N_prev, "k": k_prev, "complete": True})
            continue
        N_tilde = max(N_prev + 1, math.ceil(x_l / log_nu - 1e-12))
        spacing = m0 + l
        hi_mag = 1.0 if l == 1 else float(nu) ** (-l + 1)
        lo_mag = float(nu) ** (-l)
        mag = min(max(float(nu) ** (-l + 0.5), lo_mag), hi_mag)

        def on_grid(idx):
            if l == 1:
                return (idx - 1) % (m0 + 1) == 0
            return (idx - N_prev) % spacing == 0

        N_prime = None
        complete = False
        while n < horizon:
            n += 1
            if on_grid(n):
                add(n, mag)
            if N_prime is None and n >= N_tilde and abs_sum >= l:
                N_prime = n
                target = math.ceil(sb2 - 1e-12)
            if N_prime is not None and sb2 >= target:
                complete = True
                break
        k_l = math.floor(sb2 + 1e-12) if complete else None
        blocks.append({"l": l, "skipped": False, "N_tilde": N_tilde, "N_prime": N_prime,
                       "N": n, "k": k_l, "complete": complete, "spacing": spacing,
                       "magnitude": mag})
        if not complete:
            if l == 1:
                raise ValueError("horizon too small to complete block 1")
            break
        N_prev, k_prev = n, k_l
    state = martingale_state(nu, a)
    return OptimalityRun(nu, m0, c, c0, C_lemma, thresholds, blocks, a, np.asarray(tau), state)


def n_to_variance_check(run: OptimalityRun) -> dict:
    """k >= c0^2 nu^(-2l) / (2(m0+l+1)) * Nbar(k) for every k attributed to block l."""
    rows, k_prev = [], 0
    for b in run.blocks:
        if not b["complete"]:
            break
        l = b["l"]
        for k in range(k_prev + 1, b["k"] + 1):
            nb = run.n_bar(k)
            rhs = run.c0 ** 2 * float(run.nu) ** (-2 * l) / (2 * (run.m0 + l + 1)) * nb
            rows.append({"k": k, "l": l, "n_bar": nb, "rhs": rhs, "holds": k >= rhs})
        k_prev = b["k"]
    return {"rows": rows, "failures": sum(not r["holds"] for r in rows)}


def psi_estimate_check(run: OptimalityRun, g: GaugeFunction) -> dict:
    """log psi(nu^-Nbar(k)) <= 2(m0+l+1) nu^-l k / c0^2 * log nu for blocks l >= 2."""
    rows, k_prev = [], 0
    log_nu = math.log(run.nu)
    for b in run.blocks:
        if not b["complete"]:
            break
        l = b["l"]
        if l >= 2:
            for k in range(k_prev + 1, b["k"] + 1):
                nb = run.n_bar(k)
                lhs = float(g.log_psi_neglog(nb * log_nu))
                rhs = 2 * (run.m0 + l + 1) * float(run.nu) ** (-l) * k / run.c0 ** 2 * log_nu
                rows.append({"k": k, "l": l, "n_bar": nb, "log_psi": lhs, "bound": rhs,
                             "holds": lhs <= rhs})
        k_prev = b["k"]
    return {"rows": rows, "failures": sum(not r["holds"] for r in rows)}


# ---------------------------------------------------------------- survivor sets

@dataclass
class SurvivorLevel:
    level: int
    surviving_count: int      # stored arcs
    numerator: int            # measure = numerator / nu^denominator_power
    denominator_power: int
    estimator: str            # exact | thinned

    def measure_fraction(self, nu: int) -> Fraction:
        return Fraction(self.numerator, nu ** self.denominator_power)

    def measure(self, nu: int) -> float:
        return float(self.measure_fraction(nu))


def survivor_measure(s: MartingaleState, R: float, N: int, cap: int = 1 << 17,
                     seed: int = 0, freeze_after: int | None = None) -> list:
    """Level-by-level pruning of {max_{1<=n<=N} |M_n| <= R}.

    Every stored arc carries the same weight nu^J.  When more than ``cap``
    arcs survive a level, a uniformly random subset of floor(S / nu^j) is
    kept and J grows by j; counts stay exact until the first thinning.
    Phases of term j follow the arc digits by
        phi_j(n+1) = phi_j(n) + (d + (1 - nu)/2) nu^-(n-j+2),
    and terms older than ``freeze_after`` levels are folded into a constant
    (their remaining drift is below nu^-freeze_after).
    """
    if R < 0:
        raise ValueError("R must be >= 0")
    if N > s.horizon:
        raise ValueError("N beyond the coefficient horizon")
    nu = s.nu
    rng = np.random.default_rng(seed)
    if freeze_after is None:
        freeze_after = math.ceil(52 * math.log(2) / math.log(nu))
    # level 0: nu arcs, M_0 = 0
    frozen = np.zeros(nu, dtype=complex)
    active_j: list = []
    phases = np.zeros((nu, 0))
    J = 0
    thinned = False
    rows = [SurvivorLevel(0, nu, nu, 1, "exact")]
    shift = (1 - nu) / 2
    for n in range(1, N + 1):
        P = frozen.size
        d = np.tile(np.arange(nu), P)
        frozen = np.repeat(frozen, nu)
        phases = np.repeat(phases, nu, axis=0)
        if active_j:
            ages = np.array([n - j + 1 for j in active_j], dtype=float)
            phases = np.mod(phases + (d[:, None] + shift) * np.power(float(nu), -ages)[None, :], 1.0)
        if s.coefficient(n) != 0:
            active_j.append(n)
            phases = np.concatenate([phases, ((d + 0.5) / nu)[:, None]], axis=1)
        # fold old terms
        keep_cols = []
        for col, j in enumerate(active_j):
            age = n - j + 1
            if age > freeze_after:
                frozen = frozen + s.a[j - 1] * np.exp(1j * TAU * phases[:, col])
            else:
                keep_cols.append(col)
        if len(keep_cols) != len(active_j):
            active_j = [active_j[c] for c in keep_cols]
            phases = phases[:, keep_cols]
        values = frozen.copy()
        for col, j in enumerate(active_j):
            coef = s.a[j - 1] * sinc_length(nu, n - j + 1)
            values += coef * np.exp(1j * TAU * phases[:, col])
        alive = np.abs(values) <= R
        frozen, phases = frozen[alive], phases[alive]
        S = int(frozen.size)
        if S > cap:
            j_thin = 0
            while S // nu ** j_thin > cap:
                j_thin += 1
            K = S // nu ** j_thin
            pick = np.sort(rng.choice(S, size=K, replace=False))
            frozen, phases = frozen[pick], phases[pick]
            J += j_thin
            thinned = True
            S = K
        rows.append(SurvivorLevel(n, S, S, n + 1 - J, "thinned" if thinned else "exact"))
    return rows


def survivor_measure_exact(s: MartingaleState, R: float, N: int) -> list:
    """Full enumeration oracle for small N (exact rational measure per level)."""
    nu = s.nu
    alive = np.ones(nu, dtype=bool)
    rows = [SurvivorLevel(0, nu, nu, 1, "exact")]
    for n in range(1, N + 1):
        alive = np.repeat(alive, nu) & (np.abs(level_values(s, n)) <= R)
        cnt = int(np.sum(alive))
        rows.append(SurvivorLevel(n, cnt, cnt, n + 1, "exact"))
    return rows


def increment_sup_bound(s: MartingaleState, N: int) -> float:
    """Upper bound for max_{n<=N} sup |Delta M_n|^2 from per-term worst cases."""
    nu = s.nu
    best = 0.0
    shifts = np.arange(nu) + (1 - nu) / 2
    D = [0.0, 0.0]
    for m in range(2, N + 2):
        cm, cprev = float(sinc_length(nu, m)), float(sinc_length(nu, m - 1))
        D.append(float(np.max(np.abs(cm * np.exp(1j * TAU * shifts / nu ** m) - cprev))))
    c1 = float(sinc_length(nu, 1))
    for n in range(1, N + 1):
        js = s.tau[s.tau < n]
        bound = abs(s.coefficient(n)) * c1 + float(sum(abs(s.a[j - 1]) * D[n - j + 1] for j in js))
        best = max(best, bound)
    return best ** 2


def kolmogorov_bound_check(s: MartingaleState, R: float, N: int, measure: float,
                           exact_level: int = 16) -> dict:
    """m(A(R,N)) <= (R + K)^2 / sigma(N)^2 with K = max |Delta M_n|^2."""
    if N <= exact_level and s.nu ** (N + 1) <= 1 << 22:
        K = max(float(np.max(np.abs(increments(s, n)) ** 2)) for n in range(1, N + 1))
        how = "exact"
    else:
        K = increment_sup_bound(s, N)
        how = "upper bound"
    sigma2 = float(s.sigma2_levels()[N])
    rhs = (R + K) ** 2 / sigma2 if sigma2 > 0 else math.inf
    return {"R": R, "N": N, "measure": measure, "K": K, "K_source": how, "sigma2": sigma2,
            "bound": rhs, "holds": measure <= rhs}


def decay_regression(ks, measures) -> dict:
    """Least-squares fit of log m(A) against k."""
    ks = np.asarray(ks, dtype=float)
    y = np.log(np.asarray(measures, dtype=float))
    slope, intercept = np.polyfit(ks, y, 1)
    fit = intercept + slope * ks
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2,
            "C": math.exp(intercept), "c": math.exp(slope)}
