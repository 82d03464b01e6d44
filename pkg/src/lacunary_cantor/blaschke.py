"""Finite Blaschke products fixing the origin.

f(z) = alpha * z**m * prod_n (z - z_n) / (1 - conj(z_n) z)

Boundary quantities (|f'| on the circle, lifts, image lengths) are the
workhorses of the construction.  Products with no zeros and no rotation
(f = z**nu) get exact rational fast paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import optimize

from .circle_core import TAU, Arc, arc_of_point, turn_to_point, wrap_turn


@dataclass(frozen=True)
class BlaschkeProduct:
    rotation_turns: float = 0.0
    origin_multiplicity: int = 1
    zeros: tuple = ()

    def __post_init__(self):
        if int(self.origin_multiplicity) != self.origin_multiplicity or self.origin_multiplicity < 1:
            raise ValueError("origin multiplicity must be an integer >= 1")
        zs = tuple(complex(z) for z in self.zeros)
        for z in zs:
            if abs(z) >= 1.0:
                raise ValueError(f"zero {z} is not inside the unit disk")
        object.__setattr__(self, "zeros", zs)

    # -- basic data
    @property
    def rotation(self) -> complex:
        return complex(np.exp(1j * TAU * self.rotation_turns))

    @property
    def degree(self) -> int:
        return self.origin_multiplicity + len(self.zeros)

    @property
    def is_rotation(self) -> bool:
        return self.origin_multiplicity == 1 and not self.zeros

    @property
    def monomial_degree(self):
        """nu when f = z**nu exactly, else None."""
        if not self.zeros and self.rotation_turns == 0:
            return self.origin_multiplicity
        return None

    # -- serialisation
    def to_config(self) -> dict:
        return {
            "rotation_turns": float(self.rotation_turns),
            "origin_multiplicity": int(self.origin_multiplicity),
            "zeros": [{"re": z.real, "im": z.imag} for z in self.zeros],
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "BlaschkeProduct":
        extra = set(cfg) - {"rotation_turns", "origin_multiplicity", "zeros"}
        if extra:
            raise ValueError(f"unknown blaschke keys {sorted(extra)}")
        zeros = []
        for z in cfg.get("zeros", []):
            if set(z) - {"re", "im"}:
                raise ValueError("zeros are given as {re, im}")
            zeros.append(complex(float(z["re"]), float(z["im"])))
        return cls(float(cfg.get("rotation_turns", 0.0)),
                   int(cfg.get("origin_multiplicity", 1)), tuple(zeros))


def monomial(nu: int) -> BlaschkeProduct:
    return BlaschkeProduct(0.0, nu, ())


def _factors(f: BlaschkeProduct, z):
    return [(z - a) / (1 - np.conj(a) * z) for a in f.zeros]


def _eval(f: BlaschkeProduct, z):
    out = f.rotation * z ** f.origin_multiplicity
    for b in _factors(f, z):
        out = out * b
    return out


def evaluate(f: BlaschkeProduct, z):
    """f(z) for |z| <= 1 (vectorised)."""
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) > 1 + 1e-12):
        raise ValueError("evaluate requires |z| <= 1")
    out = _eval(f, z)
    return out if out.ndim else complex(out)


def derivative(f: BlaschkeProduct, z):
    """Complex derivative f'(z) by the product rule."""
    z = np.asarray(z, dtype=complex)
    m = f.origin_multiplicity
    bs = _factors(f, z)
    dbs = [(1 - abs(a) ** 2) / (1 - np.conj(a) * z) ** 2 for a in f.zeros]
    prod_b = np.ones_like(z)
    for b in bs:
        prod_b = prod_b * b
    dprod = np.zeros_like(z)
    for i, db in enumerate(dbs):
        term = db
        for j, b in enumerate(bs):
            if j != i:
                term = term * b
        dprod = dprod + term
    out = f.rotation * (m * z ** (m - 1) * prod_b + z ** m * dprod)
    return out if out.ndim else complex(out)


def second_derivative(f: BlaschkeProduct, z, h: float = 1e-5):
    """f''(z) by a central difference of the exact first derivative."""
    z = np.asarray(z, dtype=complex)
    return (derivative(f, z + h) - derivative(f, z - h)) / (2 * h)


def derivative_modulus_on_circle(f: BlaschkeProduct, xi):
    """|f'(xi)| = m + sum (1-|z_n|^2)/|xi - z_n|^2 for xi on the circle (turns)."""
    pt = turn_to_point(xi)
    out = f.origin_multiplicity + np.zeros(np.shape(pt))
    for a in f.zeros:
        out = out + (1 - abs(a) ** 2) / np.abs(pt - a) ** 2
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class IterateConstants:
    K_min: float
    K_max: float
    C2_max: float
    degree: int


def _refine_extreme(func, grid_t, values, sign, tol):
    i = int(np.argmin(sign * values))
    h = 1.0 / len(grid_t)
    res = optimize.minimize_scalar(lambda t: sign * func(t), bounds=(grid_t[i] - h, grid_t[i] + h),
                                   method="bounded", options={"xatol": tol})
    return min(sign * values[i], res.fun) * sign


def iterate_constants(f: BlaschkeProduct, grid: int = 4096, tol: float = 1e-9) -> IterateConstants:
    """Extremes of |f'| and |f''| on the circle (grid scan plus local refinement)."""
    if f.is_rotation:
        raise ValueError("f is a rotation; |f'| = 1 on the circle")
    t = np.arange(grid) / grid
    d1 = derivative_modulus_on_circle(f, t)
    k_min = _refine_extreme(lambda s: derivative_modulus_on_circle(f, s), t, d1, 1.0, tol)
    k_max = _refine_extreme(lambda s: derivative_modulus_on_circle(f, s), t, d1, -1.0, tol)
    d2 = np.abs(second_derivative(f, turn_to_point(t)))
    c2 = _refine_extreme(lambda s: abs(second_derivative(f, complex(turn_to_point(s)))), t, d2, -1.0, tol)
    if not k_min > 1.0:
        raise ValueError(f"min |f'| = {k_min} is not > 1")
    return IterateConstants(float(k_min), float(k_max), float(c2), f.degree)


def iterate(f: BlaschkeProduct, n: int, z):
    """n-fold composition f^n(z)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) > 1 + 1e-12):
        raise ValueError("iterate requires |z| <= 1")
    on_circle = np.abs(np.abs(z) - 1.0) < 1e-12
    for _ in range(n):
        z = _eval(f, z)
        # keep boundary orbits on the circle
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            z = np.where(on_circle, z / np.abs(z), z)
    return z if z.ndim else complex(z)


def iterate_turns(f: BlaschkeProduct, n: int, t):
    """Turn coordinate of f^n(e^{2 pi i t}); exact for monomials with Fraction input."""
    nu = f.monomial_degree
    if nu is not None and isinstance(t, Fraction):
        return wrap_turn(nu ** n * t)
    pts = iterate(f, n, turn_to_point(t))
    return np.mod(np.angle(pts) / TAU, 1.0)


# ---------------------------------------------------------------- lifts

@dataclass(frozen=True)
class BoundaryLift:
    base: Arc
    g_minus: float
    g_plus: float

    @property
    def increment(self):
        return self.g_plus - self.g_minus


class LiftError(RuntimeError):
    pass


def boundary_lift(f: BlaschkeProduct, arc: Arc, samples: int = 256,
                  max_refinements: int = 16) -> BoundaryLift:
    """Continuous increasing lift of t -> arg f(e^{2 pi i t}) / 2 pi over ``arc``.

    Adjacent samples are refined until every step is below a quarter turn;
    a step that stays above half a turn is reported, never wrapped silently.
    """
    nu = f.monomial_degree
    if nu is not None:
        g0 = nu * arc.start
        return BoundaryLift(arc, g0, g0 + nu * arc.length)
    start, length = float(arc.start), float(arc.length)
    g0 = float(np.angle(evaluate(f, turn_to_point(start))) / TAU)
    count = max(int(samples), 2)
    for _ in range(max_refinements + 1):
        u = np.linspace(0.0, 1.0, count + 1)
        # rotate a base point rather than re-adding start to keep small steps accurate
        pts = complex(turn_to_point(start)) * np.exp(1j * TAU * u * length)
        vals = _eval(f, pts)
        steps = np.angle(vals[1:] * np.conj(vals[:-1])) / TAU
        if np.all(steps > 0) and np.max(steps) < 0.25:
            return BoundaryLift(arc, g0, g0 + float(np.sum(steps)))
        count *= 2
    if np.max(np.abs(steps)) >= 0.5 or np.any(steps <= 0):
        raise LiftError(f"lift of {arc} unresolved after {max_refinements} refinements")
    return BoundaryLift(arc, g0, g0 + float(np.sum(steps)))


def image_arc_measure(f: BlaschkeProduct, n: int, arc: Arc):
    """m(f^n(I)), capped at 1.

    f is injective on arcs whose image is shorter than the circle, so the
    image of f^n is tracked one application at a time.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    nu = f.monomial_degree
    if nu is not None:
        val = nu ** n * arc.length
        return min(val, type(val)(1)) if isinstance(val, Fraction) else min(float(val), 1.0)
    cur = arc
    for _ in range(n):
        lift = boundary_lift(f, cur)
        if lift.increment >= 1.0:
            return 1.0
        cur = Arc(lift.g_minus, lift.increment)
    return float(cur.length)


def image_measure_uncapped(f: BlaschkeProduct, n: int, arc: Arc):
    """Like image_arc_measure but without the cap, for monomials only."""
    nu = f.monomial_degree
    if nu is None:
        return image_arc_measure(f, n, arc)
    return nu ** n * arc.length


def split_arc_by_image_measure(f: BlaschkeProduct, n: int, arc: Arc, target,
                               tol: float = 1e-12) -> Arc:
    """Subarc sharing the clockwise endpoint of ``arc`` with m(f^n(subarc)) = target."""
    if not (0 < target < 1):
        raise ValueError("target must lie in (0, 1)")
    nu = f.monomial_degree
    if nu is not None:
        total = nu ** n * arc.length
        if target > total:
            raise ValueError(f"infeasible target {target} > {total}")
        if isinstance(arc.length, Fraction) and not isinstance(target, float):
            length = Fraction(target) / nu ** n
        else:
            length = float(target) / nu ** n
        return Arc(arc.start, min(length, arc.length))
    total = image_arc_measure(f, n, arc)
    if target > total + tol:
        raise ValueError(f"infeasible target {target} > {total}")
    if abs(total - target) <= tol:
        return arc
    lo, hi = 0.0, float(arc.length)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = image_arc_measure(f, n, Arc(arc.start, mid))
        if abs(val - target) <= tol:
            return Arc(arc.start, mid)
        if val < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17:
            break
    return Arc(arc.start, 0.5 * (lo + hi))


def find_Q(f: BlaschkeProduct, epsilon: float, gamma1: float, grid: int = 4096,
           q_max: int = 100_000) -> int:
    """Smallest Q with max_{|z| = gamma1} |f^Q(z)| < epsilon.

    The maximum modulus principle reduces the disk |z| <= gamma1 to its
    boundary circle; the grid is doubled until two grids agree.
    """
    if not (0 < epsilon < 1 and 0 < gamma1 < 1):
        raise ValueError("epsilon and gamma1 must lie in (0, 1)")

    def q_for(points):
        z = gamma1 * np.exp(1j * TAU * np.arange(points) / points)
        for q in range(1, q_max + 1):
            z = _eval(f, z)
            if np.max(np.abs(z)) < epsilon:
                return q
        raise RuntimeError("iterates did not contract")

    prev = q_for(grid)
    while True:
        grid *= 2
        cur = q_for(grid)
        if cur == prev:
            return cur
        prev = cur


# ---------------------------------------------------------------- series

def series_on_arc(f: BlaschkeProduct, indices, coeffs, arc: Arc, u) -> np.ndarray:
    """Evaluate sum_n a_n f^n(xi) at xi = start + u * length (u in [0, 1]).

    For monomials the phase nu^n * start is reduced exactly, so arcs far
    below float resolution are handled without loss.
    """
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape, dtype=complex)
    indices = list(indices)
    if not indices:
        return out
    nu = f.monomial_degree
    if nu is not None:
        for n, a in zip(indices, coeffs):
            base = wrap_turn(nu ** n * arc.start)
            span = nu ** n * arc.length
            if isinstance(span, Fraction):
                span = float(span % 1) + float(span // 1)
            phase = np.mod(float(base) + u * float(span), 1.0)
            out += a * np.exp(1j * TAU * phase)
        return out
    order = np.argsort(indices)
    pts = complex(turn_to_point(arc.start)) * np.exp(1j * TAU * u * float(arc.length))
    step = 0
    for i in order:
        n = indices[i]
        while step < n:
            pts = _eval(f, pts)
            pts = pts / np.abs(pts)
            step += 1
        out += coeffs[i] * pts
    return out


def orbit_points(f: BlaschkeProduct, t, n: int) -> np.ndarray:
    """Array of shape (n+1, len(t)) holding f^k(e^{2 pi i t}) for k = 0..n."""
    pts = np.atleast_1d(turn_to_point(t)).astype(complex)
    out = [pts]
    for _ in range(n):
        pts = _eval(f, pts)
        pts = pts / np.abs(pts)
        out.append(pts)
    return np.array(out)


# ---------------------------------------------------------------- invariant suites

def _random_arc_with_image(f, consts, n, delta, rng):
    """Random arc I with m(f^n(I)) = delta."""
    start = rng.random()
    big = min(1.0, 1.05 * delta / consts.K_min ** n)
    return split_arc_by_image_measure(f, n, Arc(start, big), delta, tol=1e-13)


def expansion_suite(f: BlaschkeProduct, trials: int = 1000, seed: int = 0) -> dict:
    """m(f(I)) >= K_min m(I) on random arcs with m(f(I)) < 1."""
    rng = np.random.default_rng(seed)
    consts = iterate_constants(f)
    failures, worst = 0, math.inf
    checked = 0
    while checked < trials:
        length = 10 ** rng.uniform(-6, math.log10(0.99 / consts.K_max))
        arc = Arc(rng.random(), length)
        img = image_arc_measure(f, 1, arc)
        if img >= 1.0:
            continue
        checked += 1
        margin = img / (consts.K_min * length) - 1.0
        worst = min(worst, margin)
        if margin < -1e-9:
            failures += 1
    return {"name": "expansion", "trials": checked, "failures": failures, "min_margin": worst}


def oscillation_suite(f: BlaschkeProduct, trials: int = 1000, seed: int = 0,
                      n_max: int = 6) -> dict:
    """Chord oscillation of f^k on arcs with m(f^N(I)) = delta.

    The asserted bound is 2 pi delta K^(k-N): the circle has length 2 pi in
    the normalised measure.  ``literal_failures`` counts the unscaled chord
    bound; ``arc_failures`` checks the unscaled bound on arc distance in turns.
    """
    rng = np.random.default_rng(seed)
    consts = iterate_constants(f)
    failures = literal = arc_failures = 0
    worst = math.inf
    for _ in range(trials):
        n = int(rng.integers(1, n_max + 1))
        delta = rng.uniform(0.01, 0.95)
        arc = _random_arc_with_image(f, consts, n, delta, rng)
        t = float(arc.start) + rng.random(2) * float(arc.length)
        orb = orbit_points(f, t, n)
        for k in range(1, n + 1):
            dist = abs(orb[k, 0] - orb[k, 1])
            bound = delta * consts.K_min ** (k - n)
            worst = min(worst, (TAU * bound - dist) / (TAU * bound))
            if dist > TAU * bound * (1 + 1e-9):
                failures += 1
            if dist > bound * (1 + 1e-9):
                literal += 1
            turns = abs(np.angle(orb[k, 0] * np.conj(orb[k, 1]))) / TAU
            if turns > bound * (1 + 1e-9):
                arc_failures += 1
    return {"name": "oscillation", "trials": trials, "failures": failures,
            "literal_failures": literal, "arc_failures": arc_failures,
            "min_margin": float(worst)}


def corollary_oscillation_suite(f: BlaschkeProduct, trials: int = 1000, seed: int = 0,
                                n_max: int = 6) -> dict:
    """|sum a_k (f^k(xi) - f^k(xi'))| <= c delta ||a||_2 with c = 2 pi K/(K-1)."""
    rng = np.random.default_rng(seed)
    consts = iterate_constants(f)
    c = TAU * consts.K_min / (consts.K_min - 1.0)
    failures, worst = 0, math.inf
    for _ in range(trials):
        n = int(rng.integers(2, n_max + 1))
        m = int(rng.integers(1, n))
        delta = rng.uniform(0.01, 0.95)
        arc = _random_arc_with_image(f, consts, n, delta, rng)
        t = float(arc.start) + rng.random(2) * float(arc.length)
        orb = orbit_points(f, t, n)
        a = rng.normal(size=n - m + 1) + 1j * rng.normal(size=n - m + 1)
        lhs = abs(np.sum(a * (orb[m:, 0] - orb[m:, 1])))
        rhs = c * delta * np.linalg.norm(a)
        worst = min(worst, (rhs - lhs) / rhs)
        if lhs > rhs * (1 + 1e-9):
            failures += 1
    return {"name": "corollary_oscillation", "trials": trials, "failures": failures,
            "constant": c, "min_margin": float(worst)}


def quasi_constant_derivative_suite(f: BlaschkeProduct, trials: int = 1000, seed: int = 0,
                                    n_max: int = 6, points: int = 33) -> dict:
    """max_I |(f^N)'| / min_I |(f^N)'| <= exp(C2 * 2 pi / (K - 1)) when m(f^N(I)) < 1."""
    rng = np.random.default_rng(seed)
    consts = iterate_constants(f)
    bound = math.exp(consts.C2_max * TAU / (consts.K_min - 1.0))
    failures, worst_ratio = 0, 1.0
    for _ in range(trials):
        n = int(rng.integers(1, n_max + 1))
        delta = rng.uniform(0.01, 0.99)
        arc = _random_arc_with_image(f, consts, n, delta, rng)
        t = float(arc.start) + np.linspace(0, 1, points) * float(arc.length)
        orb = orbit_points(f, t, n - 1)
        log_d = np.sum(np.log(np.abs(derivative(f, orb))), axis=0)
        ratio = math.exp(float(np.max(log_d) - np.min(log_d)))
        worst_ratio = max(worst_ratio, ratio)
        if ratio > bound:
            failures += 1
    return {"name": "quasi_constant_derivative", "trials": trials, "failures": failures,
            "bound": bound, "max_ratio": worst_ratio}


def schwarz_suite(f: BlaschkeProduct, trials: int = 1000, seed: int = 0, n_max: int = 8) -> dict:
    """|f^(n+1)(z)| <= |f^n(z)| along random interior orbits."""
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.random(trials)) * 0.999
    z = r * np.exp(1j * TAU * rng.random(trials))
    failures = 0
    prev = np.abs(z)
    for _ in range(n_max):
        z = _eval(f, z)
        cur = np.abs(z)
        failures += int(np.sum(cur > prev * (1 + 1e-12) + 1e-300))
        prev = cur
    return {"name": "schwarz", "trials": trials, "failures": failures}


def interior_boundary_suite(f: BlaschkeProduct, gammas=(0.5, 0.9), radial: int = 60,
                            angular: int = 64) -> dict:
    """Empirical delta(gamma) = min m(f(I(z))) over grid points with |f(z)| <= gamma."""
    out = {}
    radii = 1.0 - np.logspace(-4, 0, radial, endpoint=False)
    angles = np.arange(angular) / angular
    for gamma in gammas:
        best = math.inf
        for r in radii:
            for a in angles:
                z = r * complex(turn_to_point(a))
                if abs(evaluate(f, z)) > gamma:
                    continue
                best = min(best, float(image_arc_measure(f, 1, arc_of_point(z))))
        out[str(gamma)] = best
    return {"name": "interior_boundary", "delta": out,
            "failures": sum(1 for v in out.values() if not v > 0)}
