"""Model sets with closed-form quasioptimal projections for verifying rates.

Lines and hyperplanes through the origin admit exact orthogonal
projections, so the full set of sigma-quasioptimal projections onto them
can be parameterized in closed form. This module drives alternating
quasi-projections between two lines in the plane, checks the per-cycle
contraction constants and the limit bound of the convergence theory, and
checks the Pythagorean cosine bound on hyperplanes. Two small
counterexamples round out the picture: a half-open segment whose nearest
point is missing (quasi-projections exist, the optimal one does not) and
a rectangular spiral polyline with points whose two nearest-point
directions are exactly opposite.
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CheckResult",
    "LinePair",
    "QUASI_PROJECTION_MODES",
    "QuasiProjSpec",
    "VerificationReport",
    "half_open_segment_demo",
    "kappa_factors",
    "quasi_project_line",
    "run_two_line_qap",
    "spiral_projection_demo",
    "spiral_vertices",
    "verify_pythagorean",
    "verify_theorem_rates",
]

QUASI_PROJECTION_MODES = (
    "exact",
    "adversarial_away",
    "adversarial_toward",
    "random_within",
)


@dataclass(frozen=True)
class LinePair:
    """Two lines through the origin in the plane at angle theta.

    The first line is the span of (1, 0), the second the span of
    (cos theta, sin theta). Their intersection is the origin, so the
    distance of an iterate to the intersection is just its norm.
    """

    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta))
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")
        if not 0.0 < self.theta <= math.pi / 2:
            raise ValueError(f"theta must lie in (0, pi/2], got {self.theta}")

    @property
    def a_direction(self):
        """Unit direction of the first line."""
        return np.array([1.0, 0.0])

    @property
    def b_direction(self):
        """Unit direction of the second line."""
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    @property
    def cosine(self):
        """Cosine of the angle between the two lines."""
        return math.cos(self.theta)


@dataclass(frozen=True)
class QuasiProjSpec:
    """How to pick a point within sigma times the optimal distance.

    Every produced point p satisfies ||x - p|| <= sigma * dist(x, set)
    up to a 1e-12 slack. The exact mode returns the orthogonal
    projection, the adversarial modes walk to an endpoint of the
    admissible segment (away from or toward the origin), random_within
    samples the segment uniformly.
    """

    sigma: float
    mode: str = "exact"

    def __post_init__(self):
        object.__setattr__(self, "sigma", float(self.sigma))
        if not math.isfinite(self.sigma) or self.sigma < 1.0:
            raise ValueError(f"sigma must be a finite value >= 1, got {self.sigma}")
        if self.mode not in QUASI_PROJECTION_MODES:
            raise ValueError(
                f"mode must be one of {QUASI_PROJECTION_MODES}, got {self.mode!r}"
            )


@dataclass
class CheckResult:
    """One verified assertion: its description and the worst excess seen.

    margin is the largest violation of the mathematical bound across all
    trials; values at or below the check's tolerance mean the bound held.
    """

    description: str
    passed: bool
    margin: float


@dataclass
class VerificationReport:
    """Pass/fail verdicts plus the raw per-cycle ratios behind them."""

    checks: list = field(default_factory=list)
    cycle_ratios: np.ndarray = field(default_factory=lambda: np.empty(0))
    stats: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def summary(self):
        """Plain-text report, one PASS/FAIL line per assertion."""
        lines = [
            f"{'PASS' if c.passed else 'FAIL'}: {c.description} "
            f"(worst margin {c.margin:.3e})"
            for c in self.checks
        ]
        return "\n".join(lines)


def _unit_direction(direction):
    d = np.asarray(direction, dtype=float).reshape(-1)
    if d.size < 1 or not np.all(np.isfinite(d)):
        raise ValueError("line direction must be a finite nonempty vector")
    nd = float(np.linalg.norm(d))
    if nd == 0.0:
        raise ValueError("line direction must be nonzero")
    return d / nd


def quasi_project_line(x, direction, spec, rng=None):
    """Quasioptimal projection of x onto the line spanned by direction.

    The admissible points form a segment of half-length
    dist * sqrt(sigma^2 - 1) centered at the orthogonal projection pi.
    adversarial_away walks to the endpoint farther from the origin
    (ties broken toward the positive direction of the line),
    adversarial_toward to the opposite endpoint, random_within samples
    the segment uniformly and needs an RngStream.

    Parameters
    ----------
    x : array_like
        Point to project, any ambient dimension.
    direction : array_like
        Direction spanning the line; normalized internally.
    spec : QuasiProjSpec
        Quasioptimality factor and selection mode.
    rng : RngStream, optional
        Required by the random_within mode only.

    Returns
    -------
    ndarray
        A point on the line with ||x - p|| <= sigma * dist(x, line).
    """
    if not isinstance(spec, QuasiProjSpec):
        raise TypeError("spec must be a QuasiProjSpec")
    d = _unit_direction(direction)
    p = np.asarray(x, dtype=float).reshape(-1)
    if p.shape != d.shape:
        raise ValueError(f"point has shape {p.shape}, direction {d.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point entries must be finite")
    t = float(p @ d)
    pi = t * d
    dist = float(np.linalg.norm(p - pi))
    if spec.mode == "exact" or dist == 0.0:
        return pi
    half = dist * math.sqrt(spec.sigma**2 - 1.0)
    away = d if t >= 0.0 else -d
    if spec.mode == "adversarial_away":
        return pi + half * away
    if spec.mode == "adversarial_toward":
        return pi - half * away
    if rng is None:
        raise ValueError("random_within mode needs an RngStream")
    return pi + float(rng.generator.uniform(-half, half)) * away


def kappa_factors(pair, sigma_a, sigma_b):
    """Per-cycle contraction constants of alternating quasi-projections.

    With c the cosine of the angle between the lines,
    kappa_a = (sigma_a / sigma_b) * (c + sqrt(1 - c^2) * sqrt(sigma_b^2 - 1))
    and symmetrically for kappa_b. Their product bounds the per-cycle
    decay of the distance to the intersection; the sequence converges
    whenever kappa_a * kappa_b < 1.
    """
    sigma_a = float(sigma_a)
    sigma_b = float(sigma_b)
    if min(sigma_a, sigma_b) < 1.0:
        raise ValueError("sigma factors must be >= 1")
    c = pair.cosine
    s = math.sqrt(max(0.0, 1.0 - c * c))
    kappa_a = (sigma_a / sigma_b) * (c + s * math.sqrt(sigma_b**2 - 1.0))
    kappa_b = (sigma_b / sigma_a) * (c + s * math.sqrt(sigma_a**2 - 1.0))
    return kappa_a, kappa_b


def _mode_pair(modes):
    if isinstance(modes, str):
        modes = (modes, modes)
    mode_a, mode_b = modes
    return str(mode_a), str(mode_b)


def run_two_line_qap(pair, sigma_a, sigma_b, modes, a0, n_cycles, rng=None):
    """Alternate quasi-projections between the two lines of a LinePair.

    One cycle maps a_k on the first line to a quasi-projection b_k on the
    second line and back. The trace records the distance of each a_k to
    the intersection point (the origin).

    Parameters
    ----------
    pair : LinePair
        The two lines.
    sigma_a, sigma_b : float
        Quasioptimality factors for projections onto the first and the
        second line.
    modes : str or pair of str
        Selection mode per line, (mode_a, mode_b); a single string
        applies to both.
    a0 : array_like
        Starting point, must lie on the first line and be nonzero.
    n_cycles : int
        Number of full cycles to run.
    rng : RngStream, optional
        Needed when either mode is random_within.

    Returns
    -------
    ndarray
        Distances ||a_k|| for k = 0 .. n_cycles, length n_cycles + 1.
    """
    if not isinstance(pair, LinePair):
        raise TypeError("pair must be a LinePair")
    n_cycles = int(n_cycles)
    if n_cycles < 1:
        raise ValueError(f"n_cycles must be >= 1, got {n_cycles}")
    mode_a, mode_b = _mode_pair(modes)
    spec_a = QuasiProjSpec(sigma_a, mode_a)
    spec_b = QuasiProjSpec(sigma_b, mode_b)
    start = np.asarray(a0, dtype=float).reshape(-1)
    if start.shape != (2,) or not np.all(np.isfinite(start)):
        raise ValueError("a0 must be a finite point in the plane")
    scale = float(np.linalg.norm(start))
    if scale == 0.0:
        raise ValueError("a0 must be nonzero")
    if abs(start[1]) > 1e-12 * scale:
        raise ValueError("a0 must lie on the first line (zero second coordinate)")
    a = np.array([start[0], 0.0])
    dir_a = pair.a_direction
    dir_b = pair.b_direction
    trace = np.empty(n_cycles + 1)
    trace[0] = abs(a[0])
    for k in range(n_cycles):
        b = quasi_project_line(a, dir_b, spec_b, rng=rng)
        a = quasi_project_line(b, dir_a, spec_a, rng=rng)
        trace[k + 1] = float(np.linalg.norm(a))
    return trace


def _attained_half_factor(pair, sigma):
    """Norm growth of one adversarial_away half-step, in closed form.

    A point at distance d from the origin on one line lands on the other
    at distance d * (c + sqrt(1 - c^2) * sqrt(sigma^2 - 1)): the exact
    projection contributes d*c along the line and the adversarial offset
    adds the full admissible half-length d*sqrt(1-c^2)*sqrt(sigma^2-1)
    in the direction away from the origin. No admissible choice exceeds
    this, so adversarial_away is the worst case for the distance to the
    intersection.
    """
    c = pair.cosine
    s = math.sqrt(max(0.0, 1.0 - c * c))
    return c + s * math.sqrt(float(sigma) ** 2 - 1.0)


def verify_theorem_rates(pair, sigma_a, sigma_b, n_trials, rng, n_cycles=6):
    """Check the per-cycle contraction and limit bounds on a line pair.

    Runs n_trials alternating sequences with independently random modes
    and starting scales and asserts, per cycle, that the distance to the
    intersection shrinks by at least the factor kappa_a * kappa_b (up to
    1e-10). Also asserts that adversarial_away attains the half-step
    factor c + sqrt(1 - c^2) * sqrt(sigma^2 - 1) exactly, that each
    half-step factor stays below its sigma (Cauchy-Schwarz envelope, so
    with an exact partner projection the per-cycle factor is at most
    sigma * c), and, whenever kappa_a * kappa_b < 1, that the limit
    satisfies ||a_0 - limit|| <= sigma_b * (1 + kappa_a)
    / (1 - kappa_a * kappa_b) * dist(a_0, second line).

    Returns
    -------
    VerificationReport
        One CheckResult per assertion plus all observed cycle ratios.
    """
    if not isinstance(pair, LinePair):
        raise TypeError("pair must be a LinePair")
    n_trials = int(n_trials)
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    if rng is None:
        raise ValueError("an RngStream is required")
    kappa_a, kappa_b = kappa_factors(pair, sigma_a, sigma_b)
    product = kappa_a * kappa_b
    gen = rng.generator
    sine = math.sqrt(max(0.0, 1.0 - pair.cosine**2))

    worst_cycle = -math.inf
    worst_limit = -math.inf
    ratios = []
    for _ in range(n_trials):
        modes = (
            str(gen.choice(QUASI_PROJECTION_MODES)),
            str(gen.choice(QUASI_PROJECTION_MODES)),
        )
        scale = float(gen.uniform(0.25, 4.0)) * (1.0 if gen.uniform() < 0.5 else -1.0)
        a0 = np.array([scale, 0.0])
        trace = run_two_line_qap(pair, sigma_a, sigma_b, modes, a0, n_cycles, rng=rng)
        excess = trace[1:] - product * trace[:-1]
        worst_cycle = max(worst_cycle, float(np.max(excess)))
        live = trace[:-1] > 0
        ratios.extend((trace[1:][live] / trace[:-1][live]).tolist())
        if product < 1.0:
            bound = float(sigma_b) * (1.0 + kappa_a) / (1.0 - product)
            worst_limit = max(
                worst_limit, trace[0] - bound * (sine * trace[0])
            )

    half_a = _attained_half_factor(pair, sigma_a)
    half_b = _attained_half_factor(pair, sigma_b)
    a0 = np.array([1.0, 0.0])
    b = quasi_project_line(a0, pair.b_direction, QuasiProjSpec(sigma_b, "adversarial_away"))
    a1 = quasi_project_line(b, pair.a_direction, QuasiProjSpec(sigma_a, "adversarial_away"))
    attain_margin = max(
        abs(float(np.linalg.norm(b)) - half_b),
        abs(float(np.linalg.norm(a1)) - half_b * half_a),
        abs(half_b * half_a - product),
    )
    envelope_margin = max(half_a - float(sigma_a), half_b - float(sigma_b))

    checks = [
        CheckResult(
            "per-cycle distance to the intersection shrinks by at least"
            " kappa_a * kappa_b under every selection mode",
            worst_cycle <= 1e-10,
            worst_cycle,
        ),
        CheckResult(
            "adversarial_away attains the half-step factor"
            " c + sqrt(1 - c^2) * sqrt(sigma^2 - 1) exactly",
            attain_margin <= 1e-12,
            attain_margin,
        ),
        CheckResult(
            "each attained half-step factor is at most its sigma",
            envelope_margin <= 1e-12,
            envelope_margin,
        ),
    ]
    if product < 1.0:
        checks.append(
            CheckResult(
                "limit bound sigma_b * (1 + kappa_a) / (1 - kappa_a * kappa_b)"
                " * dist(a0, second line) covers ||a0 - limit||",
                worst_limit <= 1e-10,
                worst_limit,
            )
        )
    stats = {
        "kappa_a": kappa_a,
        "kappa_b": kappa_b,
        "kappa_product": product,
        "max_cycle_ratio": float(np.max(ratios)) if ratios else 0.0,
    }
    return VerificationReport(checks, np.asarray(ratios), stats)


def verify_pythagorean(dim, sigma, n_trials, rng):
    """Check the cosine and proximity bounds for hyperplane projections.

    For random hyperplanes through the origin, random points x off them
    and random sigma-quasioptimal projections p, asserts that the cosine
    between x - pi and x - p is at least 1/sigma (pi the orthogonal
    projection) and that ||p - pi|| <= sqrt(sigma^2 - 1) * dist(x, plane),
    both up to 1e-12. Every fourth trial places p on the boundary of the
    admissible disk so the cosine bound is attained.

    Returns
    -------
    VerificationReport
        Both verdicts; stats carry the extremal cosine and offset.
    """
    dim = int(dim)
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    sigma = float(sigma)
    if not math.isfinite(sigma) or sigma < 1.0:
        raise ValueError(f"sigma must be a finite value >= 1, got {sigma}")
    n_trials = int(n_trials)
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    if rng is None:
        raise ValueError("an RngStream is required")
    gen = rng.generator
    slack = math.sqrt(sigma**2 - 1.0)

    min_cosine = math.inf
    worst_cos = -math.inf
    worst_off = -math.inf
    max_offset_ratio = 0.0
    for i in range(n_trials):
        normal = gen.standard_normal(dim)
        normal /= np.linalg.norm(normal)
        x = gen.standard_normal(dim)
        height = float(x @ normal)
        while abs(height) < 1e-6:
            x = gen.standard_normal(dim)
            height = float(x @ normal)
        pi = x - height * normal
        dist = abs(height)
        w = gen.standard_normal(dim)
        w -= float(w @ normal) * normal
        nw = float(np.linalg.norm(w))
        while nw < 1e-6:
            w = gen.standard_normal(dim)
            w -= float(w @ normal) * normal
            nw = float(np.linalg.norm(w))
        w /= nw
        frac = 1.0 if i % 4 == 0 else float(gen.uniform(0.0, 1.0))
        p = pi + (frac * slack * dist) * w
        v_opt = x - pi
        v_quasi = x - p
        cosine = float(
            (v_opt @ v_quasi)
            / (np.linalg.norm(v_opt) * np.linalg.norm(v_quasi))
        )
        offset = float(np.linalg.norm(p - pi))
        min_cosine = min(min_cosine, cosine)
        worst_cos = max(worst_cos, 1.0 / sigma - cosine)
        worst_off = max(worst_off, offset - slack * dist)
        max_offset_ratio = max(max_offset_ratio, offset / dist)

    checks = [
        CheckResult(
            "cosine between the optimal and quasioptimal projection"
            " directions stays at or above 1/sigma",
            worst_cos <= 1e-12,
            worst_cos,
        ),
        CheckResult(
            "quasioptimal projections stay within"
            " sqrt(sigma^2 - 1) * dist of the optimal one",
            worst_off <= 1e-12,
            worst_off,
        ),
    ]
    stats = {"min_cosine": min_cosine, "max_offset_ratio": max_offset_ratio}
    return VerificationReport(checks, np.empty(0), stats)


def half_open_segment_demo(sigma=2.0, depths=(10, 100, 1000, 10**4, 10**5, 10**6)):
    """Quasi-projections can exist where the optimal projection does not.

    The set is the half-open segment {(t, 0) : 0 < t <= 1} and the query
    point is (-1, 0), so the distance infimum 1 is approached as t -> 0
    but never attained and the optimal projection is empty. At each
    discretization depth n the grid {(k/n, 0) : k = 1..n} is scanned: its
    nearest point (1/n, 0) is a valid member of the set and lies within
    sigma times the infimum, so the sigma-quasioptimal projection of the
    true set is non-empty, while the minimizers march toward the excluded
    endpoint (0, 0).

    Returns
    -------
    VerificationReport
        Membership and limit-point verdicts; stats carry the last
        minimizer's norm and distance.
    """
    sigma = float(sigma)
    if not math.isfinite(sigma) or sigma <= 1.0:
        raise ValueError(f"sigma must be a finite value > 1, got {sigma}")
    x = np.array([-1.0, 0.0])
    true_dist = 1.0

    worst_member = -math.inf
    minimizer_norms = []
    minimizer_dists = []
    for n in depths:
        n = int(n)
        if n < 1:
            raise ValueError("depths must be positive")
        ts = np.arange(1, n + 1) / n
        dists = np.hypot(ts - x[0], 0.0)
        j = int(np.argmin(dists))
        t_best = float(ts[j])
        d_best = float(dists[j])
        if not 0.0 < t_best <= 1.0:
            raise AssertionError("grid point left the half-open segment")
        worst_member = max(worst_member, d_best - sigma * true_dist)
        minimizer_norms.append(t_best)
        minimizer_dists.append(d_best)

    norms = np.asarray(minimizer_norms)
    dists = np.asarray(minimizer_dists)
    shrinking = bool(np.all(np.diff(norms) < 0)) and norms[-1] < 1e-3
    approaching = bool(np.all(dists > true_dist)) and bool(
        np.all(np.diff(dists) < 0)
    )
    checks = [
        CheckResult(
            "the nearest grid point is a sigma-quasioptimal projection"
            " at every depth, so the quasi-projection set is non-empty",
            worst_member <= 1e-12,
            worst_member,
        ),
        CheckResult(
            "minimizers converge to the excluded endpoint while their"
            " distances stay strictly above the infimum, so the optimal"
            " projection is empty",
            shrinking and approaching,
            float(norms[-1]),
        ),
    ]
    stats = {
        "last_minimizer_norm": float(norms[-1]),
        "last_minimizer_dist": float(dists[-1]),
    }
    return VerificationReport(checks, np.empty(0), stats)


def spiral_vertices(depth=32, scale=1.0):
    """Vertices of the rectangular spiral polyline, inward and outward.

    Vertex a_0 is the origin and a_{n+1} = a_n + 2^{-n} * scale * e_n,
    where e_n cycles through (0,-1), (1,0), (0,1), (-1,0) with n mod 4.
    Indices run over n in [-depth, depth]; the inward tail converges to
    the center (2/5) * scale * (1, -2).

    Returns
    -------
    ndarray
        Array of shape (2*depth + 1, 2); row i holds a_{i - depth}.
    """
    depth = int(depth)
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    scale = float(scale)
    if not math.isfinite(scale) or scale <= 0:
        raise ValueError(f"scale must be a finite value > 0, got {scale}")
    steps = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    vertices = np.empty((2 * depth + 1, 2))
    vertices[depth] = 0.0
    for n in range(depth):
        vertices[depth + n + 1] = vertices[depth + n] + (
            2.0 ** (-n) * scale
        ) * steps[n % 4]
    for n in range(-1, -depth - 1, -1):
        vertices[depth + n] = vertices[depth + n + 1] - (
            2.0 ** (-n) * scale
        ) * steps[n % 4]
    return vertices


def _nearest_on_polyline(x, vertices, window=1e-9):
    """Global nearest points of x on a polyline.

    Returns the minimal distance and every foot point whose distance is
    within a (1 + window) factor of it, deduplicated.
    """
    v0 = vertices[:-1]
    seg = vertices[1:] - v0
    seg_sq = np.einsum("ij,ij->i", seg, seg)
    t = np.einsum("ij,ij->i", x - v0, seg) / np.where(seg_sq == 0, 1.0, seg_sq)
    t = np.clip(t, 0.0, 1.0)
    feet = v0 + t[:, None] * seg
    dists = np.linalg.norm(feet - x, axis=1)
    d_min = float(np.min(dists))
    close = feet[dists <= d_min * (1.0 + window)]
    unique = []
    for f in close:
        if all(np.linalg.norm(f - g) > window * max(1.0, d_min) for g in unique):
            unique.append(f)
    return d_min, unique


def spiral_projection_demo(depth=32, scale=1.0):
    """Opposite nearest-point directions on the spiral polyline.

    Between consecutive horizontal windings of the spiral there are
    midpoints x_k, on the same vertical line as the center, that are
    equidistant from the winding above and the winding below. Their two
    nearest points lie straight up and straight down, so the cosine
    between the two projection directions is exactly -1, and the x_k
    approach the center. No cosine bound of the form >= 1/sigma can hold
    near the center, which is what distinguishes this set from the model
    sets with well-behaved projections.

    Returns
    -------
    VerificationReport
        Distance, two-point, and opposite-direction verdicts; stats
        carry the cosine and the midpoint convergence gap.
    """
    vertices = spiral_vertices(depth=depth, scale=scale)
    center = (2.0 / 5.0) * scale * np.array([1.0, -2.0])
    k_max = min(depth // 4 - 1, 5)
    if k_max < 1:
        raise ValueError("depth must be at least 8 to enclose a midpoint")

    worst_dist = -math.inf
    worst_points = -math.inf
    worst_cosine = -math.inf
    gaps = []
    for k in range(1, k_max + 1):
        q = 2.0 ** (-4 * k)
        x_k = (2.0 / 5.0) * np.array(
            [scale, -2.0 * (1.0 - (17.0 / 32.0) * q) * scale]
        )
        expected_dist = (3.0 / 8.0) * q * scale
        expected_up = (2.0 / 5.0) * np.array(
            [scale, -2.0 * (1.0 - q) * scale]
        )
        expected_down = (2.0 / 5.0) * np.array(
            [scale, -2.0 * (1.0 - q / 16.0) * scale]
        )
        d_min, points = _nearest_on_polyline(x_k, vertices, window=1e-8)
        worst_dist = max(
            worst_dist, abs(d_min - expected_dist) / expected_dist - 1e-9
        )
        if len(points) != 2:
            worst_points = max(worst_points, float(len(points)))
        else:
            pts = sorted(points, key=lambda p: p[1])
            match = max(
                float(np.linalg.norm(pts[1] - expected_up)),
                float(np.linalg.norm(pts[0] - expected_down)),
            )
            worst_points = max(worst_points, match / expected_dist - 1e-9)
            u1 = (x_k - pts[0]) / np.linalg.norm(x_k - pts[0])
            u2 = (x_k - pts[1]) / np.linalg.norm(x_k - pts[1])
            worst_cosine = max(worst_cosine, float(u1 @ u2) + 1.0)
        gaps.append(float(np.linalg.norm(x_k - center)))

    gaps = np.asarray(gaps)
    converging = bool(np.all(np.diff(gaps) < 0)) and gaps[-1] < 1e-4 * scale
    checks = [
        CheckResult(
            "each midpoint sits at distance (3/8) * 2^(-4k) * scale from"
            " the polyline",
            worst_dist <= 0.0,
            worst_dist,
        ),
        CheckResult(
            "each midpoint has exactly two nearest points, one winding"
            " above and one below",
            worst_points <= 0.0,
            worst_points,
        ),
        CheckResult(
            "the two nearest-point directions are exactly opposite"
            " (cosine -1)",
            worst_cosine <= 1e-12,
            worst_cosine,
        ),
        CheckResult(
            "the midpoints converge to the spiral center",
            converging,
            float(gaps[-1]),
        ),
    ]
    stats = {"worst_cosine_excess": worst_cosine, "last_gap": float(gaps[-1])}
    return VerificationReport(checks, np.empty(0), stats)
