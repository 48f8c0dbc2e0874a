"""Adaptive eigenvalue-trajectory tracking over a real parameter sweep.

Samples the spectrum (via the contour solver) at adaptively chosen parameter
values, matches eigenvalues between neighboring samples into labeled
trajectories, fits per-segment splines, and locates the parameter values
where trajectories meet the real axis, collide, or veer.

The adaptive criterion is prediction-driven: an interval is accepted once a
low-degree polynomial extrapolation of every matched trajectory predicts the
midpoint spectrum within `tol`. Near a bifurcation the eigenvalue branches
behave like |p - p*|^(1/M) with unbounded derivative, so prediction keeps
failing and bisection walls the event into an interval of width
`min_interval`; those brackets are then analyzed by a two-variable Newton
iteration on the determinant rather than by ever-finer sampling.

Splines are fitted per segment between event brackets, never across them: a
degree-7 polynomial cannot follow a cube-root cusp, and smoothing over one
would poison both reconstruction accuracy and rate fitting downstream.
"""

from __future__ import annotations

import warnings
from bisect import insort
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.optimize import linear_sum_assignment

from .beyn import BeynConfig, ContourSpec, solve
from .nep import Eigenpair, IllConditionedNullspace, NepProblem, _internals_of, nullspace_vector

__all__ = [
    "AdaptiveConfig",
    "MatchResult",
    "Trajectory",
    "TrajectorySet",
    "Event",
    "match",
    "track",
    "detect_events",
    "refine_near_events",
]


@dataclass(frozen=True)
class AdaptiveConfig:
    p_min: float
    p_max: float
    tol: float = 1e-3
    spline_degree: int = 7
    max_samples: int = 600
    initial_samples: int = 17
    # intervals narrower than this are treated as event brackets instead of
    # being subdivided further (branch-point branches have unbounded
    # derivatives, so prediction-based refinement would never terminate)
    min_interval: float = None

    def __post_init__(self):
        if not self.p_min < self.p_max:
            raise ValueError("p_min must be < p_max")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.initial_samples < 2:
            raise ValueError("initial_samples must be >= 2")

    @property
    def bracket_width(self) -> float:
        if self.min_interval is not None:
            return self.min_interval
        return (self.p_max - self.p_min) * 1e-4


@dataclass(frozen=True)
class MatchResult:
    assignment: tuple          # ((i_prev, i_next), ...)
    unmatched_prev: tuple
    unmatched_next: tuple
    cost: float
    ambiguous: bool = False


@dataclass
class Trajectory:
    label: str
    samples: list              # [(p, Eigenpair)], p increasing
    birth: float = None        # first live p (None: live from p_min)
    death: float = None        # last live p (None: live to p_max)
    boundary_birth: bool = False   # entered through the contour boundary
    boundary_death: bool = False
    segments: list = field(default_factory=list)   # [(p_lo, p_hi)]
    splines: list = field(default_factory=list)    # [(p_lo, p_hi, re, im)]

    @property
    def p_values(self):
        return np.array([p for p, _ in self.samples])

    @property
    def kappas(self):
        return np.array([e.kappa for _, e in self.samples])

    @property
    def max_abs_im(self) -> float:
        return float(np.max(np.abs(self.kappas.imag)))

    def spline_eval(self, ps):
        """Spline value at each p (scalar or array); per-segment routing,
        nearest segment extrapolates at the fringes."""
        ps = np.atleast_1d(np.asarray(ps, dtype=float))
        out = np.empty(ps.shape, dtype=np.complex128)
        if not self.splines:
            out[:] = self.samples[0][1].kappa if self.samples else np.nan
            return out
        bounds = np.array([[lo, hi] for lo, hi, _, _ in self.splines])
        for i, p in enumerate(ps):
            j = int(np.argmin(np.maximum(bounds[:, 0] - p, 0)
                              + np.maximum(p - bounds[:, 1], 0)))
            _, _, sre, sim = self.splines[j]
            out[i] = complex(sre(p)) + 1j * complex(sim(p))
        return out


@dataclass
class TrajectorySet:
    trajectories: dict          # label -> Trajectory
    p_grid: tuple               # all accepted sample parameters, sorted
    event_brackets: tuple       # ((a, b), ...) intervals walled at min width
    unresolved: tuple           # intervals abandoned on budget exhaustion
    ambiguous_intervals: tuple  # intervals where matching was ambiguous
    nep: NepProblem
    contour: ContourSpec
    beyn_config: BeynConfig
    adaptive_config: AdaptiveConfig

    @property
    def labels(self):
        return tuple(self.trajectories)

    def samples(self, label):
        return self.trajectories[label].samples

    def spline_eval(self, label, ps):
        return self.trajectories[label].spline_eval(ps)


@dataclass(frozen=True)
class Event:
    kind: str                   # "real-touch" | "collision" | "veering"
    p_star: float
    kappa_star: complex
    labels: tuple
    bracket: tuple = None       # (a, b) parameter bracket, if event-walled
    notes: str = ""


# ---------------------------------------------------------------------------
# matching


def _kappa_of(e):
    return e.kappa if hasattr(e, "kappa") else complex(e)


def _min_pairwise(ks) -> float:
    if len(ks) < 2:
        return np.inf
    d = np.abs(ks[:, None] - ks[None, :])
    return float(np.min(d[np.triu_indices(len(ks), 1)]))


def default_gate(prev, next, tol) -> float:
    """0.5x the smaller within-list nearest-neighbor distance, floored at
    10*tol: eigenvalues closer than the spectrum's own spacing scale cannot
    be disambiguated by distance alone."""
    kp = np.array([_kappa_of(e) for e in prev])
    kn = np.array([_kappa_of(e) for e in next])
    spacing = min(_min_pairwise(kp), _min_pairwise(kn))
    if not np.isfinite(spacing):
        return np.inf
    return max(10.0 * tol, 0.5 * spacing)


def match(prev, next, gate) -> MatchResult:
    """Minimum-cost partial bijection between two eigenvalue lists with
    pairwise distance capped by `gate` (maximum cardinality first, then
    minimum total distance). Cost ties within 1e-12 are resolved toward
    lexicographic (Re, Im) order on both sides and flagged ambiguous."""
    kp = np.array([_kappa_of(e) for e in prev])
    kn = np.array([_kappa_of(e) for e in next])
    if len(kp) == 0 or len(kn) == 0:
        return MatchResult((), tuple(range(len(kp))), tuple(range(len(kn))), 0.0)
    dist = np.abs(kp[:, None] - kn[None, :])
    big = 1e12 * (1.0 + float(dist.max()))
    cost = np.where(dist <= gate, dist, big)
    rows, cols = linear_sum_assignment(cost)
    pairs = [(int(i), int(j)) for i, j in zip(rows, cols) if dist[i, j] <= gate]

    # ambiguity scan: any 2-swap of matched pairs with the same total cost
    # (within 1e-12) is resolved lexicographically, not by solver noise
    ambiguous = False
    changed = True
    while changed:
        changed = False
        for a in range(len(pairs)):
            for b in range(a + 1, len(pairs)):
                i1, j1 = pairs[a]
                i2, j2 = pairs[b]
                if dist[i1, j2] > gate or dist[i2, j1] > gate:
                    continue
                delta = dist[i1, j2] + dist[i2, j1] - dist[i1, j1] - dist[i2, j2]
                if abs(delta) <= 1e-12:
                    ambiguous = True
                    key = lambda z: (z.real, z.imag)
                    if (key(kp[i1]) < key(kp[i2])) != (key(kn[j1]) < key(kn[j2])):
                        pairs[a], pairs[b] = (i1, j2), (i2, j1)
                        changed = True
    # unmatched singles within gate of a matched next-eigenvalue also make
    # the assignment ambiguous (a different bijection of equal cost exists)
    mi = {i for i, _ in pairs}
    mj = {j for _, j in pairs}
    for i, j in pairs:
        for i2 in range(len(kp)):
            if i2 not in mi and abs(dist[i2, j] - dist[i, j]) <= 1e-12:
                ambiguous = True
        for j2 in range(len(kn)):
            if j2 not in mj and abs(dist[i, j2] - dist[i, j]) <= 1e-12:
                ambiguous = True

    total = float(sum(dist[i, j] for i, j in pairs))
    return MatchResult(
        assignment=tuple(sorted(pairs)),
        unmatched_prev=tuple(sorted(set(range(len(kp))) - mi)),
        unmatched_next=tuple(sorted(set(range(len(kn))) - mj)),
        cost=total,
        ambiguous=ambiguous,
    )


# ---------------------------------------------------------------------------
# adaptive tracking


class _Sweep:
    """Mutable sampling state: sorted parameter values, the eigenpair list at
    each, and cached adjacent-pair matches."""

    def __init__(self, nep, contour, beyn_config, tol, threads):
        self.nep = nep
        self.contour = contour
        self.beyn_config = beyn_config
        self.tol = tol
        self.threads = max(1, int(threads))
        self.ps = []
        self.pairs = {}          # p -> list of Eigenpair
        self._matches = {}       # (p_a, p_b) -> MatchResult

    def solve_at(self, p) -> None:
        if p in self.pairs:
            return
        self.pairs[p] = solve(self.nep, p, self.contour, self.beyn_config)
        insort(self.ps, p)

    def solve_many(self, ps) -> None:
        todo = [p for p in ps if p not in self.pairs]
        if not todo:
            return
        if self.threads == 1 or len(todo) == 1:
            for p in todo:
                self.solve_at(p)
            return
        # results are stored keyed by p, so scheduling order cannot affect
        # the output (concurrency contract: deterministic given the seed)
        with ThreadPoolExecutor(max_workers=self.threads) as ex:
            sols = list(ex.map(
                lambda p: solve(self.nep, p, self.contour, self.beyn_config),
                todo,
            ))
        for p, sol in zip(todo, sols):
            self.pairs[p] = sol
            insort(self.ps, p)

    def match_between(self, pa, pb) -> MatchResult:
        key = (pa, pb)
        if key not in self._matches:
            gate = default_gate(self.pairs[pa], self.pairs[pb], self.tol)
            self._matches[key] = match(self.pairs[pa], self.pairs[pb], gate)
        return self._matches[key]

    def history(self, p_idx, eig_idx, count) -> list:
        """Walk matches backward from (sample index, eigenvalue index),
        collecting up to `count` (p, kappa) points, most recent last."""
        out = []
        i, j = p_idx, eig_idx
        while len(out) < count and i >= 0:
            out.append((self.ps[i], self.pairs[self.ps[i]][j].kappa))
            if i == 0:
                break
            m = self.match_between(self.ps[i - 1], self.ps[i])
            back = {jn: ip for ip, jn in m.assignment}
            if j not in back:
                break
            i, j = i - 1, back[j]
        return out[::-1]


def _predict(history, p_new) -> complex:
    """Least-squares polynomial (degree <= 3) extrapolation of kappa(p)."""
    ps = np.array([p for p, _ in history])
    ks = np.array([k for _, k in history])
    deg = min(3, len(ps) - 1)
    # centered/scaled fit keeps the Vandermonde conditioned on narrow spans
    c, s = ps.mean(), max(np.ptp(ps), 1e-300)
    t = (ps - c) / s
    V = np.vander(t, deg + 1)
    coef, *_ = np.linalg.lstsq(V, ks, rcond=None)
    return complex(np.polyval(coef, (p_new - c) / s))


def track(nep: NepProblem, contour: ContourSpec, beyn_config: BeynConfig,
          adaptive_config: AdaptiveConfig, threads: int = 1) -> TrajectorySet:
    """Adaptively sample, match, and spline the spectrum over
    [p_min, p_max]. See the module docstring for the refinement rule.

    On budget exhaustion a partial result is returned with the abandoned
    intervals listed in `unresolved`.
    """
    cfg = adaptive_config
    if nep.metadata.get("geometry") in ("disk", "annulus"):
        lo, hi = nep.param_domain
        if not (lo <= cfg.p_min and cfg.p_max <= hi):
            raise ValueError(
                f"[{cfg.p_min}, {cfg.p_max}] outside param_domain {nep.param_domain}"
            )
        if cfg.p_min <= 1.0 <= cfg.p_max:
            raise ValueError("p = 1 (n = 1) must lie outside the tracked range")

    sweep = _Sweep(nep, contour, beyn_config, cfg.tol, threads)
    init = np.linspace(cfg.p_min, cfg.p_max, cfg.initial_samples)
    sweep.solve_many([float(p) for p in init])

    event_brackets = []
    ambiguous_intervals = []
    unresolved = []
    queue = [(float(a), float(b)) for a, b in zip(init[:-1], init[1:])]
    while queue:
        # wave processing: the whole frontier's midpoints are solved as one
        # batch so threads stay busy; results are keyed by p, so scheduling
        # cannot affect the outcome
        wave, queue = queue, []
        keep = []
        for (a, b) in wave:
            if b - a <= cfg.bracket_width:
                event_brackets.append((a, b))
            else:
                keep.append((a, b))
        room = cfg.max_samples - len(sweep.ps)
        if room <= 0:
            unresolved.extend(keep)
            continue
        if len(keep) > room:
            unresolved.extend(keep[room:])
            keep = keep[:room]
        sweep.solve_many([0.5 * (a + b) for a, b in keep])

        for (a, b) in keep:
            mid = 0.5 * (a + b)
            m_ab = sweep.match_between(a, b)
            if m_ab.ambiguous and (a, b) not in ambiguous_intervals:
                ambiguous_intervals.append((a, b))

            ia = sweep.ps.index(a)
            preds = []
            for ip, jn in m_ab.assignment:
                hist = sweep.history(ia, ip, 4)
                preds.append(_predict(hist, mid))
            mid_ks = np.array([e.kappa for e in sweep.pairs[mid]])

            # births/deaths at the contour boundary are ordinary traffic,
            # not events: only interior severing forces subdivision
            c, R = contour.center, contour.radius
            interior_sever = any(
                abs(abs(sweep.pairs[a][i].kappa - c) - R) > 0.05 * R
                for i in m_ab.unmatched_prev
            ) or any(
                abs(abs(sweep.pairs[b][j].kappa - c) - R) > 0.05 * R
                for j in m_ab.unmatched_next
            )
            if preds and len(mid_ks):
                err = max(min(abs(k - pk) for pk in mid_ks)
                          for k in map(complex, preds))
            elif preds:
                err = np.inf
            else:
                err = 0.0
            # exact-symmetry ties (conjugate pairs) stay ambiguous at every
            # scale and the lexicographic rule already resolves them
            # consistently; only crowding-driven ambiguity localizes events
            amb_crowded = False
            if m_ab.ambiguous:
                ka = np.array([e.kappa for e in sweep.pairs[a]])
                kb = np.array([e.kappa for e in sweep.pairs[b]])
                crowd = min(_min_pairwise(ka), _min_pairwise(kb))
                amb_crowded = crowd < 20 * cfg.tol
            bad = interior_sever or amb_crowded or err > cfg.tol
            # the midpoint sample is kept either way (it is already paid
            # for); only the decision to keep refining is adaptive
            if bad:
                queue.append((a, mid))
                queue.append((mid, b))

    trajset = _build_trajectories(sweep, cfg, contour)
    result = TrajectorySet(
        trajectories=trajset,
        p_grid=tuple(sweep.ps),
        event_brackets=tuple(sorted(set(event_brackets))),
        unresolved=tuple(sorted(set(unresolved))),
        ambiguous_intervals=tuple(sorted(set(ambiguous_intervals))),
        nep=nep,
        contour=contour,
        beyn_config=beyn_config,
        adaptive_config=cfg,
    )
    fit_splines(result)
    return result


def _build_trajectories(sweep, cfg, contour) -> dict:
    """Chain matched eigenvalues into labeled trajectories, bridge chains
    across event brackets by continuity, and fit per-segment splines."""
    ps = sweep.ps
    chains = []          # list of dict: {"samples": [(p, Eigenpair)], "open": bool}
    live = {}            # eigenvalue index at current sample -> chain index
    for j, e in enumerate(sweep.pairs[ps[0]]):
        chains.append({"samples": [(ps[0], e)]})
        live[j] = len(chains) - 1
    for i in range(1, len(ps)):
        m = sweep.match_between(ps[i - 1], ps[i])
        nxt = {}
        for ip, jn in m.assignment:
            if ip in live:
                ci = live[ip]
                chains[ci]["samples"].append((ps[i], sweep.pairs[ps[i]][jn]))
                nxt[jn] = ci
        for jn in m.unmatched_next:
            chains.append({"samples": [(ps[i], sweep.pairs[ps[i]][jn])]})
            nxt[jn] = len(chains) - 1
        live = nxt

    # bridge deaths to births across gaps (event brackets sever matching
    # when branches crowd inside the gate): connect by extrapolated
    # proximity, preferring same realness class
    chains.sort(key=lambda c: (c["samples"][0][0], c["samples"][0][1].kappa.real,
                               c["samples"][0][1].kappa.imag))
    merged = True
    while merged:
        merged = False
        for ca in chains:
            if not ca["samples"]:
                continue
            p_end, e_end = ca["samples"][-1]
            if p_end >= ps[-1]:
                continue
            i_end = ps.index(p_end)
            # a merged-multiplicity sample at an exact crossing leaves a
            # one-sample hole, so a bridge may skip one grid point
            p_next_ok = set(ps[i_end + 1:i_end + 3])
            cands = []
            for cb in chains:
                if cb is ca or not cb["samples"]:
                    continue
                if cb["samples"][0][0] not in p_next_ok:
                    continue
                p_next = cb["samples"][0][0]
                k_pred = _predict([(p, s.kappa) for p, s in ca["samples"][-4:]], p_next)
                e_start = cb["samples"][0][1]
                kb = e_start.kappa
                d = abs(kb - k_pred)
                same_class = (abs(kb.imag) < 1e-6) == (abs(e_end.kappa.imag) < 1e-6)
                # eigenvector overlap separates branches whose eigenvalues
                # are equidistant (e.g. either side of an exact crossing)
                overlap = abs(np.vdot(e_end.coeffs, e_start.coeffs)) \
                    if len(e_end.coeffs) == len(e_start.coeffs) else 0.0
                cands.append((not same_class, d, -overlap, cb))
            if not cands:
                continue
            cands.sort(key=lambda t: (t[0], round(t[1] / max(1e-9, 1e-9 * contour.radius)),
                                      t[2], t[3]["samples"][0][1].kappa.real,
                                      t[3]["samples"][0][1].kappa.imag))
            mis, d, _, cb = cands[0]
            # bridge only across plausible continuations: within a few
            # local spacings, never across the whole contour
            scale = max(10 * cfg.tol, 0.2 * contour.radius)
            if d <= scale:
                ca["samples"].extend(cb["samples"])
                cb["samples"] = []
                merged = True
    chains = [c for c in chains if c["samples"]]
    chains.sort(key=lambda c: (c["samples"][0][0], c["samples"][0][1].kappa.real,
                               c["samples"][0][1].kappa.imag))

    # at an exact collision the merged sample makes both continuations
    # equidistant, so chain matching may kink two straight branches into a
    # V.  Re-pair tails by two-sided extrapolation error; only a decisive
    # improvement (true analytic continuation) rewires anything.
    junctions = sorted({p for p in ps if any(e.multiplicity > 1
                                             for e in sweep.pairs[p])})
    W = 8 * cfg.bracket_width
    for p0 in junctions:
        span = []
        for c in chains:
            left = [s for s in c["samples"] if p0 - W <= s[0] <= p0]
            right = [s for s in c["samples"] if p0 < s[0] <= p0 + W]
            if left and right:
                span.append(c)
        if len(span) < 2:
            continue
        lefts = [[s for s in c["samples"] if s[0] <= p0] for c in span]
        rights = [[s for s in c["samples"] if s[0] > p0] for c in span]
        n = len(span)
        cost = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                pj, ej = rights[j][0]
                fwd = abs(_predict([(p, s.kappa) for p, s in lefts[i][-4:]], pj)
                          - ej.kappa)
                pi, ei = lefts[i][-1]
                bwd = abs(_predict([(p, s.kappa) for p, s in rights[j][:4]], pi)
                          - ei.kappa)
                cost[i, j] = fwd + bwd
        rr, cc = linear_sum_assignment(cost)
        if list(cc) != list(range(n)) and cost[rr, cc].sum() < 0.5 * np.trace(cost):
            for i, j in zip(rr, cc):
                span[i]["samples"] = lefts[i] + rights[j]

    out = {}
    R = contour.radius
    for idx, c in enumerate(chains):
        label = f"T{idx + 1:02d}"
        t = Trajectory(label=label, samples=c["samples"])
        p0, e0 = c["samples"][0]
        p1, e1 = c["samples"][-1]
        if p0 > ps[0]:
            t.birth = p0
            t.boundary_birth = abs(abs(e0.kappa - contour.center) - R) < 0.05 * R
        if p1 < ps[-1]:
            t.death = p1
            t.boundary_death = abs(abs(e1.kappa - contour.center) - R) < 0.05 * R
        out[label] = t
    return out


def _bracket_clusters(brackets, width):
    """Merge runs of adjacent brackets: a root singularity inflates
    prediction error over many neighboring intervals, so one branch point
    typically leaves a contiguous run."""
    clusters = []
    for (a, b) in sorted(brackets):
        if clusters and a - clusters[-1][1] <= 8 * width:
            clusters[-1] = (clusters[-1][0], max(b, clusters[-1][1]))
        else:
            clusters.append((a, b))
    return clusters


def fit_splines(trajset: TrajectorySet) -> None:
    """(Re)fit per-trajectory splines, splitting segments at event brackets
    (one cut per bracket cluster)."""
    cfg = trajset.adaptive_config
    cuts = sorted(0.5 * (a + b) for a, b in
                  _bracket_clusters(trajset.event_brackets, cfg.bracket_width))
    for t in trajset.trajectories.values():
        t.samples.sort(key=lambda s: s[0])
        ps = t.p_values
        edges = [c for c in cuts if ps[0] < c < ps[-1]]
        bounds = [ps[0] - 1.0] + edges + [ps[-1] + 1.0]
        t.segments = []
        t.splines = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sel = (ps > lo) & (ps <= hi)
            if not np.any(sel):
                continue
            sp = ps[sel]
            sk = t.kappas[sel]
            t.segments.append((float(sp[0]), float(sp[-1])))
            if len(sp) == 1:
                const_re = _ConstSpline(float(sk[0].real))
                const_im = _ConstSpline(float(sk[0].imag))
                t.splines.append((float(sp[0]), float(sp[-1]), const_re, const_im))
                continue
            k = min(cfg.spline_degree, len(sp) - 1)
            sre = make_interp_spline(sp, sk.real, k=k)
            sim = make_interp_spline(sp, sk.imag, k=k)
            t.splines.append((float(sp[0]), float(sp[-1]), sre, sim))


class _ConstSpline:
    def __init__(self, v):
        self.v = v

    def __call__(self, p, nu=0):
        p = np.asarray(p, dtype=float)
        return np.zeros_like(p) if nu else np.full_like(p, self.v)

    def derivative(self, nu=1):
        return _ConstSpline(0.0)


# ---------------------------------------------------------------------------
# event detection


def _det_real(ints, kappa, p):
    return float(ints.det_batch(np.array([complex(kappa)]), float(p))[0].real)


def _branch_point_newton(ints, k0, p0, even, k_scale, p_window, k_window):
    """Newton on (det, d_kappa det) = (0,0) [even order] or
    (det, d^2_kappa det) = (0,0) [odd order], in real (kappa, p).

    At an order-M branch point of det(., p) the appropriate system has a
    nonsingular Jacobian while the naive (det, det_kappa) system is singular
    for odd M; callers try even first, then odd.
    """
    k, p = float(k0), float(p0)
    h = 1e-4 * max(1.0, abs(k))
    hp = 1e-6 * max(1.0, abs(p))
    prev_step = np.inf
    for it in range(60):
        def F(kk, pp):
            ks = np.array([kk - 2 * h, kk - h, kk, kk + h, kk + 2 * h], complex)
            d = ints.det_batch(ks, pp).real
            f0 = d[2]
            f1 = (d[3] - d[1]) / (2 * h)
            f2 = (d[3] - 2 * d[2] + d[1]) / (h * h)
            return np.array([f0, f1 if even else f2])

        f = F(k, p)
        fk = (F(k + h, p) - F(k - h, p)) / (2 * h)
        fp = (F(k, p + hp) - F(k, p - hp)) / (2 * hp)
        J = np.column_stack([fk, fp])
        try:
            step = np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            return None
        k -= step[0]
        p -= step[1]
        if abs(k - k0) > k_window or abs(p - p0) > p_window:
            return None
        if abs(step[0]) < 1e-11 * max(1.0, abs(k)) and abs(step[1]) < 1e-11 * max(1.0, abs(p)):
            return k, p
        # chatter at the finite-difference noise floor: steps stop shrinking
        # while already tiny -- the iterate has settled to stencil accuracy
        if it >= 3 and abs(step[0]) < 3e-6 * max(1.0, abs(k)) \
                and abs(step[0]) > 0.3 * prev_step:
            return k, p
        prev_step = abs(step[0])
    return None


def detect_events(trajset: TrajectorySet, tol_real: float = None) -> list:
    """Locate real-touch, collision, and veering events.

    Real-axis events live inside the adaptive loop's event brackets; each
    bracket is analyzed by participant structure and polished by the
    branch-point Newton iteration. Veering (an avoided crossing: an
    almost-exceptional point) is flagged where a trajectory's spline
    curvature exceeds 100x its own median, outside windows around genuine
    events.
    """
    R = trajset.contour.radius
    if tol_real is None:
        tol_real = 1e-6 * R
    ints = _internals_of(trajset.nep)
    cfg = trajset.adaptive_config
    if not any(t.splines for t in trajset.trajectories.values()):
        fit_splines(trajset)

    events = []
    span = cfg.p_max - cfg.p_min

    for (a, b) in _bracket_clusters(trajset.event_brackets, cfg.bracket_width):
        mid = 0.5 * (a + b)
        w_near = max(b - a, cfg.bracket_width) * 6
        parts = []
        for lab, t in trajset.trajectories.items():
            ps = t.p_values
            near = (ps >= a - w_near) & (ps <= b + w_near)
            if np.any(near):
                parts.append((lab, t, t.kappas[near]))
        if not parts:
            continue
        # participants cluster around the event kappa; keep those within a
        # few cluster radii of the tightest pair
        all_k = np.concatenate([ks for _, _, ks in parts])
        center = np.median(all_k.real) + 1j * np.median(all_k.imag)
        keep = [(lab, t) for lab, t, ks in parts
                if np.min(np.abs(ks - center)) < 0.2 * R]
        if not keep:
            continue
        labels = tuple(lab for lab, _ in keep)
        nonreal = any(t.max_abs_im > 1e-3 * R for _, t in keep)

        # a real trajectory running through the event carries the branch
        # point on its graph, so its spline value is the sharpest seed.
        # Polish from both cluster edges and the center: a touchdown and a
        # takeoff can share one contiguous bracket run, and then each edge
        # converges to its own branch point.
        roots = []
        for p_seed in (a, mid, b):
            k_seeds = []
            for _, t in keep:
                if t.max_abs_im <= 1e-3 * R and t.splines:
                    try:
                        k_seeds.append(float(np.real(t.spline_eval(p_seed)[0])))
                    except (ValueError, IndexError):
                        pass
            k_seeds.append(float(center.real))
            for k_seed in k_seeds:
                polish = None
                for even in (True, False):
                    polish = _branch_point_newton(
                        ints, k_seed, p_seed, even=even,
                        k_scale=max(1.0, abs(center)),
                        p_window=(b - a) * 50 + 0.05 * span,
                        k_window=0.3 * R,
                    )
                    if polish is not None:
                        break
                if polish is not None:
                    k_r, p_r = polish
                    if not any(abs(p_r - q) < max(4 * cfg.bracket_width, 1e-9)
                               for _, q in roots):
                        roots.append((k_r, p_r))
                    break
        if not roots:
            roots = [(center.real, mid)]
            polished = False
        else:
            polished = True
        for k_star, p_star in sorted(roots, key=lambda r: r[1]):
            events.append(Event(
                kind="real-touch" if nonreal else "collision",
                p_star=float(p_star),
                kappa_star=complex(k_star),
                labels=labels,
                bracket=(a, b),
                notes="" if polished else "bracket-estimate (Newton failed)",
            ))

    # direct dips of a non-real pair below tol_real not already bracketed
    for lab, t in trajset.trajectories.items():
        # only genuinely non-real trajectories: solver noise on a real line
        # must not read as a pair touching down
        if t.max_abs_im <= 1e-3 * R:
            continue
        im = t.kappas.imag
        ps = t.p_values
        for i in range(1, len(ps) - 1):
            if abs(im[i]) < tol_real and abs(im[i]) <= abs(im[i - 1]) and abs(im[i]) <= abs(im[i + 1]):
                if any(ev.bracket and ev.bracket[0] - span * 0.01 <= ps[i] <= ev.bracket[1] + span * 0.01
                       for ev in events):
                    continue
                events.append(Event(
                    kind="real-touch",
                    p_star=float(ps[i]),
                    kappa_star=complex(t.kappas[i].real),
                    labels=(lab,),
                    notes="sample-level dip",
                ))

    # dedupe events at the same (p*, kappa*): keep the richest label set
    events.sort(key=lambda e: (e.p_star, e.kappa_star.real))
    deduped = []
    for e in events:
        if deduped and abs(e.p_star - deduped[-1].p_star) < max(cfg.bracket_width, 1e-9) \
                and abs(e.kappa_star - deduped[-1].kappa_star) < 1e-3 * R:
            if len(e.labels) > len(deduped[-1].labels):
                deduped[-1] = replace(e, labels=tuple(sorted(set(e.labels + deduped[-1].labels))))
            else:
                deduped[-1] = replace(deduped[-1],
                                      labels=tuple(sorted(set(e.labels + deduped[-1].labels))))
            continue
        deduped.append(e)
    events = deduped

    # veering: spline curvature spikes on real trajectories, outside genuine
    # event windows (1% of the span); threshold 100x the trajectory median
    suppress = [(ev.p_star - 0.01 * span, ev.p_star + 0.01 * span) for ev in events]
    for lab, t in trajset.trajectories.items():
        for (lo, hi, sre, sim) in t.splines:
            if hi - lo < 10 * cfg.bracket_width or not hasattr(sre, "derivative"):
                continue
            try:
                d2re = sre.derivative(2)
                d2im = sim.derivative(2)
            except ValueError:
                continue
            grid = np.linspace(lo, hi, 200)[1:-1]
            curv = np.hypot(d2re(grid), d2im(grid))
            med = np.median(curv)
            floor = 1e-9 * max(1.0, abs(trajset.contour.center))
            if med < floor:
                med = floor
            i = int(np.argmax(curv))
            if curv[i] > 100.0 * med:
                p_v = float(grid[i])
                if any(a <= p_v <= b for a, b in suppress):
                    continue
                events.append(Event(
                    kind="veering",
                    p_star=p_v,
                    kappa_star=complex(t.spline_eval(p_v)[0]),
                    labels=(lab,),
                    notes=f"curvature {curv[i]:.3e} vs median {med:.3e}",
                ))

    events.sort(key=lambda e: (e.p_star, e.kind, e.labels))
    return events


# ---------------------------------------------------------------------------
# refinement near events


def _newton_kappa(ints, k0, p, tol=1e-13, iters=40):
    """Newton for det(., p) = 0 from seed k0; None if it wanders or stalls."""
    k = complex(k0)
    h = 1e-7 * max(1.0, abs(k))
    for _ in range(iters):
        d = ints.det_batch(np.array([k - h, k, k + h]), p)
        dd = (d[2] - d[0]) / (2 * h)
        if dd == 0:
            return None
        step = d[1] / dd
        k = k - step
        if abs(step) < tol * max(1.0, abs(k)):
            return k
        if abs(k - k0) > 0.5:
            return None
    return None


def refine_near_events(trajset: TrajectorySet, events: list) -> TrajectorySet:
    """Add geometrically graded samples toward each real-axis event:
    offsets w * 2^(-j/3), j = 1..40, per side (w = distance to the
    neighboring sample beyond the bracket), giving ~10 samples per decade
    over ~4 decades of |p - p*| for downstream rate fitting.

    Samples are produced by determinant-Newton continuation from the
    outermost offset inward, per participating trajectory, and merged into
    the trajectory sample lists; splines are refitted afterwards. Events at
    the sweep boundary are flagged unresolvable and skipped.
    """
    ints = _internals_of(trajset.nep)
    nep = trajset.nep
    cfg = trajset.adaptive_config
    out_events = []
    for ev in events:
        if ev.kind == "veering":
            out_events.append(ev)
            continue
        p_star = ev.p_star
        if not (cfg.p_min < p_star < cfg.p_max):
            out_events.append(replace(ev, notes=(ev.notes + " unresolvable: outside sweep").strip()))
            continue
        for lab in ev.labels:
            t = trajset.trajectories.get(lab)
            if t is None:
                continue
            for side in (-1.0, +1.0):
                # re-snapshot: the other side's pass may have grown samples
                ps = t.p_values
                kappas = t.kappas
                on_side = ps < p_star if side < 0 else ps > p_star
                if not np.any(on_side):
                    continue
                # width: from p* to the trajectory's nearest existing sample
                # on this side, clipped to the sweep
                nearest = np.min(np.abs(ps[on_side] - p_star))
                w = max(nearest, 10 * cfg.bracket_width)
                lim = (p_star - cfg.p_min) if side < 0 else (cfg.p_max - p_star)
                w = min(w, lim)
                if w <= 0:
                    continue
                # this side only: across the branch point the graph kinks,
                # poisoning polynomial continuation
                sel = on_side & (np.abs(ps - p_star) < 3 * w)
                hist = [(p, k) for p, k in zip(ps[sel], kappas[sel])]
                hist.sort(key=lambda s: abs(s[0] - p_star), reverse=True)
                added = []
                for j in range(1, 41):
                    p_new = p_star + side * w * 2.0 ** (-j / 3.0)
                    if any(abs(p_new - q) < 1e-12 * max(1, abs(p_new)) for q in ps):
                        continue
                    seed_pts = (hist + added)[-4:]
                    seed = _predict([(q, k) for q, k in seed_pts], p_new) \
                        if seed_pts else complex(t.spline_eval(p_new)[0])
                    if abs(seed - trajset.contour.center) > 3 * trajset.contour.radius:
                        continue
                    k_new = _newton_kappa(ints, seed, p_new)
                    if k_new is None:
                        continue
                    # conjugate-half bookkeeping: Newton may land on the
                    # mirror branch; keep the original half-plane
                    if t.max_abs_im > 1e-8 and len(seed_pts):
                        ref = seed_pts[-1][1].imag
                        if ref != 0 and k_new.imag * ref < 0 and abs(k_new.imag) > 1e-12:
                            k_new = k_new.conjugate()
                    added.append((p_new, k_new))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", IllConditionedNullspace)
                    for p_new, k_new in added:
                        coeffs, residual = nullspace_vector(nep, k_new, p_new)
                        t.samples.append((p_new, Eigenpair(
                            kappa=complex(k_new), coeffs=coeffs, p=float(p_new),
                            residual=float(residual), flags=("refined",),
                        )))
            t.samples.sort(key=lambda s: s[0])
        out_events.append(replace(ev, notes=(ev.notes + " refined").strip()))
    fit_splines(trajset)
    events[:] = out_events
    return trajset
