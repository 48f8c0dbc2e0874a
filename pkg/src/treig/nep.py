"""Parametric nonlinear eigenproblems: interior transmission matrices and toys.

A problem is a matrix family L(kappa, p): the 2x2 disk system, the 4x4
annulus system, or one of four 2x2 toy families with closed-form spectra.
Eigenvalues are the kappa with det L(kappa, p) = 0 at fixed parameter p
(refractive index n = p^2 for the transmission problems; the toys use the
same slot for their lambda).

Basis note (annulus). The printed matrix carries J and Y columns in the
p-dependent arguments. Once Im(p*kappa) grows past ~35, Y_m(p*kappa) equals
i*J_m(p*kappa) to machine precision and those columns are numerically
parallel: determinants cancel to exactly 0.0 and nullspaces lose the
(gamma, delta) plane. All internal computation therefore uses the column
basis {H1, H2} = {J + iY, J - iY}, where the two behaviors are separated by
e^{2 Im(p*kappa)}. The change of basis is the constant column transform
T = blockdiag(I2, [[1, 1], [i, -i]]), so the printed determinant is the
solver determinant divided by det T = -2i, and printed coefficients are T
applied to solver-basis coefficients. Public outputs always refer to the
printed basis; the transform is exact (no approximation is introduced).
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from .bessel import hankel_rows, jy_rows

__all__ = [
    "NepProblem",
    "Eigenpair",
    "IllConditionedNullspace",
    "disk_nep",
    "annulus_nep",
    "toy_fixture",
    "evaluate",
    "determinant",
    "nullspace_vector",
]


class IllConditionedNullspace(UserWarning):
    """Two smallest singular values nearly coincide (near-defective point)."""


@dataclass(frozen=True)
class _Internals:
    """Vectorized evaluation hooks used by the solver; not public API.

    printed_batch/solver_batch: (kappa_array, p) -> (N, d, d)
    det_batch: (kappa_array, p) -> (N,) printed-basis determinant values
    det_pair_batch: (kappa_array, p) -> (det, d det/d kappa); analytic where
        the problem provides entry derivatives, finite differences otherwise
    coeffs_from_solver: solver-basis nullvector -> printed-basis coefficients
    """

    printed_batch: Callable
    solver_batch: Callable
    det_batch: Callable
    det_pair_batch: Callable
    coeffs_from_solver: Callable


def _ode_second_derivative(m: int, z: np.ndarray, val: np.ndarray,
                           der: np.ndarray) -> np.ndarray:
    # z^2 Z'' + z Z' + (z^2 - m^2) Z = 0 rearranged; valid for every cylinder
    # function, so one formula serves J, Y and both Hankel combinations
    return -der / z - (1.0 - (m * m) / (z * z)) * val


@dataclass(frozen=True)
class NepProblem:
    dimension: int
    evaluate: Callable[[complex, float], np.ndarray]
    param_domain: tuple[float, float]
    metadata: Mapping
    _internals: _Internals = field(repr=False, compare=False, default=None)

    def with_param_domain(self, p_min: float, p_max: float) -> "NepProblem":
        if not p_min < p_max:
            raise ValueError("param_domain requires p_min < p_max")
        if self.metadata.get("geometry") in ("disk", "annulus") and (
            p_min <= 0 or (p_min <= 1.0 <= p_max)
        ):
            raise ValueError(
                "transmission problems need p > 0 and 1 outside [p_min, p_max]"
            )
        return replace(self, param_domain=(float(p_min), float(p_max)))


@dataclass(frozen=True)
class Eigenpair:
    kappa: complex
    coeffs: np.ndarray
    p: float
    residual: float
    multiplicity: int = 1
    flags: tuple = ()


def _check_itp_point(kappa, p, domain) -> complex:
    kappa = complex(kappa)
    if kappa == 0:
        raise ValueError("kappa = 0 is excluded for transmission problems")
    if not (domain[0] <= p <= domain[1]):
        raise ValueError(f"p = {p} outside param_domain {domain}")
    return kappa


# ---------------------------------------------------------------------------
# determinants by direct expansion (pairwise-summed products; the result is
# differentiated numerically downstream, so pivoting noise matters more than
# speed here)


def _det2_batch(mats: np.ndarray) -> np.ndarray:
    return mats[..., 0, 0] * mats[..., 1, 1] - mats[..., 0, 1] * mats[..., 1, 0]


# complementary-minor signs for Laplace expansion along the first two rows
_MINOR_PAIRS = (
    ((0, 1), (2, 3), 1.0),
    ((0, 2), (1, 3), -1.0),
    ((0, 3), (1, 2), 1.0),
    ((1, 2), (0, 3), 1.0),
    ((1, 3), (0, 2), -1.0),
    ((2, 3), (0, 1), 1.0),
)


def _det4_batch(mats: np.ndarray) -> np.ndarray:
    def minor(rows, cols):
        return (
            mats[..., rows[0], cols[0]] * mats[..., rows[1], cols[1]]
            - mats[..., rows[0], cols[1]] * mats[..., rows[1], cols[0]]
        )

    terms = [
        sign * minor((0, 1), top) * minor((2, 3), bottom)
        for top, bottom, sign in _MINOR_PAIRS
    ]
    return ((terms[0] + terms[1]) + (terms[2] + terms[3])) + (terms[4] + terms[5])


def _det2_pair_batch(mats: np.ndarray, dmats: np.ndarray):
    """(det, d det/d kappa) by the product rule on the 2x2 expansion."""
    a, b = mats[..., 0, 0], mats[..., 0, 1]
    c, d = mats[..., 1, 0], mats[..., 1, 1]
    da, db = dmats[..., 0, 0], dmats[..., 0, 1]
    dc, dd = dmats[..., 1, 0], dmats[..., 1, 1]
    return a * d - b * c, (da * d + a * dd) - (db * c + b * dc)


def _det4_pair_batch(mats: np.ndarray, dmats: np.ndarray):
    """(det, d det/d kappa) by the product rule on the Laplace expansion."""

    def minor_pair(rows, cols):
        a, d = mats[..., rows[0], cols[0]], mats[..., rows[1], cols[1]]
        b, c = mats[..., rows[0], cols[1]], mats[..., rows[1], cols[0]]
        da, dd = dmats[..., rows[0], cols[0]], dmats[..., rows[1], cols[1]]
        db, dc = dmats[..., rows[0], cols[1]], dmats[..., rows[1], cols[0]]
        return a * d - b * c, (da * d + a * dd) - (db * c + b * dc)

    terms = []
    dterms = []
    for top, bottom, sign in _MINOR_PAIRS:
        mt, dmt = minor_pair((0, 1), top)
        mb, dmb = minor_pair((2, 3), bottom)
        terms.append(sign * mt * mb)
        dterms.append(sign * (dmt * mb + mt * dmb))
    det = ((terms[0] + terms[1]) + (terms[2] + terms[3])) + (terms[4] + terms[5])
    ddet = ((dterms[0] + dterms[1]) + (dterms[2] + dterms[3])) + (
        dterms[4] + dterms[5]
    )
    return det, ddet


# ---------------------------------------------------------------------------
# disk


def _j_and_prime(m: int, z: np.ndarray):
    rows, _ = jy_rows(max(m, 1), z, want_y=False)
    if m == 0:
        return rows[0], -rows[1]
    return rows[m], rows[m - 1] - (m / z) * rows[m]


def disk_nep(m: int, param_domain=(1.01, 32.0)) -> NepProblem:
    """2x2 disk transmission system
    [[J_m(kappa),  J_m(p kappa)], [J_m'(kappa), p J_m'(p kappa)]]."""
    m = int(m)
    if m < 0:
        raise ValueError("Bessel order m must be >= 0")

    def _parts(ks: np.ndarray, p: float):
        ks = np.asarray(ks, dtype=np.complex128)
        j1, jp1 = _j_and_prime(m, ks)
        j2, jp2 = _j_and_prime(m, p * ks)
        return ks, j1, jp1, j2, jp2

    def printed_batch(ks: np.ndarray, p: float) -> np.ndarray:
        ks, j1, jp1, j2, jp2 = _parts(ks, p)
        out = np.empty(ks.shape + (2, 2), dtype=np.complex128)
        out[..., 0, 0] = j1
        out[..., 0, 1] = j2
        out[..., 1, 0] = jp1
        out[..., 1, 1] = p * jp2
        return out

    domain = (float(param_domain[0]), float(param_domain[1]))

    def eval_one(kappa, p):
        kappa = _check_itp_point(kappa, p, domain)
        return printed_batch(np.array([kappa]), float(p))[0]

    def det_batch(ks, p):
        return _det2_batch(printed_batch(ks, p))

    def det_pair_batch(ks, p):
        # all entry derivatives come from values already in hand: the column
        # arguments are kappa and p*kappa, second derivatives via the ODE
        ks, j1, jp1, j2, jp2 = _parts(ks, p)
        mats = np.empty(ks.shape + (2, 2), dtype=np.complex128)
        mats[..., 0, 0] = j1
        mats[..., 0, 1] = j2
        mats[..., 1, 0] = jp1
        mats[..., 1, 1] = p * jp2
        dmats = np.empty_like(mats)
        dmats[..., 0, 0] = jp1
        dmats[..., 0, 1] = p * jp2
        dmats[..., 1, 0] = _ode_second_derivative(m, ks, j1, jp1)
        dmats[..., 1, 1] = p * p * _ode_second_derivative(m, p * ks, j2, jp2)
        return _det2_pair_batch(mats, dmats)

    internals = _Internals(
        printed_batch=printed_batch,
        solver_batch=printed_batch,
        det_batch=det_batch,
        det_pair_batch=det_pair_batch,
        coeffs_from_solver=lambda v: v,
    )
    return NepProblem(
        dimension=2,
        evaluate=eval_one,
        param_domain=domain,
        metadata=MappingProxyType({"geometry": "disk", "m": m}),
        _internals=internals,
    )


# ---------------------------------------------------------------------------
# annulus

# The kappa columns (arguments kappa and kappa*r) do not depend on p, and the
# tracker solves at many p over the same contour nodes. Cache them per node
# array. Keyed by content hash; benign race under threads (recompute yields
# identical values).
_KAPPA_COLUMN_CACHE: dict = {}
_KAPPA_CACHE_LIMIT = 32


def _kappa_columns(m: int, r: float, ks: np.ndarray):
    # only quadrature-node-sized arrays are worth remembering; the Newton
    # polish calls in with a fresh small candidate array every iteration and
    # would otherwise flush the node entries straight out of the FIFO
    cacheable = ks.size >= 1024
    if cacheable:
        key = (m, r, hashlib.blake2b(ks.tobytes(), digest_size=16).digest())
        hit = _KAPPA_COLUMN_CACHE.get(key)
        if hit is not None:
            return hit
    top = max(m, 1)
    j_o, y_o = jy_rows(top, ks, want_y=True)
    j_i, y_i = jy_rows(top, r * ks, want_y=True)
    if m == 0:
        jo, jpo, yo, ypo = j_o[0], -j_o[1], y_o[0], -y_o[1]
        ji, jpi, yi, ypi = j_i[0], -j_i[1], y_i[0], -y_i[1]
    else:
        jo, yo = j_o[m], y_o[m]
        jpo = j_o[m - 1] - (m / ks) * jo
        ypo = y_o[m - 1] - (m / ks) * yo
        ji, yi = j_i[m], y_i[m]
        jpi = j_i[m - 1] - (m / (r * ks)) * ji
        ypi = y_i[m - 1] - (m / (r * ks)) * yi
    value = (jo, yo, jpo, ypo, ji, yi, jpi, ypi)
    if cacheable:
        if len(_KAPPA_COLUMN_CACHE) >= _KAPPA_CACHE_LIMIT:
            _KAPPA_COLUMN_CACHE.pop(next(iter(_KAPPA_COLUMN_CACHE)))
        _KAPPA_COLUMN_CACHE[key] = value
    return value


def annulus_nep(m: int, r: float, param_domain=None) -> NepProblem:
    """4x4 annulus transmission system; rows are the outer-boundary value
    and flux matches, then the same at the inner radius r (arguments kappa*r
    and p*kappa*r). The stored nullspace convention is (alpha, beta, -gamma,
    -delta): the printed matrix applied to that vector is zero."""
    m = int(m)
    if m < 0:
        raise ValueError("Bessel order m must be >= 0")
    r = float(r)
    if not 0.0 < r < 1.0:
        raise ValueError("inner radius r must lie in (0, 1)")
    if param_domain is None:
        param_domain = (6.0, 64.0) if m == 0 else (4.0, 25.0)
    domain = (float(param_domain[0]), float(param_domain[1]))

    def _hankel_cols(z: np.ndarray):
        top = max(m, 1)
        h1, h2 = hankel_rows(top, z)
        if m == 0:
            return h1[0], h2[0], -h1[1], -h2[1]
        h1m, h2m = h1[m], h2[m]
        h1p = h1[m - 1] - (m / z) * h1m
        h2p = h2[m - 1] - (m / z) * h2m
        return h1m, h2m, h1p, h2p

    def _assemble(ks: np.ndarray, p: float):
        ks = np.asarray(ks, dtype=np.complex128)
        cols = _kappa_columns(m, r, ks)
        outer = _hankel_cols(p * ks)
        inner = _hankel_cols(p * r * ks)
        jo, yo, jpo, ypo, ji, yi, jpi, ypi = cols
        h1o, h2o, h1po, h2po = outer
        h1i, h2i, h1pi, h2pi = inner
        out = np.empty(ks.shape + (4, 4), dtype=np.complex128)
        out[..., 0, 0] = jo
        out[..., 0, 1] = yo
        out[..., 0, 2] = h1o
        out[..., 0, 3] = h2o
        out[..., 1, 0] = jpo
        out[..., 1, 1] = ypo
        out[..., 1, 2] = p * h1po
        out[..., 1, 3] = p * h2po
        out[..., 2, 0] = ji
        out[..., 2, 1] = yi
        out[..., 2, 2] = h1i
        out[..., 2, 3] = h2i
        out[..., 3, 0] = jpi
        out[..., 3, 1] = ypi
        out[..., 3, 2] = p * h1pi
        out[..., 3, 3] = p * h2pi
        return ks, cols, outer, inner, out

    def solver_batch(ks: np.ndarray, p: float) -> np.ndarray:
        """Matrix in the {J, Y | H1, H2} column basis (see module docstring)."""
        return _assemble(ks, p)[4]

    def printed_batch(ks: np.ndarray, p: float) -> np.ndarray:
        sol = solver_batch(ks, p)
        out = sol.copy()
        # columns {H1, H2} -> {J, Y} = {(H1+H2)/2, (H1-H2)/2i}
        out[..., 2] = 0.5 * (sol[..., 2] + sol[..., 3])
        out[..., 3] = -0.5j * (sol[..., 2] - sol[..., 3])
        return out

    def det_batch(ks, p):
        # det of the printed matrix, evaluated in the solver basis where no
        # column degeneracy occurs; det T = -2i
        return _det4_batch(solver_batch(ks, p)) / (-2.0j)

    def det_pair_batch(ks, p):
        # entry derivatives wrt kappa from the values already computed: the
        # four argument groups kappa, r*kappa, p*kappa, p*r*kappa carry chain
        # factors 1, r, p, p*r, and second derivatives come from the ODE
        ks, cols, outer, inner, mats = _assemble(ks, p)
        jo, yo, jpo, ypo, ji, yi, jpi, ypi = cols
        h1o, h2o, h1po, h2po = outer
        h1i, h2i, h1pi, h2pi = inner
        dm = np.empty_like(mats)
        dm[..., 0, 0] = jpo
        dm[..., 0, 1] = ypo
        dm[..., 0, 2] = p * h1po
        dm[..., 0, 3] = p * h2po
        dm[..., 1, 0] = _ode_second_derivative(m, ks, jo, jpo)
        dm[..., 1, 1] = _ode_second_derivative(m, ks, yo, ypo)
        dm[..., 1, 2] = p * p * _ode_second_derivative(m, p * ks, h1o, h1po)
        dm[..., 1, 3] = p * p * _ode_second_derivative(m, p * ks, h2o, h2po)
        dm[..., 2, 0] = r * jpi
        dm[..., 2, 1] = r * ypi
        dm[..., 2, 2] = p * r * h1pi
        dm[..., 2, 3] = p * r * h2pi
        dm[..., 3, 0] = r * _ode_second_derivative(m, r * ks, ji, jpi)
        dm[..., 3, 1] = r * _ode_second_derivative(m, r * ks, yi, ypi)
        dm[..., 3, 2] = p * p * r * _ode_second_derivative(m, p * r * ks, h1i, h1pi)
        dm[..., 3, 3] = p * p * r * _ode_second_derivative(m, p * r * ks, h2i, h2pi)
        det, ddet = _det4_pair_batch(mats, dm)
        return det / (-2.0j), ddet / (-2.0j)

    def coeffs_from_solver(v: np.ndarray) -> np.ndarray:
        out = np.array(
            [v[0], v[1], v[2] + v[3], 1.0j * (v[2] - v[3])], dtype=np.complex128
        )
        return out

    def eval_one(kappa, p):
        kappa = _check_itp_point(kappa, p, domain)
        return printed_batch(np.array([kappa]), float(p))[0]

    internals = _Internals(
        printed_batch=printed_batch,
        solver_batch=solver_batch,
        det_batch=det_batch,
        det_pair_batch=det_pair_batch,
        coeffs_from_solver=coeffs_from_solver,
    )
    return NepProblem(
        dimension=4,
        evaluate=eval_one,
        param_domain=domain,
        metadata=MappingProxyType({"geometry": "annulus", "m": m, "r": r}),
        _internals=internals,
    )


# ---------------------------------------------------------------------------
# toy families


def toy_fixture(name: str, epsilon: float = None) -> NepProblem:
    """Four 2x2 families with closed-form spectra:

    crossing    diag(lambda - p, lambda + p)
    algebraic   [[lambda, 1], [p, lambda]]
    veering     [[lambda - 2p, eps], [eps, lambda]]   (eps != 0)
    degenerate  [[lambda, p], [0, lambda]]

    Unlike the transmission problems, lambda = 0 is a legitimate point.
    """
    name = str(name)
    if name == "veering":
        if epsilon is None or epsilon == 0:
            raise ValueError("veering requires a nonzero epsilon")
        eps = float(epsilon)
    elif epsilon is not None:
        raise ValueError(f"epsilon only applies to the veering family, not {name!r}")

    def make(batch, meta):
        def eval_one(lam, p):
            return batch(np.array([complex(lam)]), float(p))[0]

        def det_pair(ks, p):
            mats = batch(ks, p)
            # every entry is lambda plus a constant or a constant, so the
            # entry-derivative matrix is the identity for all four families
            dmats = np.broadcast_to(np.eye(2, dtype=np.complex128), mats.shape)
            return _det2_pair_batch(mats, dmats)

        internals = _Internals(
            printed_batch=batch,
            solver_batch=batch,
            det_batch=lambda ks, p: _det2_batch(batch(ks, p)),
            det_pair_batch=det_pair,
            coeffs_from_solver=lambda v: v,
        )
        return NepProblem(
            dimension=2,
            evaluate=eval_one,
            param_domain=(-1.0, 1.0),
            metadata=MappingProxyType(meta),
            _internals=internals,
        )

    if name == "crossing":
        def batch(ks, p):
            ks = np.asarray(ks, dtype=np.complex128)
            out = np.zeros(ks.shape + (2, 2), dtype=np.complex128)
            out[..., 0, 0] = ks - p
            out[..., 1, 1] = ks + p
            return out

        return make(batch, {"geometry": "toy", "name": "crossing"})

    if name == "algebraic":
        def batch(ks, p):
            ks = np.asarray(ks, dtype=np.complex128)
            out = np.empty(ks.shape + (2, 2), dtype=np.complex128)
            out[..., 0, 0] = ks
            out[..., 0, 1] = 1.0
            out[..., 1, 0] = p
            out[..., 1, 1] = ks
            return out

        return make(batch, {"geometry": "toy", "name": "algebraic"})

    if name == "veering":
        def batch(ks, p):
            ks = np.asarray(ks, dtype=np.complex128)
            out = np.empty(ks.shape + (2, 2), dtype=np.complex128)
            out[..., 0, 0] = ks - 2.0 * p
            out[..., 0, 1] = eps
            out[..., 1, 0] = eps
            out[..., 1, 1] = ks
            return out

        return make(batch, {"geometry": "toy", "name": "veering", "epsilon": eps})

    if name == "degenerate":
        def batch(ks, p):
            ks = np.asarray(ks, dtype=np.complex128)
            out = np.zeros(ks.shape + (2, 2), dtype=np.complex128)
            out[..., 0, 0] = ks
            out[..., 0, 1] = p
            out[..., 1, 1] = ks
            return out

        return make(batch, {"geometry": "toy", "name": "degenerate"})

    raise ValueError(
        f"unknown toy {name!r}; expected crossing, algebraic, veering, degenerate"
    )


# ---------------------------------------------------------------------------
# module-level operations


def _internals_of(nep: NepProblem) -> _Internals:
    """The problem's vectorized hooks, or generic ones built from `evaluate`
    for externally constructed problems."""
    if nep._internals is not None:
        return nep._internals
    if nep.dimension > 8:
        raise ValueError("matrix dimensions beyond 8 are not supported")

    def printed_batch(ks, p):
        ks = np.asarray(ks, dtype=np.complex128)
        out = np.empty(ks.shape + (nep.dimension, nep.dimension), np.complex128)
        for i, k in enumerate(ks):
            out[i] = np.asarray(nep.evaluate(complex(k), p), dtype=np.complex128)
        return out

    def det_batch(ks, p):
        mats = printed_batch(ks, p)
        if nep.dimension == 1:
            return mats[..., 0, 0]
        if nep.dimension == 2:
            return _det2_batch(mats)
        if nep.dimension == 4:
            return _det4_batch(mats)
        return np.linalg.det(mats)

    def det_pair_batch(ks, p):
        # externally constructed problems expose no entry derivatives;
        # fall back to central differences on a scale set by the points
        ks = np.asarray(ks, dtype=np.complex128)
        h = 1e-7 * max(1.0, float(np.max(np.abs(ks))))
        d0 = det_batch(ks, p)
        dd = (det_batch(ks + h, p) - det_batch(ks - h, p)) / (2.0 * h)
        return d0, dd

    return _Internals(
        printed_batch=printed_batch,
        solver_batch=printed_batch,
        det_batch=det_batch,
        det_pair_batch=det_pair_batch,
        coeffs_from_solver=lambda v: v,
    )


def evaluate(nep: NepProblem, kappa, p) -> np.ndarray:
    """L(kappa, p) as a dense (printed-basis) matrix."""
    return nep.evaluate(kappa, p)


def determinant(nep: NepProblem, kappa, p) -> complex:
    """det L(kappa, p) by direct expansion (printed-basis value)."""
    if nep.metadata.get("geometry") in ("disk", "annulus"):
        kappa = _check_itp_point(kappa, p, nep.param_domain)
    dets = _internals_of(nep).det_batch(np.array([complex(kappa)]), float(p))
    return complex(dets[0])


def _equilibrated(mat: np.ndarray):
    norms = np.linalg.norm(mat, axis=0)
    norms = np.where(norms == 0, 1.0, norms)
    return mat / norms, norms


def nullspace_vector(nep: NepProblem, kappa, p):
    """Right singular vector of the smallest singular value of L(kappa, p),
    unit norm, first nonzero component real-positive; residual is the
    smallest singular value of the column-equilibrated matrix divided by its
    largest (scale-free). Warns when the two smallest singular values are
    within 1e-8 of each other after normalization (near-defective point)."""
    mat = nep.evaluate(kappa, p)
    eq, _ = _equilibrated(mat)
    _, s, vh = np.linalg.svd(eq)
    smax = s[0] if s[0] > 0 else 1.0
    residual = float(s[-1] / smax)
    if nep.dimension >= 2 and (s[-2] - s[-1]) / smax <= 1e-8:
        warnings.warn(
            f"near-defective point: two smallest singular values within 1e-8 "
            f"(kappa={kappa}, p={p})",
            IllConditionedNullspace,
            stacklevel=2,
        )
    v = vh[-1].conj()
    return _fix_phase(v), residual


def _fix_phase(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128)
    nrm = np.linalg.norm(v)
    if nrm > 0:
        v = v / nrm
    for x in v:
        if abs(x) > 1e-14:
            ph = x / abs(x)
            v = v / ph
            # pin the leading entry's imaginary part to exactly zero
            idx = int(np.argmax(np.abs(v) > 1e-14))
            v[idx] = v[idx].real
            break
    return v
