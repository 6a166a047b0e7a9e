"""Generalized-least-squares information machinery.

The observation model: each scan is a sum of per-type responses (design matrix
times sampled HRF heights times a type amplitude), plus a polynomial nuisance
drift, plus AR(1) noise with unit innovation variance.  After whitening and
residualizing the drift, the information matrix for the Q amplitudes treats
the two free HRF parameters as a nuisance direction that gets projected out:

    M = E' (I - w{L}) E,   E = [I - w{VS}] V X (I_Q kron h),
    L_i = [I - w{VS}] V X (I_Q kron dh_i) theta',  i in {p1, p6},

with w{A} = A (A'A)^- A'.  The A-criterion value is 1/trace(M^{-1}), zero
when M is singular or near-singular.

The evaluator caches the residualizing operator per configuration and reduces
each design to a Gram matrix of its residualized columns, after which every
(theta, p) grid point costs only small dense algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .designs import Design, delta_t, design_matrix
from .errors import ConfigurationError
from .hrf import HrfParams, default_hrf_length, hrf_bundle

RCOND_SINGULAR = 1e-12  # below this reciprocal condition number, phi_a = 0
DEFAULT_RUN_SHIFT = 1.25


@dataclass(frozen=True)
class NoiseSpec:
    """AR(1) correlation and the number of independent runs."""

    rho: float = 0.3
    runs: int = 1

    def __post_init__(self) -> None:
        if not -1.0 < self.rho < 1.0:
            raise ConfigurationError(f"rho must lie in (-1, 1) (got {self.rho})")
        if self.runs not in (1, 2):
            raise ConfigurationError(f"runs must be 1 or 2 (got {self.runs})")


@dataclass(frozen=True)
class DriftSpec:
    """Polynomial drift order (per run)."""

    order: int = 2

    def __post_init__(self) -> None:
        if self.order < 0:
            raise ConfigurationError(f"drift order must be >= 0 (got {self.order})")


@dataclass(frozen=True)
class InfoMatrix:
    """Information matrix for the type amplitudes at one parameter point."""

    m: np.ndarray
    theta: tuple[float, ...]
    p: HrfParams

    def __post_init__(self) -> None:
        m = np.asarray(self.m, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)


def whitening_matrix(n_scans: int, rho: float) -> np.ndarray:
    """Lower-bidiagonal AR(1) whitener: V Sigma V' = I for the AR(1)
    covariance Sigma_ij = rho^|i-j| / (1 - rho^2) (unit innovation variance)."""
    if n_scans < 1:
        raise ConfigurationError(f"n_scans must be >= 1 (got {n_scans})")
    if not -1.0 < rho < 1.0:
        raise ConfigurationError(f"rho must lie in (-1, 1) (got {rho})")
    v = np.eye(n_scans)
    v[0, 0] = math.sqrt(1.0 - rho * rho)
    idx = np.arange(1, n_scans)
    v[idx, idx - 1] = -rho
    return v


def drift_matrix(n_scans: int, order: int) -> np.ndarray:
    """Orthonormal polynomial drift basis (QR of centered monomials)."""
    if order < 0:
        raise ConfigurationError(f"order must be >= 0 (got {order})")
    if n_scans < order + 1:
        raise ConfigurationError(f"need at least order+1={order + 1} scans (got {n_scans})")
    t = np.arange(1, n_scans + 1, dtype=float)
    tc = t - t.mean()
    raw = np.column_stack([tc ** j for j in range(order + 1)])
    q, r = np.linalg.qr(raw)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def projection(a: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column space of `a`.

    Rank decided by SVD with tolerance max(shape) * eps * s_max; an empty or
    all-zero matrix projects onto nothing.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] == 0 or not np.any(a):
        return np.zeros((n, n))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    tol = max(a.shape) * np.finfo(float).eps * s[0]
    rank = int(np.sum(s > tol))
    p = u[:, :rank] @ u[:, :rank].T
    return 0.5 * (p + p.T)


def _block_diag(*mats: np.ndarray) -> np.ndarray:
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


class Evaluator:
    """Criterion evaluation for designs of one fixed configuration.

    Configuration = (types, slots, ISI, TR, noise, drift, run shift).  The
    whitened drift-residualizing operator is built once; each design then
    yields a Gram matrix from which information matrices at any (theta, p)
    follow by small quadratic forms.
    """

    def __init__(self, q_types: int, n_slots: int, isi: float, tr: float,
                 noise: NoiseSpec, drift: DriftSpec,
                 run_shift: float = DEFAULT_RUN_SHIFT,
                 hrf_length: int | None = None) -> None:
        self.q_types = q_types
        self.n_slots = n_slots
        self.isi = isi
        self.tr = tr
        self.noise = noise
        self.drift = drift
        self.run_shift = run_shift
        self.delta = delta_t(isi, tr)
        self.hrf_length = hrf_length if hrf_length is not None else default_hrf_length(self.delta)
        self.offsets = (0.0,) if noise.runs == 1 else (0.0, run_shift)
        risi = int(round(isi / self.delta))
        rtr = int(round(tr / self.delta))
        if (n_slots * risi) % rtr != 0:
            raise ConfigurationError(
                f"L*isi must be a whole number of scans (L={n_slots}, isi={isi}, tr={tr})")
        self.scans_per_run = (n_slots * risi) // rtr
        v = whitening_matrix(self.scans_per_run, noise.rho)
        s = drift_matrix(self.scans_per_run, drift.order)
        if noise.runs == 2:
            v = _block_diag(v, v)
            s = _block_diag(s, s)
        self.n_scans = v.shape[0]
        resid = np.eye(self.n_scans) - projection(v @ s)
        self.residualizer = resid @ v
        self.width = noise.runs * self.hrf_length  # columns per type block

    # -- per-design pieces ------------------------------------------------

    def _check(self, d: Design) -> None:
        if d.q_types != self.q_types or len(d) != self.n_slots or d.isi != self.isi:
            raise ConfigurationError(
                f"design (q={d.q_types}, L={len(d)}, isi={d.isi}) does not match "
                f"evaluator (q={self.q_types}, L={self.n_slots}, isi={self.isi})")

    def type_blocks(self, d: Design) -> list[np.ndarray]:
        """Per-type design-matrix blocks, stacked block-diagonally over runs."""
        self._check(d)
        dm = design_matrix(d, self.tr, hrf_length=self.hrf_length)
        if self.noise.runs == 1:
            return list(dm.blocks)
        return [_block_diag(x, x) for x in dm.blocks]

    def residualized(self, d: Design) -> np.ndarray:
        """Residualizing operator applied to all design columns (n_scans x Q*width)."""
        x = np.hstack(self.type_blocks(d))
        return self.residualizer @ x

    def gram(self, d: Design) -> np.ndarray:
        u = self.residualized(d)
        y = u.T @ u
        return 0.5 * (y + y.T)

    def bundle(self, p: HrfParams) -> np.ndarray:
        """(width, 3) columns: heights, d/dp1, d/dp6, stacked over run offsets."""
        return hrf_bundle(p.p1, p.p6, self.delta, self.offsets, self.hrf_length)

    # -- explicit matrices (single points; used by contracts and tests) ----

    def e_matrix(self, d: Design, p: HrfParams) -> np.ndarray:
        blocks = self.type_blocks(d)
        h = self.bundle(p)[:, 0]
        cols = [self.residualizer @ (x @ h) for x in blocks]
        return np.column_stack(cols)

    def l_matrix(self, d: Design, theta, p: HrfParams) -> np.ndarray:
        blocks = self.type_blocks(d)
        w = self.bundle(p)
        th = np.asarray(theta, dtype=float)
        if th.shape != (self.q_types,):
            raise ConfigurationError(
                f"theta must have {self.q_types} components (got shape {th.shape})")
        cols = []
        for j in (1, 2):  # derivative columns of the bundle
            acc = np.zeros(self.n_scans)
            for q, x in enumerate(blocks):
                if th[q] != 0.0:
                    acc = acc + th[q] * (x @ w[:, j])
            cols.append(self.residualizer @ acc)
        return np.column_stack(cols)

    def info_matrix(self, d: Design, theta, p: HrfParams) -> np.ndarray:
        phi, m = self._phi_from_gram(self.gram(d), [tuple(np.asarray(theta, dtype=float))], [p],
                                     want_matrices=True)
        return m[0, 0]

    def phi_a(self, d: Design, theta, p: HrfParams) -> float:
        grid = self.phi_a_grid(d, [tuple(np.asarray(theta, dtype=float))], [p])
        return float(grid[0, 0])

    # -- fast grid path -----------------------------------------------------

    def phi_a_grid(self, d: Design, thetas, ps) -> np.ndarray:
        """A-criterion values over a product grid: result[i, j] is the value
        at thetas[i], ps[j]."""
        out, _ = self._phi_from_gram(self.gram(d), list(thetas), list(ps))
        return out

    def _phi_from_gram(self, y: np.ndarray, thetas: list, ps: list,
                       want_matrices: bool = False):
        q = self.q_types
        th = np.asarray(thetas, dtype=float)
        if th.size == 0:
            th = th.reshape(0, q)
        if th.ndim != 2 or th.shape[1] != q:
            raise ConfigurationError(f"thetas must be (n, {q}) (got {th.shape})")
        n_t, n_p = th.shape[0], len(ps)
        if n_t == 0 or n_p == 0:
            empty = np.empty((n_t, n_p))
            return empty, (np.empty((n_t, n_p, q, q)) if want_matrices else None)
        w_all = np.stack([self.bundle(p) for p in ps])  # (n_p, width, 3)
        y4 = y.reshape(q, self.width, q, self.width)
        # g[p, qa, qb, i, j] = w_i' Y[qa, qb] w_j over bundle columns i, j
        g = np.einsum("pui,aubv,pvj->pabij", w_all, y4, w_all, optimize=True)
        a00 = g[..., 0, 0]
        a00 = 0.5 * (a00 + np.transpose(a00, (0, 2, 1)))
        # E'L columns and L'L entries for the whole theta x p batch at once
        el = np.stack([np.einsum("tb,pab->tpa", th, g[..., 0, 1]),
                       np.einsum("tb,pab->tpa", th, g[..., 0, 2])], axis=3)
        l11 = np.einsum("ta,pab,tb->tp", th, g[..., 1, 1], th)
        l16 = np.einsum("ta,pab,tb->tp", th, g[..., 1, 2], th)
        l66 = np.einsum("ta,pab,tb->tp", th, g[..., 2, 2], th)
        inv = _pinv_sym2_batch(l11, l16, l66)           # (n_t, n_p, 2, 2)
        corr = np.einsum("tpai,tpij,tpbj->tpab", el, inv, el)
        m = a00[None, :, :, :] - corr
        m = 0.5 * (m + np.transpose(m, (0, 1, 3, 2)))
        out = _phi_batch(m)
        return out, (m if want_matrices else None)


def _pinv_sym2_batch(a, b, c) -> np.ndarray:
    """Moore-Penrose inverse of symmetric PSD 2x2 [[a, b], [b, c]] batches;
    a, b, c may have any common shape."""
    a = np.asarray(a, dtype=float)
    t = a + c
    s = np.sqrt((a - c) ** 2 + 4.0 * b * b)
    lmax = 0.5 * (t + s)
    lmin = 0.5 * (t - s)
    det = a * c - b * b
    out = np.zeros(a.shape + (2, 2))
    full = lmin > 1e-13 * lmax
    if np.any(full):
        d = det[full]
        out[full, 0, 0] = c[full] / d
        out[full, 1, 1] = a[full] / d
        out[full, 0, 1] = out[full, 1, 0] = -b[full] / d
    # rank-one fallback: M/lmax^2 approximates the truncated inverse
    rank1 = (~full) & (lmax > 0)
    if np.any(rank1):
        sc = lmax[rank1] ** 2
        out[rank1, 0, 0] = a[rank1] / sc
        out[rank1, 1, 1] = c[rank1] / sc
        out[rank1, 0, 1] = out[rank1, 1, 0] = b[rank1] / sc
    return out


def _phi_batch(m: np.ndarray) -> np.ndarray:
    """1/trace(M^{-1}) for a stack (any leading shape) of symmetric matrices;
    0 where the reciprocal condition number is at or below RCOND_SINGULAR."""
    q = m.shape[-1]
    if q == 1:
        vals = m[..., 0, 0]
        return np.where(vals > 0.0, vals, 0.0)
    if q == 2:
        a = m[..., 0, 0]
        b = m[..., 0, 1]
        c = m[..., 1, 1]
        t = a + c
        s = np.sqrt((a - c) ** 2 + 4.0 * b * b)
        lmax = 0.5 * (t + s)
        lmin = 0.5 * (t - s)
        det = a * c - b * b
        ok = (lmax > 0) & (lmin > RCOND_SINGULAR * lmax)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(ok, det / t, 0.0)
        return phi
    lam = np.linalg.eigvalsh(m)
    lmin = lam[..., 0]
    lmax = lam[..., -1]
    ok = (lmax > 0) & (lmin > RCOND_SINGULAR * lmax)
    with np.errstate(divide="ignore", invalid="ignore"):
        tr_inv = np.sum(1.0 / np.where(lam > 0, lam, 1.0), axis=-1)
    return np.where(ok, 1.0 / tr_inv, 0.0)


def phi_from_info(m: np.ndarray) -> float:
    """1/trace(M^{-1}) for a single symmetric matrix (0 if near-singular)."""
    m = np.asarray(m, dtype=float)
    return float(_phi_batch(m[None, :, :])[0])


@lru_cache(maxsize=16)
def get_evaluator(q_types: int, n_slots: int, isi: float, tr: float,
                  noise: NoiseSpec, drift: DriftSpec,
                  run_shift: float = DEFAULT_RUN_SHIFT,
                  hrf_length: int | None = None) -> Evaluator:
    """Shared evaluator cache keyed by the full configuration."""
    return Evaluator(q_types, n_slots, isi, tr, noise, drift,
                     run_shift=run_shift, hrf_length=hrf_length)


def evaluator_for(d: Design, tr: float, noise: NoiseSpec, drift: DriftSpec,
                  run_shift: float = DEFAULT_RUN_SHIFT,
                  hrf_length: int | None = None) -> Evaluator:
    return get_evaluator(d.q_types, len(d), d.isi, tr, noise, drift,
                         run_shift=run_shift, hrf_length=hrf_length)


# -- single-point contract functions ----------------------------------------

def e_matrix(d: Design, p: HrfParams, noise: NoiseSpec, drift: DriftSpec,
             tr: float, run_shift: float = DEFAULT_RUN_SHIFT) -> np.ndarray:
    return evaluator_for(d, tr, noise, drift, run_shift).e_matrix(d, p)


def l_matrix(d: Design, theta, p: HrfParams, noise: NoiseSpec, drift: DriftSpec,
             tr: float, run_shift: float = DEFAULT_RUN_SHIFT) -> np.ndarray:
    return evaluator_for(d, tr, noise, drift, run_shift).l_matrix(d, theta, p)


def info_matrix(d: Design, theta, p: HrfParams, noise: NoiseSpec, drift: DriftSpec,
                tr: float, run_shift: float = DEFAULT_RUN_SHIFT) -> InfoMatrix:
    m = evaluator_for(d, tr, noise, drift, run_shift).info_matrix(d, theta, p)
    return InfoMatrix(m=m, theta=tuple(float(x) for x in theta), p=p)


def phi_a(d: Design, theta, p: HrfParams, noise: NoiseSpec, drift: DriftSpec,
          tr: float, run_shift: float = DEFAULT_RUN_SHIFT) -> float:
    return evaluator_for(d, tr, noise, drift, run_shift).phi_a(d, theta, p)


def two_run_phi_a(d: Design, theta, p: HrfParams, noise: NoiseSpec, drift: DriftSpec,
                  tr: float, shift: float = DEFAULT_RUN_SHIFT) -> float:
    """A-criterion for the same design presented in two runs, the second with
    onsets offset by `shift` seconds relative to the scans."""
    if noise.runs != 2:
        raise ConfigurationError("two_run_phi_a needs NoiseSpec(runs=2)")
    return phi_a(d, theta, p, noise, drift, tr, run_shift=shift)
