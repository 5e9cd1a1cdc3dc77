"""Random-variate and path generation under a counter-based seed contract.

Streams: every path owns a Philox generator keyed by the 64-bit master
seed with counter block (0, 0, substream, stream_id).  The draws of path
``stream_id`` therefore never depend on batch size, worker count or
scheduling, and the substream index keeps the mixing variable, the
subordinator and the Gaussian path of one sample mutually independent.

Batch generation consumes a fixed number of uniforms per path and maps
them through inverse CDFs (scipy.special.ndtri for normals), so scalar
and batched sampling produce identical numbers for the same seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtri

from .phi import TimeLawCDF

__all__ = [
    "SUB_EXTRA",
    "SUB_GAUSSIAN",
    "SUB_MIXING",
    "SUB_SUBORDINATOR",
    "BernsteinSpec",
    "GridTooCoarse",
    "HomogeneousProductLaw",
    "InvalidHurst",
    "InverseSubordinatorLaw",
    "NumericCDFLaw",
    "PathGrid",
    "SeedSpec",
    "fbm_paths_batch",
    "draw_subordinated_time",
    "inverse_passage_batch",
    "mixing_from_uniforms",
    "path_rng",
    "path_uniforms",
    "sample_A_stable_mixing",
    "sample_fbm_path",
    "sample_markov_path",
    "sample_rsgp_path",
    "sample_scriptA",
    "sample_stable_subordinator",
    "sample_time_change",
    "stable_onesided_from_uniforms",
    "stable_symmetric_from_uniforms",
]

# substream roles within one path
SUB_MIXING = 0  # the amplitude variable of the time-change law
SUB_SUBORDINATOR = 1  # one-sided stable / Bernstein subordinator draws
SUB_GAUSSIAN = 2  # Brownian / fractional Gaussian path noise
SUB_EXTRA = 3

_TINY = 1e-15


class GridTooCoarse(RuntimeError):
    """First-passage bracketing failed within the step budget."""


class InvalidHurst(ValueError):
    """theta/(2 gamma) outside (0,1) for the scaled-fBM representation."""


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus path index; identical pairs give identical draws."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        if self.stream_id < 0:
            raise ValueError("stream_id must be nonnegative")


def path_rng(seed: SeedSpec, substream: int = 0) -> np.random.Generator:
    bg = np.random.Philox(
        key=np.uint64(seed.master_seed),
        counter=[0, 0, np.uint64(substream), np.uint64(seed.stream_id)],
    )
    return np.random.Generator(bg)


def path_uniforms(
    master_seed: int, substream: int, n_paths: int, k: int, start: int = 0
) -> np.ndarray:
    """(n_paths, k) uniforms; row i reproduces the first k draws of the
    per-path generator for stream_id = start + i."""
    out = np.empty((n_paths, k))
    for i in range(n_paths):
        out[i] = path_rng(SeedSpec(master_seed, start + i), substream).random(k)
    return out


def _clip_open(u: np.ndarray) -> np.ndarray:
    return np.clip(u, _TINY, 1.0 - _TINY)


# ---------------------------------------------------------------------------
# stable draws (Kanter / Chambers-Mallows-Stuck)
# ---------------------------------------------------------------------------

def stable_onesided_from_uniforms(u1, u2, gamma: float):
    """Standard one-sided gamma-stable draw with E[e^{-lam X}] = e^{-lam^gamma},
    from two uniforms (Kanter's representation)."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    u1 = _clip_open(np.asarray(u1, dtype=float))
    u2 = _clip_open(np.asarray(u2, dtype=float))
    if gamma == 1.0:
        return np.ones_like(u1)
    th = u1 * math.pi
    e = -np.log1p(-u2)
    a = (
        np.sin((1.0 - gamma) * th)
        * np.sin(gamma * th) ** (gamma / (1.0 - gamma))
        / np.sin(th) ** (1.0 / (1.0 - gamma))
    )
    return (a / e) ** ((1.0 - gamma) / gamma)


def stable_symmetric_from_uniforms(u1, u2, delta: float):
    """Standard symmetric delta-stable draw with E[e^{i u X}] = e^{-|u|^delta}."""
    if not 0.0 < delta <= 2.0:
        raise ValueError("delta must lie in (0, 2]")
    u1 = _clip_open(np.asarray(u1, dtype=float))
    u2 = _clip_open(np.asarray(u2, dtype=float))
    if delta == 2.0:
        return math.sqrt(2.0) * ndtri(u1)
    v = (u1 - 0.5) * math.pi
    e = -np.log1p(-u2)
    return (
        np.sin(delta * v)
        / np.cos(v) ** (1.0 / delta)
        * (np.cos((1.0 - delta) * v) / e) ** ((1.0 - delta) / delta)
    )


def sample_stable_subordinator(gamma: float, t: float, seed: SeedSpec) -> float:
    """One draw of the gamma-stable subordinator at time t:
    E[e^{-lam eta_t}] = e^{-t lam^gamma}; gamma = 1 is the identity."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if gamma == 1.0:
        return float(t)
    u = path_rng(seed, SUB_SUBORDINATOR).random(2)
    return float(t ** (1.0 / gamma) * stable_onesided_from_uniforms(u[0], u[1], gamma))


def sample_A_stable_mixing(beta: float, seed: SeedSpec) -> float:
    """Draw of the nonnegative amplitude with Laplace transform E_beta(-.),
    realized as eta^{-beta} for a standard beta-stable draw eta."""
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    if beta == 1.0:
        return 1.0
    u = path_rng(seed, SUB_MIXING).random(2)
    eta = stable_onesided_from_uniforms(u[0], u[1], beta)
    return float(eta ** (-beta))


def mixing_from_uniforms(u1, u2, beta: float):
    if beta == 1.0:
        return np.ones_like(np.asarray(u1, dtype=float))
    return stable_onesided_from_uniforms(u1, u2, beta) ** (-beta)


def sample_scriptA(
    gamma: float, a_sampler: Callable[[SeedSpec], float], seed: SeedSpec
) -> float:
    """Draw of the combined amplitude A^{1/gamma} * eta_1 splitting the
    randomness of the subordinated time change from its t-dependence."""
    a = a_sampler(seed)
    if gamma == 1.0:
        return float(a)
    eta1 = sample_stable_subordinator(gamma, 1.0, seed)
    return float(a ** (1.0 / gamma) * eta1)


# ---------------------------------------------------------------------------
# Bernstein functions and time-change laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BernsteinSpec:
    """Laplace exponent of a driftful sum of stable subordinators:

        f(lam) = drift * lam + sum_j w_j lam^{e_j},  e_j in (0, 1).

    ``identity`` is f(lam) = lam, ``stable_power`` is f(lam) = lam^gamma.
    The killing coefficient of the general triplet is fixed to zero.
    """

    kind: str  # identity | stable_power | drift_plus_stable_sum
    gamma: float = 1.0
    drift: float = 0.0
    terms: tuple[tuple[float, float], ...] = ()  # (weight, exponent)

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "stable_power", "drift_plus_stable_sum"):
            raise ValueError(f"unknown Bernstein form {self.kind!r}")
        if self.kind == "stable_power" and not 0.0 < self.gamma <= 1.0:
            raise ValueError("stable_power requires gamma in (0, 1]")
        if self.kind == "drift_plus_stable_sum":
            if self.drift < 0:
                raise ValueError("drift must be nonnegative")
            for w, e in self.terms:
                if w <= 0 or not 0.0 < e < 1.0:
                    raise ValueError("terms need weight > 0 and exponent in (0,1)")

    @classmethod
    def identity(cls) -> "BernsteinSpec":
        return cls(kind="identity")

    @classmethod
    def stable_power(cls, gamma: float) -> "BernsteinSpec":
        if gamma == 1.0:
            return cls.identity()
        return cls(kind="stable_power", gamma=gamma)

    @classmethod
    def drift_plus_stable_sum(cls, drift, terms) -> "BernsteinSpec":
        return cls(kind="drift_plus_stable_sum", drift=drift, terms=tuple(terms))

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def value(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.kind == "identity":
            return lam
        if self.kind == "stable_power":
            return lam**self.gamma
        acc = self.drift * lam
        for w, e in self.terms:
            acc = acc + w * lam**e
        return acc

    def increments_from_uniforms(self, u: np.ndarray, dt: float) -> np.ndarray:
        """Subordinator increments over steps of length dt; u has shape
        (..., n_steps, 2 * n_stable_terms)."""
        if self.kind == "identity":
            return np.full(u.shape[:-1], dt)
        if self.kind == "stable_power":
            draw = stable_onesided_from_uniforms(u[..., 0], u[..., 1], self.gamma)
            return dt ** (1.0 / self.gamma) * draw
        acc = np.full(u.shape[:-1], self.drift * dt)
        for j, (w, e) in enumerate(self.terms):
            draw = stable_onesided_from_uniforms(
                u[..., 2 * j], u[..., 2 * j + 1], e
            )
            acc = acc + (w * dt) ** (1.0 / e) * draw
        return acc

    @property
    def n_stable_terms(self) -> int:
        if self.kind == "identity":
            return 0
        if self.kind == "stable_power":
            return 1
        return len(self.terms)


def draw_subordinated_time(bern: BernsteinSpec, tau, u: np.ndarray):
    """eta^f at independent times tau (one draw per row of u)."""
    tau = np.asarray(tau, dtype=float)
    if bern.kind == "identity":
        return tau
    if bern.kind == "stable_power":
        draw = stable_onesided_from_uniforms(u[..., 0], u[..., 1], bern.gamma)
        return tau ** (1.0 / bern.gamma) * draw
    acc = bern.drift * tau
    for j, (w, e) in enumerate(bern.terms):
        draw = stable_onesided_from_uniforms(u[..., 2 * j], u[..., 2 * j + 1], e)
        acc = acc + (w * tau) ** (1.0 / e) * draw
    return acc


# -- time-change laws -------------------------------------------------------

@dataclass(frozen=True)
class HomogeneousProductLaw:
    """A(t) = A * t^theta with an amplitude sampler for A."""

    theta: float
    mixing_from_uniforms: Callable  # (u1, u2) -> draws of A
    uniforms_needed: int = 2

    def sample_from_uniforms(self, t: float, u: np.ndarray):
        return self.mixing_from_uniforms(u[..., 0], u[..., 1]) * t**self.theta


@dataclass(frozen=True)
class InverseSubordinatorLaw:
    """A(t) = first passage of the Bernstein subordinator above level t."""

    bernstein: BernsteinSpec
    steps_per_unit: int = 2**14
    max_chunks: int = 64

    def __post_init__(self) -> None:
        if self.bernstein.is_identity:
            return
        if self.bernstein.kind == "stable_power":
            return
        if self.bernstein.kind != "drift_plus_stable_sum" or not self.bernstein.terms:
            raise ValueError("inverse-subordinator law needs a simulable Bernstein form")


@dataclass(frozen=True)
class NumericCDFLaw:
    """A(t) sampled by inverting a tabulated CDF per evaluation time."""

    cdf_for_t: Callable[[float], TimeLawCDF]

    def sample_from_uniforms(self, t: float, u: np.ndarray):
        cdf = self.cdf_for_t(t)
        return cdf.quantile(u[..., 0])


def _passage_scale(bern: BernsteinSpec, t: float) -> float:
    """Crude deterministic proxy for the passage time of level t."""

    def proxy(s: float) -> float:
        if bern.kind == "stable_power":
            return s ** (1.0 / bern.gamma)
        return bern.drift * s + sum((w * s) ** (1.0 / e) for w, e in bern.terms)

    hi = 1e-9
    while proxy(hi) < t and hi < 1e12:
        hi *= 2.0
    return hi


def inverse_passage_batch(
    bern: BernsteinSpec,
    t: float,
    n_paths: int,
    master_seed: int,
    substream: int = SUB_SUBORDINATOR,
    steps_per_unit: int = 2**14,
    max_chunks: int = 64,
    start: int = 0,
) -> np.ndarray:
    """First-passage times of eta^f above level t for a batch of paths,
    with linear bracketing inside the crossing step.

    The grid step is fixed by the unit-level passage scale (not by t), so
    one path queried at several levels stays on the same trajectory and
    the passage times are nondecreasing in t.
    """
    if t == 0.0:
        return np.zeros(n_paths)
    if bern.is_identity:
        return np.full(n_paths, t)
    dt = _passage_scale(bern, 1.0) / steps_per_unit if steps_per_unit > 0 else 1.0
    n_cols = 2 * bern.n_stable_terms
    out = np.empty(n_paths)
    chunk = 8192
    # per-path simulation keeps the draw sequence a function of stream_id
    for i in range(n_paths):
        rng = path_rng(SeedSpec(master_seed, start + i), substream)
        level = 0.0
        s_prev = 0.0
        found = False
        for _ in range(max_chunks):
            u = rng.random((chunk, n_cols))
            inc = bern.increments_from_uniforms(u, dt)
            css = level + np.cumsum(inc)
            idx = np.searchsorted(css, t, side="right")
            if idx < chunk:
                eta_prev = css[idx - 1] if idx > 0 else level
                eta_next = css[idx]
                frac = (t - eta_prev) / max(eta_next - eta_prev, 1e-300)
                out[i] = s_prev + (idx + frac) * dt
                found = True
                break
            level = css[-1]
            s_prev += chunk * dt
        if not found:
            raise GridTooCoarse(
                f"no passage above t={t:g} within {max_chunks} chunks of "
                f"{chunk} steps (dt={dt:g})"
            )
    return out


def sample_time_change(law, t: float, seed: SeedSpec) -> float:
    """One draw of the time change A(t); A(0) = 0 almost surely."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return 0.0
    if isinstance(law, HomogeneousProductLaw):
        u = path_rng(seed, SUB_MIXING).random(law.uniforms_needed)
        return float(law.sample_from_uniforms(t, u))
    if isinstance(law, NumericCDFLaw):
        u = path_rng(seed, SUB_MIXING).random(1)
        return float(law.sample_from_uniforms(t, u))
    if isinstance(law, InverseSubordinatorLaw):
        return float(
            inverse_passage_batch(
                law.bernstein,
                t,
                1,
                seed.master_seed,
                steps_per_unit=law.steps_per_unit,
                max_chunks=law.max_chunks,
                start=seed.stream_id,
            )[0]
        )
    raise TypeError(f"unknown time-change law {type(law).__name__}")


# ---------------------------------------------------------------------------
# path grids, fractional Brownian motion, process paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathGrid:
    horizon: float
    n_steps: int

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


def _fgn_eigenvalues(H: float, n: int) -> np.ndarray:
    i = np.arange(n)
    rho = 0.5 * (
        np.abs(i + 1.0) ** (2 * H) + np.abs(i - 1.0) ** (2 * H)
    ) - np.abs(i) ** (2 * H)
    c = np.concatenate([rho, [0.0], rho[1:][::-1]])
    return np.fft.fft(c).real


def fbm_paths_batch(
    H: float,
    grid: PathGrid,
    master_seed: int,
    n_paths: int,
    substream: int = SUB_GAUSSIAN,
    start: int = 0,
) -> np.ndarray:
    """(n_paths, n_steps+1) exact-covariance fractional Brownian paths.

    Circulant embedding (Davies-Harte) is used when the embedding is
    nonnegative; otherwise a dense Cholesky factor of the increment
    covariance (n_steps <= 2048) takes over.  Either branch consumes the
    same fixed uniform layout per path.
    """
    if not 0.0 < H < 1.0:
        raise InvalidHurst("Hurst parameter must lie in (0, 1)")
    n = grid.n_steps
    dt = grid.horizon / n
    u = path_uniforms(master_seed, substream, n_paths, 2 * n, start)
    z = ndtri(_clip_open(u))
    g = _fgn_eigenvalues(H, n)
    paths = np.empty((n_paths, n + 1))
    paths[:, 0] = 0.0
    if np.min(g) >= -1e-9 * np.max(g):
        g = np.maximum(g, 0.0)
        w = np.empty((n_paths, 2 * n), dtype=complex)
        w[:, 0] = z[:, 0]
        w[:, n] = z[:, n]
        w[:, 1:n] = (z[:, 1:n] + 1j * z[:, n + 1 :]) / math.sqrt(2.0)
        w[:, n + 1 :] = np.conj(w[:, 1:n][:, ::-1])
        fgn = math.sqrt(2 * n) * np.fft.ifft(np.sqrt(g)[None, :] * w, axis=1).real[:, :n]
    else:
        if n > 2048:
            raise InvalidHurst(
                "circulant embedding failed and the grid is too large for "
                "the Cholesky fallback"
            )
        i, j = np.indices((n, n))
        lag = np.abs(i - j)
        cov = 0.5 * (
            (lag + 1.0) ** (2 * H) + np.abs(lag - 1.0) ** (2 * H)
        ) - lag ** (2.0 * H)
        L = np.linalg.cholesky(cov + 1e-14 * np.eye(n))
        fgn = z[:, :n] @ L.T
    paths[:, 1:] = np.cumsum(fgn, axis=1) * dt**H
    return paths


def sample_fbm_path(H: float, grid: PathGrid, seed: SeedSpec) -> np.ndarray:
    """One exact-covariance fractional Brownian path on the grid."""
    return fbm_paths_batch(H, grid, seed.master_seed, 1, start=seed.stream_id)[0]


def sample_rsgp_path(
    kind: str,
    cal_a: float,
    gamma: float,
    theta: float,
    grid: PathGrid,
    seed: SeedSpec,
) -> np.ndarray:
    """Path of the randomly scaled Gaussian representation, conditioned on
    the supplied amplitude draw.

    kind: 'timechanged_bm'  B at the transformed times  a * t^{theta/gamma},
          'scaled_bm'       sqrt(a) * B at times t^{theta/gamma},
          'scaled_fbm'      sqrt(a) * fractional Brownian path, Hurst
                            H = theta/(2 gamma).
    """
    if cal_a < 0:
        raise ValueError("amplitude must be nonnegative")
    k = theta / gamma
    nodes = grid.nodes
    if kind == "timechanged_bm":
        tau = cal_a * nodes**k
        rng = path_rng(seed, SUB_GAUSSIAN)
        z = ndtri(_clip_open(rng.random(grid.n_steps)))
        inc = np.sqrt(np.diff(tau)) * z
        return np.concatenate([[0.0], np.cumsum(inc)])
    if kind == "scaled_bm":
        s = nodes**k
        rng = path_rng(seed, SUB_GAUSSIAN)
        z = ndtri(_clip_open(rng.random(grid.n_steps)))
        inc = np.sqrt(np.diff(s)) * z
        return math.sqrt(cal_a) * np.concatenate([[0.0], np.cumsum(inc)])
    if kind == "scaled_fbm":
        H = theta / (2.0 * gamma)
        if not 0.0 < H < 1.0:
            raise InvalidHurst(
                f"theta/(2 gamma) = {H:g} outside (0,1); scaled-fBM "
                "representation unavailable"
            )
        return math.sqrt(cal_a) * sample_fbm_path(H, grid, seed)
    raise ValueError(f"unknown representation kind {kind!r}")


def sample_markov_path(
    model, horizon: float, grid: PathGrid, seed: SeedSpec, x0: float = 0.0
) -> np.ndarray:
    """Path of the base Markov process on the grid rescaled to ``horizon``.

    Brownian-with-drift and symmetric stable increments are exact in law;
    the diffusion-with-flow case composes the exact Brownian path with the
    deterministic flow map, so no Euler bias enters the Brownian
    coordinate.  ``model`` carries the process-spec fields of the solver
    module (duck-typed to avoid a circular import).
    """
    nodes = grid.nodes * (horizon / grid.horizon)
    dt = np.diff(nodes)
    kind = type(model).__name__
    rng = path_rng(seed, SUB_GAUSSIAN)
    if kind == "BrownianDrift":
        z = ndtri(_clip_open(rng.random(grid.n_steps)))
        inc = model.w * dt + np.sqrt(dt) * z
        return x0 + np.concatenate([[0.0], np.cumsum(inc)])
    if kind == "StableLevy":
        u = rng.random((grid.n_steps, 2))
        s = stable_symmetric_from_uniforms(u[:, 0], u[:, 1], model.delta)
        inc = 2.0 ** (-0.5) * dt ** (1.0 / model.delta) * s
        return x0 + np.concatenate([[0.0], np.cumsum(inc)])
    if kind == "DossSussmann":
        z = ndtri(_clip_open(rng.random(grid.n_steps)))
        brownian = np.concatenate([[0.0], np.cumsum(np.sqrt(dt) * z)])
        driver = brownian + model.w * nodes
        from .fk import flow_map  # deferred: the solver module owns the flow

        return flow_map(model.sigma, driver, x0)
    raise TypeError(f"unknown process model {kind}")
