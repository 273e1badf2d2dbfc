"""Discrete convex-duality toolkit and convergence diagnostics.

Sampled convex functions on bounded boxes support fast Legendre-Fenchel
conjugation (lower convex hull in one dimension, direct scan otherwise),
biconjugation defects, supercoercivity certificates and two distances for
sequences of theories: uniform distance on bounded sets and a Hausdorff
distance between box-truncated epigraphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .errors import EmptyEpigraphWindow, GridMismatch, NotProper
from .functionals import FunctionalContext
from .measure import build_measure, sample


@dataclass(frozen=True)
class GridFunction:
    """Extended-real function sampled on a bounded uniform box."""

    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        shape = tuple(len(a) for a in self.axes)
        assert self.values.shape == shape
        if not np.isfinite(self.values).any():
            raise NotProper("grid function has no finite value")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @classmethod
    def from_callable(cls, f, lo, hi, nodes):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        nodes = np.atleast_1d(np.asarray(nodes, dtype=int))
        axes = tuple(np.linspace(a, b, n) for a, b, n in zip(lo, hi, nodes))
        if len(axes) == 1:
            vals = np.array([f(x) for x in axes[0]], dtype=float)
        else:
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=-1)
            vals = np.array([f(p) for p in pts], dtype=float).reshape(
                tuple(len(a) for a in axes)
            )
        return cls(axes=axes, values=vals)

    def nodes(self) -> np.ndarray:
        if self.ndim == 1:
            return self.axes[0][:, None]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def _lower_hull(x: np.ndarray, y: np.ndarray):
    """Indices of the lower convex hull vertices of the sampled graph."""
    hull = []
    for i in range(x.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # pop b if it lies on or above chord a -> i
            if (y[b] - y[a]) * (x[i] - x[a]) >= (y[i] - y[a]) * (x[b] - x[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull)


def conjugate(f: GridFunction, lo, hi, nodes) -> GridFunction:
    """Legendre-Fenchel transform sampled on the dual box.

    One-dimensional inputs use the linear-time hull walk; higher dimensions
    fall back to a direct scan over primal nodes per dual node.
    """
    finite = np.isfinite(f.values)
    if not finite.any():
        raise NotProper("cannot conjugate an improper grid function")
    if f.ndim == 1:
        x = f.axes[0][finite]
        y = f.values[finite]
        hull = _lower_hull(x, y)
        xh, yh = x[hull], y[hull]
        t_axis = np.linspace(float(lo), float(hi), int(nodes))
        out = np.empty_like(t_axis)
        j = 0
        for i, t in enumerate(t_axis):
            while j + 1 < xh.size and t * xh[j + 1] - yh[j + 1] >= t * xh[j] - yh[j]:
                j += 1
            # slopes on the hull increase, so the maximizer index is monotone
            while j > 0 and t * xh[j - 1] - yh[j - 1] > t * xh[j] - yh[j]:
                j -= 1
            out[i] = t * xh[j] - yh[j]
        return GridFunction(axes=(t_axis,), values=out)
    pts = f.nodes()[finite.ravel()]
    vals = f.values.ravel()[finite.ravel()]
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    nodes = np.atleast_1d(np.asarray(nodes, dtype=int))
    axes = tuple(np.linspace(a, b, n) for a, b, n in zip(lo, hi, nodes))
    mesh = np.meshgrid(*axes, indexing="ij")
    duals = np.stack([m.ravel() for m in mesh], axis=-1)
    out = (duals @ pts.T - vals).max(axis=1)
    return GridFunction(axes=axes, values=out.reshape(tuple(len(a) for a in axes)))


def biconjugate_check(f: GridFunction) -> float:
    """Maximum defect f - f** over the nodes; zero for convex samples.

    The biconjugate of a finite sample is its lower convex hull, which is
    computed exactly, so no dual grid enters.
    """
    if f.ndim != 1:
        raise NotImplementedError("biconjugation defect is implemented in 1D")
    finite = np.isfinite(f.values)
    x = f.axes[0][finite]
    y = f.values[finite]
    hull = _lower_hull(x, y)
    hull_vals = np.interp(x, x[hull], y[hull])
    return float(np.max(y - hull_vals))


def supercoercivity_certificate(fstar: GridFunction, weights) -> dict:
    """Largest C with f*(T) >= p(T) + C for the weighted-l1 seminorm p."""
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    pts = fstar.nodes()
    p_vals = np.abs(pts) @ weights
    finite = np.isfinite(fstar.values.ravel())
    gap = fstar.values.ravel()[finite] - p_vals[finite]
    i = int(np.argmin(gap))
    return {
        "C": float(gap[i]),
        "binding_node": pts[finite][i].tolist(),
    }


def uniform_distance(f: GridFunction, g: GridFunction, radius: float) -> float:
    """Sup-distance over grid nodes within the given ball."""
    if len(f.axes) != len(g.axes) or any(
        a.shape != b.shape or not np.allclose(a, b) for a, b in zip(f.axes, g.axes)
    ):
        raise GridMismatch("uniform distance requires a shared grid")
    norms = np.linalg.norm(f.nodes(), axis=1).reshape(f.values.shape)
    mask = norms <= radius
    if not mask.any():
        raise GridMismatch(f"no grid node within radius {radius}")
    return float(np.max(np.abs(f.values[mask] - g.values[mask])))


def _refined(x, y):
    mid_x = 0.5 * (x[:-1] + x[1:])
    mid_y = 0.5 * (y[:-1] + y[1:])
    xr = np.empty(x.size + mid_x.size)
    yr = np.empty_like(xr)
    xr[0::2], xr[1::2] = x, mid_x
    yr[0::2], yr[1::2] = y, mid_y
    return xr, yr


def _clipped_graph(x, y, rho):
    inside = (np.abs(x) <= rho) & (y <= rho) & np.isfinite(y)
    return x[inside], np.maximum(y[inside], -rho)


def _directed_epi_distance(xa, ta, xb, tb):
    # distance from each graph point of A to the epigraph columns of B,
    # product metric max(|dx|, dt); columns of B extend upward from tb
    dx = np.abs(xa[:, None] - xb[None, :])
    dt = np.maximum(tb[None, :] - ta[:, None], 0.0)
    return float(np.max(np.min(np.maximum(dx, dt), axis=1)))


def aw_distance(f: GridFunction, g: GridFunction, rho: float) -> float:
    """Hausdorff distance between the box-truncated epigraphs.

    Graph samples (with one midpoint refinement) represent each epigraph;
    the supremum of the point-to-epigraph distance is attained on the
    clipped graph because columns only widen upward.
    """
    if f.ndim != 1 or g.ndim != 1:
        raise NotImplementedError("epigraph distance is implemented in 1D")
    xf, yf = _refined(f.axes[0], f.values)
    xg, yg = _refined(g.axes[0], g.values)
    xa, ta = _clipped_graph(xf, yf, rho)
    xb, tb = _clipped_graph(xg, yg, rho)
    if xa.size == 0 and xb.size == 0:
        raise EmptyEpigraphWindow(f"neither epigraph meets the box of radius {rho}")
    if xa.size == 0 or xb.size == 0:
        return 2.0 * rho
    return max(
        _directed_epi_distance(xa, ta, xb, tb),
        _directed_epi_distance(xb, tb, xa, ta),
    )


# -- sequence diagnostics ----------------------------------------------


@dataclass
class ConvergenceReport:
    indices: list
    uniform: list
    aw: list
    probe: list
    uniform_monotone: bool = False
    aw_monotone: bool = False
    probe_monotone: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def all_monotone(self) -> bool:
        return self.uniform_monotone and self.aw_monotone and self.probe_monotone


def _w_grid(ctx: FunctionalContext, t_axis: np.ndarray) -> GridFunction:
    vals = np.array(
        [fn.tilted_moments(ctx, 0.0, np.array([t])).log_value for t in t_axis]
    )
    vals = vals - fn.log_normalization(ctx, 0.0)
    return GridFunction(axes=(t_axis,), values=vals)


def _char_probe(spec, t_dict, z):
    measure = build_measure(spec)
    psi = z @ measure.chol.T
    w = np.exp(-spec.interaction_batch(psi))
    return np.array([float((np.cos(t * psi[:, 0]) * w).sum() / w.sum()) for t in t_dict])


def convergence_suite(
    models,
    limit_model,
    regulator,
    dual_radius: float = 3.0,
    dual_nodes: int = 161,
    uniform_radius: float = 2.0,
    aw_rho: float = 6.0,
    primal_nodes: int = 1201,
    probe_sources=(0.5, 1.0, 2.0),
    probe_samples: int = 100_000,
    seed: int = 20240,
) -> ConvergenceReport:
    """Distances of a regularization sequence to its limit theory at k = 0.

    The characteristic-function probe shares one normal sample across all
    sequence members so successive differences are not washed out by
    Monte-Carlo noise.
    """
    for m in models:
        if m.modes != limit_model.modes:
            raise GridMismatch("sequence members must share the mode count")
    t_axis = np.linspace(-dual_radius, dual_radius, dual_nodes)

    def analyse(spec):
        ctx = FunctionalContext(spec=spec, regulator=regulator, self_check=False)
        w_grid = _w_grid(ctx, t_axis)
        gamma0 = conjugate(w_grid, -aw_rho, aw_rho, primal_nodes)
        return w_grid, gamma0

    w_lim, gamma_lim = analyse(limit_model)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((probe_samples, limit_model.modes))
    probe_lim = _char_probe(limit_model, probe_sources, z)

    report = ConvergenceReport(indices=list(range(1, len(models) + 1)),
                               uniform=[], aw=[], probe=[],
                               meta={"seed": seed, "probe_samples": probe_samples})
    for spec in models:
        w_n, gamma_n = analyse(spec)
        report.uniform.append(uniform_distance(w_n, w_lim, uniform_radius))
        report.aw.append(aw_distance(gamma_n, gamma_lim, aw_rho))
        probe_n = _char_probe(spec, probe_sources, z)
        report.probe.append(float(np.max(np.abs(probe_n - probe_lim))))

    def strictly_decreasing(seq):
        return all(b < a for a, b in zip(seq, seq[1:]))

    report.uniform_monotone = strictly_decreasing(report.uniform)
    report.aw_monotone = strictly_decreasing(report.aw)
    report.probe_monotone = strictly_decreasing(report.probe)
    return report
