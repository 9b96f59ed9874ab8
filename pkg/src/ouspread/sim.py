"""Path simulation and Monte Carlo evaluation of the objective.

The spread and the wealth share one Brownian motion.  Two spread samplers
exist: the exact Gaussian recursion (transition mean/covariance from the
block exponential; reserved for spread-only statistics) and Euler from raw
Wiener increments.  Wealth needs the increments that drove the spread, so
joint simulation always uses the Euler-coupled spread; wealth then advances
either by direct Euler on X or exactly in log space for proportional rules.

Reproducibility contract: path i draws from its own stream seeded by
(seed, i), so results are bit-identical for a fixed (seed, n, paths,
params, strategy) regardless of chunking or scheduling, and identical
seeds give common random numbers across strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CovFactorizationFailure, NonPositiveWealth, SchemeMismatch
from .model import ModelParams, ou_transition, validate
from .strategy import Strategy

__all__ = [
    "SpreadPaths",
    "PathBundle",
    "McEstimate",
    "DominanceEntry",
    "DominanceReport",
    "make_rng",
    "wiener_increments",
    "simulate_spread",
    "simulate_wealth",
    "estimate_objective",
    "dominance_test",
    "objective_from_bundle",
]

SCHEME_EULER = "euler-direct"
SCHEME_LOG = "log-exact"

# Chunk size targets ~64 MB of increments per slab.
_CHUNK_DOUBLES = 8_000_000


def make_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one path: seeded by the pair (seed, stream)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def wiener_increments(seed: int, stream: int, n: int, m: int, dt: float) -> np.ndarray:
    """The (n, m) Wiener increments path ``stream`` consumes, regenerated."""
    return make_rng(seed, stream).standard_normal((n, m)) * math.sqrt(dt)


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Factor L with L L' = cov for a PSD matrix; tolerates zero modes."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(cov)
    floor = -1e-10 * max(1.0, float(np.max(np.abs(vals))))
    if np.min(vals) < floor:
        raise CovFactorizationFailure(
            f"covariance has significantly negative eigenvalue {np.min(vals):.3e}"
        )
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


@dataclass(frozen=True)
class SpreadPaths:
    """Simulated spread paths; ``dw`` holds the driving Wiener increments
    when the Euler sampler produced them (None for the exact sampler)."""

    times: np.ndarray            # (n+1,)
    s: np.ndarray                # (paths, n+1, d)
    dw: Optional[np.ndarray]     # (paths, n, m) or None
    seed: int
    stream_ids: np.ndarray       # (paths,)
    method: str                  # "exact" | "euler"


@dataclass(frozen=True)
class PathBundle:
    """Joint (S, X, controls) sample paths with RNG provenance."""

    times: np.ndarray            # (n+1,)
    s_paths: np.ndarray          # (paths, n+1, d)
    x_paths: np.ndarray          # (paths, n+1); NaN after a rejected crossing
    alphas: np.ndarray           # (paths, n+1, d)
    cs: np.ndarray               # (paths, n+1)
    seed: int
    stream_ids: np.ndarray
    rejected: int
    scheme: str


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo estimate of the objective with its standard error."""

    j_hat: float
    std_err: float
    paths: int
    seed: int
    rejected_paths: int


@dataclass(frozen=True)
class DominanceEntry:
    kind: str
    j_hat: float
    std_err: float
    diff_mean: float   # mean of per-path (J_optimal - J_strategy)
    diff_se: float
    within_margin: bool  # j_hat <= optimal j_hat + 3 * diff_se


@dataclass(frozen=True)
class DominanceReport:
    optimal: McEstimate
    entries: tuple
    paths: int
    steps: int
    seed: int

    @property
    def all_within_margin(self) -> bool:
        return all(e.within_margin for e in self.entries)


def _chunks(paths: int, per_path_doubles: int) -> Sequence[range]:
    size = max(1, _CHUNK_DOUBLES // max(per_path_doubles, 1))
    return [range(lo, min(lo + size, paths)) for lo in range(0, paths, size)]


def _draw_normals(seed: int, streams: range, n: int, m: int) -> np.ndarray:
    out = np.empty((len(streams), n, m))
    for j, sid in enumerate(streams):
        make_rng(seed, sid).standard_normal((n, m), out=out[j])
    return out


def simulate_spread(params: ModelParams, n: int, paths: int, seed: int,
                    method: str = "exact") -> SpreadPaths:
    """Sample spread paths on the uniform n-step grid over [0, T].

    method="exact": the Gaussian recursion S_{k+1} = e^{A dt} S_k + eps_k
    with eps_k ~ N(0, cov(dt)) drawn through a PSD factor; exact in law at
    the grid times for any n.  method="euler": Euler-Maruyama from raw
    increments, which are retained so wealth can be driven by the same
    Brownian motion.
    """
    if n < 1 or paths < 1:
        raise ValueError(f"need n >= 1 and paths >= 1, got n={n}, paths={paths}")
    if method not in ("exact", "euler"):
        raise ValueError(f"unknown spread method {method!r}")
    d, m = params.d, params.m
    times = np.linspace(0.0, params.T, n + 1)
    dt = params.T / n
    s = np.empty((paths, n + 1, d))
    s[:, 0, :] = params.s0

    if method == "exact":
        mean_map, cov = ou_transition(params, 0.0, dt)
        fac = _psd_factor(cov)
        for block in _chunks(paths, n * d):
            xi = _draw_normals(seed, block, n, d)
            cur = s[block.start : block.stop, 0, :]
            for k in range(n):
                cur = cur @ mean_map.T + xi[:, k, :] @ fac.T
                s[block.start : block.stop, k + 1, :] = cur
        dw = None
    else:
        dw = np.empty((paths, n, m))
        sqdt = math.sqrt(dt)
        for block in _chunks(paths, n * m):
            blk = _draw_normals(seed, block, n, m) * sqdt
            dw[block.start : block.stop] = blk
            cur = s[block.start : block.stop, 0, :]
            for k in range(n):
                cur = cur + (cur @ params.A.T) * dt + blk[:, k, :] @ params.sigma.T
                s[block.start : block.stop, k + 1, :] = cur

    return SpreadPaths(times=times, s=s, dw=dw, seed=int(seed),
                       stream_ids=np.arange(paths), method=method)


def simulate_wealth(params: ModelParams, strategy: Strategy, spread: SpreadPaths,
                    scheme: str = SCHEME_LOG) -> PathBundle:
    """Advance wealth along given spread paths, reusing their increments.

    euler-direct: X_{k+1} = X_k + (r X_k - alpha' s_hat - c) dt
    + alpha' sigma dW_k; a path whose wealth crosses zero is rejected
    (counted, NaN afterwards).  log-exact: exact exponential step of the
    proportional-wealth dynamics; positivity is automatic.  Requires spread
    paths simulated with method="euler" so the shared increments exist.
    """
    if spread.dw is None:
        raise SchemeMismatch(
            "wealth needs the Wiener increments that drove the spread; "
            "simulate the spread with method='euler'"
        )
    if scheme not in (SCHEME_EULER, SCHEME_LOG):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == SCHEME_LOG and not strategy.proportional:
        raise SchemeMismatch("log-exact scheme needs a proportional strategy")
    derived = validate(params)
    a1, sig = derived.a1, params.sigma
    paths, n1, d = spread.s.shape
    n = n1 - 1
    dt = params.T / n
    times = spread.times

    x = np.full((paths, n + 1), np.nan)
    alphas = np.full((paths, n + 1, d), np.nan)
    cs = np.full((paths, n + 1), np.nan)
    x[:, 0] = params.x0
    alive = np.ones(paths, dtype=bool)

    if scheme == SCHEME_LOG:
        lnx = np.full(paths, math.log(params.x0))
        for k in range(n + 1):
            sk = spread.s[:, k, :]
            xk = np.exp(lnx) if k else np.full(paths, float(params.x0))
            x[:, k] = xk
            w, kappa = strategy.weights(times[k], sk)
            alphas[:, k, :] = w * xk[:, None]
            cs[:, k] = kappa * xk
            if k == n:
                break
            s_hat = sk @ a1.T
            a_rel = params.r - np.einsum("pi,pi->p", w, s_hat) - kappa
            b_rel = w @ sig
            lnx = lnx + (a_rel - 0.5 * np.einsum("pi,pi->p", b_rel, b_rel)) * dt
            lnx = lnx + np.einsum("pi,pi->p", b_rel, spread.dw[:, k, :])
        rejected = 0
    else:
        xk = np.full(paths, float(params.x0))
        for k in range(n + 1):
            sk = spread.s[:, k, :]
            al, c = strategy.rule(times[k], xk, sk)
            x[alive, k] = xk[alive]
            alphas[alive, k, :] = al[alive]
            cs[alive, k] = c[alive]
            if k == n:
                break
            s_hat = sk @ a1.T
            drift = params.r * xk - np.einsum("pi,pi->p", al, s_hat) - c
            noise = np.einsum("pi,pi->p", al @ sig, spread.dw[:, k, :])
            xk = xk + drift * dt + noise
            alive &= xk > 0
        rejected = int(paths - alive.sum())

    return PathBundle(times=times, s_paths=spread.s, x_paths=x, alphas=alphas,
                      cs=cs, seed=spread.seed, stream_ids=spread.stream_ids,
                      rejected=rejected, scheme=scheme)


def objective_from_bundle(params: ModelParams, bundle: PathBundle) -> np.ndarray:
    """Per-path realized objective: trapezoid of ln c over time plus
    varpi ln X_T.  NaN on rejected paths."""
    n = len(bundle.times) - 1
    dt = params.T / n
    lnc = np.log(bundle.cs)
    weights = np.full(n + 1, dt)
    weights[0] = weights[-1] = 0.5 * dt
    return lnc @ weights + params.varpi * np.log(bundle.x_paths[:, -1])


def _per_path_objective(params: ModelParams, strategy: Strategy, n: int,
                        paths: int, seed: int, scheme: str) -> np.ndarray:
    """Streaming fused simulation of (S, X) returning the per-path
    objective without storing paths.  NaN marks rejected paths."""
    derived = validate(params)
    a1, sig, a_mat = derived.a1, params.sigma, params.A
    d, m = params.d, params.m
    dt = params.T / n
    sqdt = math.sqrt(dt)
    times = np.linspace(0.0, params.T, n + 1)
    out = np.empty(paths)

    for block in _chunks(paths, n * m):
        dw = _draw_normals(seed, block, n, m) * sqdt
        p = len(block)
        s = np.tile(params.s0, (p, 1))
        acc = np.zeros(p)
        if scheme == SCHEME_LOG:
            lnx = np.full(p, math.log(params.x0))
            for k in range(n + 1):
                w, kappa = strategy.weights(times[k], s)
                lnc = np.log(kappa) + lnx
                acc += lnc if 0 < k < n else 0.5 * lnc
                if k == n:
                    break
                s_hat = s @ a1.T
                a_rel = params.r - np.einsum("pi,pi->p", w, s_hat) - kappa
                b_rel = w @ sig
                lnx = lnx + (a_rel - 0.5 * np.einsum("pi,pi->p", b_rel, b_rel)) * dt
                lnx = lnx + np.einsum("pi,pi->p", b_rel, dw[:, k, :])
                s = s + (s @ a_mat.T) * dt + dw[:, k, :] @ sig.T
            obj = acc * dt + params.varpi * lnx
        else:
            x = np.full(p, float(params.x0))
            alive = np.ones(p, dtype=bool)
            with np.errstate(invalid="ignore", divide="ignore"):
                for k in range(n + 1):
                    al, c = strategy.rule(times[k], x, s)
                    lnc = np.where(alive, np.log(np.where(alive, c, 1.0)), np.nan)
                    acc += lnc if 0 < k < n else 0.5 * lnc
                    if k == n:
                        break
                    s_hat = s @ a1.T
                    x = x + (params.r * x - np.einsum("pi,pi->p", al, s_hat) - c) * dt
                    x = x + np.einsum("pi,pi->p", al @ sig, dw[:, k, :])
                    alive &= x > 0
                    s = s + (s @ a_mat.T) * dt + dw[:, k, :] @ sig.T
                obj = acc * dt + params.varpi * np.where(alive, np.log(np.where(alive, x, 1.0)), np.nan)
        out[block.start : block.stop] = obj
    return out


def _default_scheme(strategy: Strategy) -> str:
    return SCHEME_LOG if strategy.proportional else SCHEME_EULER


def estimate_objective(params: ModelParams, strategy: Strategy, n: int,
                       paths: int, seed: int, scheme: str | None = None) -> McEstimate:
    """Monte Carlo estimate of the objective under a strategy.

    Deterministic given (seed, n, paths, params, strategy); rejected paths
    (possible only under non-proportional rules with the direct Euler
    scheme) are excluded and counted.
    """
    if scheme is None:
        scheme = _default_scheme(strategy)
    obj = _per_path_objective(params, strategy, n, paths, seed, scheme)
    good = np.isfinite(obj)
    kept = obj[good]
    if kept.size == 0:
        raise NonPositiveWealth("every path was rejected; nothing to average")
    se = float(np.std(kept, ddof=1) / math.sqrt(kept.size)) if kept.size > 1 else 0.0
    return McEstimate(j_hat=float(np.mean(kept)), std_err=se, paths=paths,
                      seed=int(seed), rejected_paths=int(paths - kept.size))


def dominance_test(params: ModelParams, strategies: Sequence[Strategy], n: int,
                   paths: int, seed: int, scheme: str | None = None) -> DominanceReport:
    """Common-random-numbers comparison of strategies against the optimal.

    All strategies see identical Wiener increments (same seed, per-path
    streams), so per-path objective differences are directly paired.  A
    baseline passes when its estimate does not exceed the optimal one by
    more than three standard errors of the paired difference.
    """
    opt = [st for st in strategies if st.kind == "optimal"]
    if not opt:
        raise ValueError("dominance test requires the optimal strategy in the list")

    per_path = {}
    for st in strategies:
        sch = scheme if scheme is not None else _default_scheme(st)
        per_path[id(st)] = _per_path_objective(params, st, n, paths, seed, sch)

    j_opt = per_path[id(opt[0])]
    opt_good = np.isfinite(j_opt)
    opt_est = McEstimate(
        j_hat=float(np.mean(j_opt[opt_good])),
        std_err=float(np.std(j_opt[opt_good], ddof=1) / math.sqrt(opt_good.sum())),
        paths=paths, seed=int(seed), rejected_paths=int(paths - opt_good.sum()),
    )

    entries = []
    for st in strategies:
        if st is opt[0]:
            continue
        j_st = per_path[id(st)]
        good = np.isfinite(j_st) & opt_good
        diff = j_opt[good] - j_st[good]
        diff_mean = float(np.mean(diff))
        diff_se = float(np.std(diff, ddof=1) / math.sqrt(diff.size)) if diff.size > 1 else 0.0
        kind = st.kind if st.lam is None else f"{st.kind}:{st.lam}"
        entries.append(DominanceEntry(
            kind=kind,
            j_hat=float(np.mean(j_st[good])),
            std_err=float(np.std(j_st[good], ddof=1) / math.sqrt(good.sum())),
            diff_mean=diff_mean,
            diff_se=diff_se,
            within_margin=bool(diff_mean >= -3.0 * diff_se),
        ))
    return DominanceReport(optimal=opt_est, entries=tuple(entries),
                           paths=paths, steps=n, seed=int(seed))
