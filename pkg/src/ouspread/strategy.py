"""Investment/consumption strategies.

A strategy maps (t, x, s) to (alpha, c): asset counts and a consumption
rate.  Every shipped strategy is proportional to wealth -- alpha = x w(t, s)
and c = x kappa(t) -- which keeps wealth strictly positive and admits the
exact log-wealth simulation scheme.  The optimal rule is

    alpha*(t, x, s) = -Sigma^{-1} (A1 s) x,     c*(t, x, s) = x / rho(t).

Baselines exist to be beaten: no-trade and the scaled family keep the
optimal consumption rule and change only the investment; const-c keeps zero
investment and consumes a constant fraction of wealth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import UnknownKind
from .hjb import HjbSolution
from .model import DerivedMatrices, ModelParams, validate

__all__ = [
    "Strategy",
    "optimal_strategy",
    "baseline",
    "parse_strategy",
    "optimal_wealth_coeffs",
    "BASELINE_KINDS",
]

BASELINE_KINDS = ("optimal", "no-trade", "scaled", "const-c")


@dataclass(frozen=True)
class Strategy:
    """Deterministic control rule.

    rule(t, x, s) -> (alpha, c) is vectorized over a leading path axis:
    x of shape (P,), s of shape (P, d) give alpha (P, d) and c (P,).
    ``weights`` is set for proportional rules and returns (w, kappa) with
    alpha = x w and c = x kappa; it is what the exact log-wealth scheme
    consumes.
    """

    kind: str
    rule: Callable = field(repr=False)
    weights: Optional[Callable] = field(default=None, repr=False)
    lam: Optional[float] = None

    @property
    def proportional(self) -> bool:
        return self.weights is not None


def _from_weights(kind: str, weights: Callable, lam: float | None = None) -> Strategy:
    def rule(t, x, s):
        w, kappa = weights(t, np.asarray(s, dtype=float))
        x = np.asarray(x, dtype=float)
        return w * x[..., None], kappa * x

    return Strategy(kind=kind, rule=rule, weights=weights, lam=lam)


def optimal_strategy(params: ModelParams, sol: HjbSolution,
                     *, derived: DerivedMatrices | None = None) -> Strategy:
    """Closed-form optimal rule; equals the Hamiltonian maximizer evaluated
    along the candidate value function."""
    if derived is None:
        derived = validate(params)
    a1, sig2_inv = derived.a1, derived.sig2_inv

    def weights(t, s):
        w = -(s @ a1.T) @ sig2_inv
        return w, 1.0 / params.rho(t)

    return _from_weights("optimal", weights)


def baseline(kind: str, params: ModelParams, sol: HjbSolution,
             lam: float | None = None,
             *, derived: DerivedMatrices | None = None) -> Strategy:
    """Construct a shipped strategy by kind.

    no-trade: alpha = 0, c = x/rho(t).  scaled: alpha = lam * alpha*,
    c = x/rho(t), lam in [0, 1].  const-c: alpha = 0, c = x/(T + varpi).
    """
    if derived is None:
        derived = validate(params)
    if kind == "optimal":
        return optimal_strategy(params, sol, derived=derived)
    if kind == "no-trade":
        def weights(t, s):
            return np.zeros_like(s), 1.0 / params.rho(t)

        return _from_weights("no-trade", weights)
    if kind == "scaled":
        if lam is None or not (0.0 <= lam <= 1.0):
            raise UnknownKind(f"scaled strategy needs lam in [0, 1], got {lam}")
        opt = optimal_strategy(params, sol, derived=derived)
        lam_f = float(lam)

        def weights(t, s):
            w, kappa = opt.weights(t, s)
            return lam_f * w, kappa

        return _from_weights("scaled", weights, lam=lam_f)
    if kind == "const-c":
        kappa0 = 1.0 / (params.T + params.varpi)

        def weights(t, s):
            return np.zeros_like(s), kappa0

        return _from_weights("const-c", weights)
    raise UnknownKind(f"unknown strategy kind {kind!r}")


def parse_strategy(text: str, params: ModelParams, sol: HjbSolution,
                   *, derived: DerivedMatrices | None = None) -> Strategy:
    """Parse a CLI strategy flag: optimal | no-trade | scaled:<lam> | const-c."""
    text = text.strip()
    if text.startswith("scaled:"):
        try:
            lam = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise UnknownKind(f"bad scaled strategy spec {text!r}") from exc
        return baseline("scaled", params, sol, lam=lam, derived=derived)
    if text in ("optimal", "no-trade", "const-c"):
        return baseline(text, params, sol, derived=derived)
    raise UnknownKind(f"unknown strategy flag {text!r}")


def optimal_wealth_coeffs(params: ModelParams, s, t: float,
                          *, derived: DerivedMatrices | None = None) -> tuple[float, np.ndarray]:
    """Relative drift and diffusion of optimal wealth, dX*/X*.

    a*(t) = r + s_hat' Sigma^{-1} s_hat - 1/rho(t) and
    b*(t) = -sigma' Sigma^{-1} s_hat with s_hat = A1 s.  These are exactly
    what substituting (alpha*, c*) into the wealth dynamics produces; only
    |b*| is observable in law, the sign convention follows alpha*.
    """
    if derived is None:
        derived = validate(params)
    s = np.asarray(s, dtype=float).reshape(params.d)
    s_hat = derived.a1 @ s
    sig_inv_sh = derived.sig2_inv @ s_hat
    a_star = params.r + s_hat @ sig_inv_sh - 1.0 / params.rho(t)
    b_star = -params.sigma.T @ sig_inv_sh
    return float(a_star), b_star
