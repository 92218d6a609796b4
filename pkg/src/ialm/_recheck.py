"""Second, independently coded evaluator of the certificate formulas.

Used for double-entry bookkeeping: ``certificates`` is the primary
transcription; the ``verify`` path and the cross-check tests recompute each
bound here with a different arithmetic arrangement and compare to 1e-12
relative.  Keep this module free of imports from ``certificates`` so the two
transcriptions stay independent.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence


def ergodic_bound(
    rho: Sequence[float],
    eps_k: Sequence[float],
    y_star_norm: float,
    z_star_norm: float,
) -> tuple[float, float]:
    denom = math.fsum(rho)
    budget = math.fsum(r * e for r, e in zip(rho, eps_k))
    obj = (2.0 * y_star_norm**2 + 2.0 * z_star_norm**2 + budget) / denom
    feas = ((1.0 + y_star_norm) ** 2 / 2.0 + (1.0 + z_star_norm) ** 2 / 2.0 + budget) / denom
    return obj, feas


def nonergodic_bound(
    beta_k: float, eps_k: float, z_star_norm: float, C_eps: float
) -> tuple[float, float]:
    feas = (5.0 * z_star_norm + 3.5 * C_eps**0.5) / beta_k
    obj = eps_k + (2.0 * z_star_norm + C_eps**0.5) * feas
    return obj, feas


def nonergodic_final_bound(
    eps: float, C_beta: float, C_eps: float, sigma: float, z_star_norm: float
) -> tuple[float, float]:
    rc = C_eps**0.5
    factor = eps * sigma / ((sigma - 1.0) * C_beta)
    tail = 5.0 * z_star_norm + 3.5 * rc
    feas = factor * tail
    obj = eps * C_eps / (2.0 * C_beta) + factor * (2.0 * z_star_norm + rc) * tail
    return obj, feas


def multiplier_bound(y_star_norm: float, z_star_norm: float, C_eps: float) -> float:
    return y_star_norm + 2.0 * z_star_norm + C_eps**0.5


def c_beta_sufficiency(
    y_star_norm: float,
    z_star_norm: float,
    C_eps: float,
    sigma: Optional[float] = None,
    mode: str = "ergodic",
) -> float:
    if mode == "ergodic":
        a = 4.0 * (y_star_norm**2 + z_star_norm**2)
        b = (1.0 + y_star_norm) ** 2 + (1.0 + z_star_norm) ** 2
        return (max(a, b) + C_eps) / 2.0
    if mode == "nonergodic":
        rc = C_eps**0.5
        term = (2.0 * z_star_norm + rc) * (5.0 * z_star_norm + 3.5 * rc)
        return (C_eps + 2.0 * sigma / (sigma - 1.0) * term) / 2.0
    raise ValueError(f"unknown mode {mode!r}")


def iteration_budget(
    setting: str,
    error_mode: str,
    K: int,
    C_beta: float,
    C_eps: float,
    eps: float,
    sigma: Optional[float],
    beta_g: Optional[float],
    D: float,
    mu: float,
    L_star: float,
    H: float,
) -> float:
    if setting == "constant":
        if mu == 0:
            total = 2.0 * D * K * (C_beta / C_eps) ** 0.5 * (
                (L_star / eps) ** 0.5 + (C_beta * H / K) ** 0.5 / eps
            ) + K
        else:
            bracket = (L_star + mu) / eps + C_beta * H / (K * eps**2)
            total = (
                2.0
                * K
                * ((L_star / mu) ** 0.5 + (C_beta * H / (mu * K * eps)) ** 0.5)
                * math.log(D**2 * C_beta / C_eps * bracket)
                + K
            )
        return math.ceil(total)

    root_sigma = sigma**0.5
    if error_mode == "constant":
        if mu == 0:
            total = 2.0 * D * (C_beta / C_eps) ** 0.5 * (
                K * (L_star / eps) ** 0.5
                + (C_beta * H * (sigma - 1.0)) ** 0.5 / (eps * (root_sigma - 1.0))
            ) + K
            return math.ceil(total)
        g = math.log(C_beta * D**2 / (eps * C_eps)) + math.log(
            L_star + mu + H * (C_beta * (sigma - 1.0) + beta_g * eps) / (sigma * eps)
        )
        total = 2.0 * g * (
            K * (L_star / mu) ** 0.5
            + (H / mu) ** 0.5 * (C_beta * (sigma - 1.0)) ** 0.5 / (eps**0.5 * (root_sigma - 1.0))
        ) + K
        return math.ceil(total)

    if mu == 0:
        a = sigma ** (1.0 / 6.0) - 1.0
        b = sigma ** (2.0 / 3.0) - 1.0
        total = 2.0 * D * (C_beta / C_eps) ** 0.5 * (
            (L_star / eps) ** 0.5 * (sigma - 1.0) ** 0.5 / (a * b**0.5)
            + (H * C_beta) ** 0.5 * (sigma - 1.0) / (eps * b**1.5)
        ) + K
        return math.ceil(total)
    g = (
        math.log(C_beta * D**2 / (eps * C_eps))
        + math.log(L_star + mu + H * (C_beta * (sigma - 1.0) + beta_g * eps) / (sigma * eps))
        + math.log(
            ((sigma - 1.0) ** 2 + beta_g * eps * (sigma - 1.0) / C_beta) ** 0.5
            / (sigma - root_sigma)
        )
    )
    total = 2.0 * g * (
        K * (L_star / mu) ** 0.5
        + (H / mu) ** 0.5 * (C_beta * (sigma - 1.0)) ** 0.5 / (eps**0.5 * (root_sigma - 1.0))
    ) + K
    return math.ceil(total)
