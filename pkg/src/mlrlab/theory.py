"""Two-component recovery guarantee: admissible thresholds, R bound, error bound.

All quantities refer to a mixture of two components with proportions
``p1 >= p2``, separation ``delta_norm = ||beta_1* - beta_2*||`` and noise
bounded by ``sigma_eps``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .exceptions import EmptyRange, Inapplicable


@dataclass(frozen=True)
class TheoryInputs:
    p1: float
    p2: float
    sigma_eps: float = 0.0
    delta_norm: float = 1.0
    eta: float = 1.0
    R: float = math.inf
    D: float = 0.0

    def __post_init__(self):
        if abs(self.p1 + self.p2 - 1.0) > 1e-12:
            raise ValueError("p1 + p2 must equal 1")
        if not self.p1 >= self.p2 >= 0 or self.p1 <= 0:
            raise ValueError("need p1 >= p2 >= 0 and p1 > 0")
        if self.sigma_eps < 0 or self.delta_norm <= 0 or self.eta <= 0 or self.R <= 0 or self.D < 0:
            raise ValueError("sigma_eps, D must be nonnegative; delta_norm, eta, R positive")

    @property
    def xi(self) -> float:
        """Noise-to-separation ratio."""
        return self.sigma_eps / self.delta_norm

    @property
    def xi_tilde(self) -> float:
        return self.xi / math.sqrt(self.R)


def gamma(p1, p2):
    """``5 p2 / (4 p1)``."""
    if p1 <= 0:
        raise ValueError("p1 must be positive")
    return 5.0 * p2 / (4.0 * p1)


def q_value(inputs: TheoryInputs):
    """Return ``(q, applicable)`` with ``applicable = q < 1/2``."""
    q = gamma(inputs.p1, inputs.p2) + (1.0 / inputs.p1 + 1.0 / math.sqrt(inputs.R)) * inputs.xi
    return q, q < 0.5


def wth_range(inputs: TheoryInputs):
    """Open interval of admissible weight thresholds ``(lo, hi)``.

    Raises
    ------
    EmptyRange
        When ``lo >= hi``, which happens exactly when ``q >= 1/2``.
    """
    q, _ = q_value(inputs)
    scale = inputs.eta * inputs.delta_norm ** 2
    lo = 1.0 / (1.0 + scale * (1.0 - q) ** 2)
    hi = 1.0 / (1.0 + scale * q ** 2)
    if lo >= hi:
        raise EmptyRange(f"no admissible w_th for q={q:.6g}")
    return lo, hi


def r_lower_bound(inputs: TheoryInputs):
    """Smallest norm cap ``R`` for which the finite-``R`` guarantee applies."""
    q, _ = q_value(inputs)
    xt = inputs.xi_tilde
    if q <= xt:
        raise Inapplicable(f"q={q:.6g} does not exceed xi/sqrt(R)={xt:.6g}")
    dn2 = inputs.delta_norm ** 2
    first = 1.0 / ((q - xt) ** 2 * dn2)
    second = 5.0 * (3.0 * max(inputs.D, 0.5) + inputs.xi) ** 2 * dn2 * inputs.eta
    return max(first, second)


def recovery_bound(inputs: TheoryInputs):
    """Error bound ``sigma / (sqrt(R) (sigma + gamma ||Delta||))``; zero without noise."""
    q, ok = q_value(inputs)
    if not ok:
        raise Inapplicable(f"q={q:.6g} >= 1/2")
    if inputs.sigma_eps == 0:
        return 0.0
    g = gamma(inputs.p1, inputs.p2)
    return inputs.sigma_eps / (math.sqrt(inputs.R) * (inputs.sigma_eps + g * inputs.delta_norm))


def summary(inputs: TheoryInputs) -> dict:
    """All quantities as a plain dict; failures are reported as strings."""
    out = {"inputs": {k: (None if isinstance(v, float) and math.isinf(v) else v)
                      for k, v in asdict(inputs).items()}}
    q, ok = q_value(inputs)
    out["gamma"] = gamma(inputs.p1, inputs.p2)
    out["q"] = q
    out["applicable"] = ok
    for name, fn in (("wth_range", wth_range), ("r_lower_bound", r_lower_bound),
                     ("recovery_bound", recovery_bound)):
        try:
            v = fn(inputs)
            out[name] = list(v) if isinstance(v, tuple) else v
        except (EmptyRange, Inapplicable) as exc:
            out[name] = f"error: {exc}"
    return out
