"""Zero-range thermodynamics: rate function g, partition function Z,
mean-density map R and its inverse Phi.

All series are evaluated from one generic code path (log-space weights
phi^k / g(k)!); closed forms for the builtin rate functions exist only in
the tests, as oracles.  Evaluators are pure; the factorial cache grows by
replacement, never in-place mutation, so concurrent readers always see a
consistent array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, DomainError

RATE_KINDS = ("identity", "indicator", "figure3", "table")
MAX_SERIES_TERMS = 1_000_000
PHI_STAR_SCAN = 10_000     # values of g inspected for the radius estimate
WORKING_MARGIN = 0.999     # evaluations require phi <= margin * phi_star


@dataclass(frozen=True)
class RateFunction:
    """Interaction rate g: g(0)=0, g(k)>0 for k>=1.

    kinds: ``identity`` g(k)=k, ``indicator`` g(k)=1_{k>0},
    ``figure3`` g(k)=(1+3/k)^3, ``table`` explicit values for k=1..K with a
    tail rule (``constant c`` or ``identity``) beyond the table.
    """

    kind: str
    table: tuple = ()
    tail: str = "constant"
    tail_value: float = 1.0

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise DomainError(f"unknown rate kind {self.kind!r}")
        if self.kind == "table":
            if len(self.table) == 0:
                raise DomainError("table rate needs at least one value")
            if any(v <= 0.0 for v in self.table):
                raise DomainError("rate values must be positive for k >= 1")
            if self.tail not in ("constant", "identity"):
                raise DomainError(f"unknown tail rule {self.tail!r}")
            if self.tail == "constant" and self.tail_value <= 0.0:
                raise DomainError("constant tail value must be positive")

    @classmethod
    def identity(cls):
        return cls(kind="identity")

    @classmethod
    def indicator(cls):
        return cls(kind="indicator")

    @classmethod
    def figure3(cls):
        return cls(kind="figure3")

    @classmethod
    def from_table(cls, values, tail="constant", tail_value=None):
        values = tuple(float(v) for v in values)
        if tail == "constant" and tail_value is None:
            tail_value = values[-1]
        return cls(kind="table", table=values, tail=tail,
                   tail_value=float(tail_value) if tail_value is not None else 1.0)

    def values(self, kmax: int) -> np.ndarray:
        """g(1..kmax) as an array."""
        k = np.arange(1, kmax + 1, dtype=float)
        if self.kind == "identity":
            return k
        if self.kind == "indicator":
            return np.ones(kmax)
        if self.kind == "figure3":
            return (1.0 + 3.0 / k) ** 3
        out = np.empty(kmax)
        K = len(self.table)
        upto = min(K, kmax)
        out[:upto] = self.table[:upto]
        if kmax > K:
            if self.tail == "constant":
                out[K:] = self.tail_value
            else:
                out[K:] = k[K:]
        return out

    def g(self, k: int) -> float:
        if k < 0:
            raise DomainError(f"occupation number must be >= 0, got {k}")
        if k == 0:
            return 0.0
        return float(self.values(k)[-1])

    def radius_estimate(self) -> float:
        """phi* = liminf g, estimated over the first PHI_STAR_SCAN values."""
        if self.kind == "identity":
            return math.inf
        if self.kind == "table" and self.tail == "identity":
            return math.inf
        return float(self.values(PHI_STAR_SCAN).min())


def read_rate_table(path) -> RateFunction:
    """Parse the plain-text rate table format (k value pairs + tail rule)."""
    values = {}
    tail = None
    tail_value = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("tail:"):
            parts = line[len("tail:"):].split()
            if parts[0] == "identity":
                tail = "identity"
            elif parts[0] == "constant" and len(parts) == 2:
                tail = "constant"
                tail_value = float(parts[1])
            else:
                raise DomainError(f"bad tail rule line: {line!r}")
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DomainError(f"bad rate table line: {line!r}")
        values[int(parts[0])] = float(parts[1])
    if tail is None:
        raise DomainError("rate table missing trailing tail rule")
    if not values:
        raise DomainError("rate table has no entries")
    kmax = max(values)
    if sorted(values) != list(range(1, kmax + 1)):
        raise DomainError("rate table must cover k = 1..K without gaps")
    return RateFunction.from_table([values[k] for k in range(1, kmax + 1)],
                                   tail=tail, tail_value=tail_value)


def write_rate_table(rate: RateFunction, path) -> None:
    if rate.kind != "table":
        raise DomainError("only table rate functions are serializable")
    lines = [f"{k + 1} {v!r}" for k, v in enumerate(rate.table)]
    if rate.tail == "identity":
        lines.append("tail: identity")
    else:
        lines.append(f"tail: constant {rate.tail_value!r}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


class ThermoTables:
    """Evaluators for Z, R, Phi for one rate function.

    ``phi_star`` is the estimated radius of convergence; ``m_star`` the
    supremum of R over the working range [0, 0.999 phi_star] (the
    attainable density ceiling), +inf when the series is unbounded there.
    """

    def __init__(self, rate: RateFunction, truncation_tol: float = 1e-14):
        self.rate = rate
        self.truncation_tol = truncation_tol
        self.phi_star = rate.radius_estimate()
        self._log_gfact = np.zeros(1)  # L[k] = log g(k)!, grown on demand
        self._grow_cache(256)
        if math.isinf(self.phi_star):
            self.m_star = math.inf
        else:
            try:
                self.m_star = self.mean_density(self.phi_max())
            except ConvergenceError:
                self.m_star = math.inf

    @classmethod
    def create(cls, rate: RateFunction, truncation_tol: float = 1e-14):
        return cls(rate, truncation_tol)

    def phi_max(self) -> float:
        return WORKING_MARGIN * self.phi_star

    def _grow_cache(self, kmax: int) -> None:
        if kmax < len(self._log_gfact):
            return
        g = self.rate.values(kmax)
        L = np.concatenate([[0.0], np.cumsum(np.log(g))])
        self._log_gfact = L  # atomic swap keeps concurrent readers consistent

    def _series(self, phi: float):
        """Scaled sums (logZ, S1/S0, S2/S0) of the weights phi^k/g(k)!."""
        if phi < 0.0:
            raise DomainError(f"fugacity must be >= 0, got {phi}")
        if phi > self.phi_max():
            raise DomainError(
                f"fugacity {phi} outside working range [0, {self.phi_max():g}) "
                f"(phi* = {self.phi_star:g})")
        if phi == 0.0:
            return 0.0, 0.0, 0.0
        lnphi = math.log(phi)
        tol = self.truncation_tol
        M = 0.0          # current log-scale
        S0, S1, S2 = 1.0, 0.0, 0.0   # sums scaled by exp(-M); k=0 term included
        consec = 0
        k0 = 1
        block = 256
        while k0 <= MAX_SERIES_TERMS:
            k1 = min(k0 + block, MAX_SERIES_TERMS + 1)
            self._grow_cache(k1)
            ks = np.arange(k0, k1, dtype=float)
            lw = ks * lnphi - self._log_gfact[k0:k1]
            mblk = float(lw.max())
            if mblk > M:
                rescale = math.exp(M - mblk)
                S0 *= rescale
                S1 *= rescale
                S2 *= rescale
                M = mblk
            w = np.exp(lw - M)
            partial = S0 + np.cumsum(w)
            small = w < tol * partial
            stop = None
            for i, flag in enumerate(small):
                consec = consec + 1 if flag else 0
                if consec >= 5:
                    stop = i + 1
                    break
            if stop is not None:
                w = w[:stop]
                ks = ks[:stop]
            S0 += float(w.sum())
            S1 += float((ks * w).sum())
            S2 += float((ks * ks * w).sum())
            if stop is not None:
                return M + math.log(S0), S1 / S0, S2 / S0
            k0 = k1
            block = min(2 * block, 65536)
        raise ConvergenceError(
            f"partition series did not converge within {MAX_SERIES_TERMS} terms "
            f"at phi={phi} (phi* estimate {self.phi_star:g})")

    # -- public evaluators -------------------------------------------------

    def log_partition(self, phi: float) -> float:
        return self._series(phi)[0]

    def partition_function(self, phi: float) -> float:
        """Z(phi) = sum_k phi^k / g(k)!."""
        return math.exp(self.log_partition(phi))

    def mean_density(self, phi: float) -> float:
        """R(phi) = phi Z'(phi)/Z(phi), the mean occupation per site."""
        return self._series(phi)[1]

    def mean_density_derivative(self, phi: float) -> float:
        """R'(phi), strictly positive on (0, phi*)."""
        if phi == 0.0:
            return 1.0 / self.rate.g(1)
        _, r1, r2 = self._series(phi)
        return (r2 - r1 * r1) / phi

    def fugacity(self, m: float) -> float:
        """Phi(m): the unique phi with R(phi) = m, by bisection."""
        if m < 0.0:
            raise DomainError(f"density must be >= 0, got {m}")
        if m == 0.0:
            return 0.0
        if m >= self.m_star:
            raise DomainError(
                f"density {m} >= attainable ceiling m* = {self.m_star:g}")
        lo = 0.0
        if math.isinf(self.phi_star):
            hi = max(1.0, m)
            for _ in range(200):
                if self.mean_density(hi) >= m:
                    break
                hi *= 2.0
            else:
                raise ConvergenceError(f"could not bracket fugacity for m={m}")
        else:
            hi = self.phi_max()
        for _ in range(220):
            mid = 0.5 * (lo + hi)
            r = self.mean_density(mid)
            if abs(r - m) < 1e-13:
                return mid
            if r < m:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-17 * max(1.0, hi):
                break
        return 0.5 * (lo + hi)

    def occupation_pmf(self, phi: float, k) -> float | np.ndarray:
        """Stationary marginal P(xi(x) = k) = phi^k / (Z(phi) g(k)!)."""
        logZ = self.log_partition(phi)
        k_arr = np.asarray(k)
        if np.any(k_arr < 0):
            raise DomainError("occupation numbers must be >= 0")
        kmax = int(k_arr.max())
        self._grow_cache(kmax + 1)
        L = self._log_gfact[k_arr]
        with np.errstate(divide="ignore"):
            lnphi = np.log(phi) if phi > 0.0 else -math.inf
        lw = np.where(k_arr == 0, 0.0, k_arr * lnphi - L)
        out = np.exp(lw - logZ)
        if np.isscalar(k):
            return float(out)
        return out

    def mean_density_array(self, phis: np.ndarray) -> np.ndarray:
        return np.array([self.mean_density(float(p)) for p in phis])
