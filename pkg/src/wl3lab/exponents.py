"""Exact exponent bookkeeping: rationals extended by ∞, Serrin classes,
bootstrap schedules and the integrability conditions they rely on.

No floating point is used here. Inputs are ints, :class:`fractions.Fraction`,
strings such as ``"12/7"`` or ``"inf"``, or :class:`ExtRational`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering

__all__ = [
    "ExtRational",
    "INF",
    "ext",
    "Condition",
    "ExponentLedger",
    "serrin_classify",
    "bootstrap_schedule",
    "pressure_m_condition",
    "source_exponent_conditions",
    "delta_window",
    "delta_companion_condition",
    "young_convolution_check",
]


@total_ordering
class ExtRational:
    """A rational number or ``+∞``. ``1/∞ = 0`` and ``1/0 = ∞``."""

    __slots__ = ("_v",)

    def __init__(self, value):
        if isinstance(value, ExtRational):
            self._v = value._v
            return
        if isinstance(value, bool) or isinstance(value, float):
            raise TypeError("floats are not accepted; pass an int, Fraction or string")
        if isinstance(value, str):
            s = value.strip().lower()
            if s in ("inf", "+inf", "infinity", "∞"):
                self._v = None
                return
            value = Fraction(s)
        self._v = Fraction(value)

    # -- basic queries ---------------------------------------------------
    @property
    def is_inf(self) -> bool:
        return self._v is None

    @property
    def fraction(self) -> Fraction:
        if self._v is None:
            raise ValueError("∞ has no finite value")
        return self._v

    def reciprocal(self) -> "ExtRational":
        if self._v is None:
            return ExtRational(0)
        if self._v == 0:
            return INF
        return ExtRational(1 / self._v)

    # -- arithmetic ------------------------------------------------------
    def _binary(self, other, op):
        other = ext(other)
        if self._v is not None and other._v is not None:
            return ExtRational(op(self._v, other._v))
        return None

    def __add__(self, other):
        r = self._binary(other, lambda a, b: a + b)
        if r is not None:
            return r
        return INF  # ∞ + finite = ∞ + ∞ = ∞

    __radd__ = __add__

    def __sub__(self, other):
        other = ext(other)
        r = self._binary(other, lambda a, b: a - b)
        if r is not None:
            return r
        if other.is_inf:
            raise ArithmeticError("subtracting ∞ is undefined here")
        return INF

    def __rsub__(self, other):
        return ext(other) - self

    def __mul__(self, other):
        other = ext(other)
        r = self._binary(other, lambda a, b: a * b)
        if r is not None:
            return r
        finite = other if self.is_inf else self
        if not finite.is_inf and finite._v <= 0:
            raise ArithmeticError("∞ times a non-positive number is undefined here")
        return INF

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * ext(other).reciprocal()

    def __rtruediv__(self, other):
        return ext(other) * self.reciprocal()

    def __neg__(self):
        if self.is_inf:
            raise ArithmeticError("-∞ is not representable")
        return ExtRational(-self._v)

    # -- ordering --------------------------------------------------------
    def __eq__(self, other):
        try:
            other = ext(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self._v == other._v

    def __lt__(self, other):
        other = ext(other)
        if self.is_inf:
            return False
        if other.is_inf:
            return True
        return self._v < other._v

    def __hash__(self):
        return hash(("ExtRational", self._v))

    # -- formatting ------------------------------------------------------
    def __str__(self):
        if self.is_inf:
            return "inf"
        v = self._v
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"

    def __repr__(self):
        return f"ExtRational({str(self)!r})"

    def to_json(self) -> str:
        """``"num/den"`` (denominator always written) or ``"inf"``."""
        if self.is_inf:
            return "inf"
        return f"{self._v.numerator}/{self._v.denominator}"


INF = ExtRational("inf")


def ext(x) -> ExtRational:
    return x if isinstance(x, ExtRational) else ExtRational(x)


def inv(x) -> ExtRational:
    return ext(x).reciprocal()


# ---------------------------------------------------------------------------
# ledger containers


@dataclass(frozen=True)
class Condition:
    name: str
    holds: bool
    witness: str


@dataclass
class ExponentLedger:
    kind: str
    inputs: dict
    chain: dict = field(default_factory=dict)
    conditions: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.holds for c in self.conditions)

    def check(self, name: str, holds: bool, witness: str) -> bool:
        self.conditions.append(Condition(name, bool(holds), witness))
        return bool(holds)

    def __getitem__(self, key):
        return self.chain[key]

    def as_dict(self) -> dict:
        def enc(v):
            if isinstance(v, ExtRational):
                return v.to_json()
            if isinstance(v, (list, tuple)):
                return [enc(x) for x in v]
            return v

        return {
            "kind": self.kind,
            "inputs": {k: enc(v) for k, v in self.inputs.items()},
            "chain": {k: enc(v) for k, v in self.chain.items()},
            "conditions": [{"name": c.name, "holds": c.holds, "witness": c.witness} for c in self.conditions],
            "ok": self.ok,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), **kw)

    def table(self) -> str:
        lines = [f"{self.kind}: " + ", ".join(f"{k}={v}" for k, v in self.inputs.items())]
        for k, v in self.chain.items():
            if isinstance(v, (list, tuple)):
                v = "(" + ", ".join(str(x) for x in v) + ")"
            lines.append(f"  {k:<10} {v}")
        for c in self.conditions:
            lines.append(f"  [{'ok' if c.holds else 'FAIL':>4}] {c.name}: {c.witness}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# operations


def serrin_classify(q, s):
    """Class of ``(q, s)`` by the exact value of ``3/q + 2/s`` against 1."""
    q, s = ext(q), ext(s)
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    if s < 1:
        raise ValueError(f"s must be at least 1, got {s}")
    value = 3 * inv(q) + 2 * inv(s)
    if value < 1:
        cls = "subcritical"
    elif value == 1:
        cls = "critical"
    else:
        cls = "supercritical"
    return cls, value


def bootstrap_schedule(q, s) -> ExponentLedger:
    """Vorticity bootstrap: least ``K`` with ``σ = 2/(3K) < (1 - 3/q - 2/s)/5``,
    ``1/p_k = 2/3 - kσ`` and ``1/a_k = 1/p_k + 1/s``, ``1/b_k = 1/p_k + 1/q``."""
    q, s = ext(q), ext(s)
    if not (q > 3 and s >= 3):
        raise ValueError("need 3 < q <= inf and 3 <= s <= inf")
    cls, value = serrin_classify(q, s)
    if cls != "subcritical":
        raise ValueError(f"3/q + 2/s = {value} is not below 1")
    gap = (1 - value).fraction
    bound = gap / 5
    K = math.floor(Fraction(10) / (3 * gap)) + 1
    sigma = Fraction(2, 3 * K)
    led = ExponentLedger("bootstrap", {"q": q, "s": s})
    inv_p = [Fraction(2, 3) - k * sigma for k in range(K + 1)]
    p = [inv(x) for x in inv_p]
    a = [inv(ext(x) + inv(s)) for x in inv_p]
    b = [inv(ext(x) + inv(q)) for x in inv_p]
    led.chain.update({"K": K, "sigma": ext(sigma), "p": p, "a": a, "b": b, "p_K": p[-1]})
    led.check("sigma_bound", 0 < sigma < bound, f"0 < {sigma} < {bound}")
    prev = Fraction(2, 3 * (K - 1)) if K > 1 else None
    led.check(
        "K_minimal",
        prev is None or not prev < bound,
        "K-1 = 0 is excluded" if prev is None else f"2/(3(K-1)) = {prev} >= {bound}",
    )
    led.check("p_K_infinite", p[-1].is_inf, f"1/p_K = {inv_p[-1]}")
    led.check("a_k_at_least_1", all(x >= 1 for x in a), "max 1/a_k = " + str(max(inv(x) for x in a)) + " <= 1")
    led.check("b_k_at_least_1", all(x >= 1 for x in b), "max 1/b_k = " + str(max(inv(x) for x in b)) + " <= 1")
    return led


def pressure_m_condition(q, m=None) -> ExponentLedger:
    """Threshold ``2q/(3(q-2))`` for the pressure time exponent ``m``."""
    q = ext(q)
    if not q > 2:
        raise ValueError("q must exceed 2")
    thr = ext(Fraction(2, 3)) if q.is_inf else ext(2 * q.fraction / (3 * (q.fraction - 2)))
    led = ExponentLedger("pressure_m", {"q": q} if m is None else {"q": q, "m": ext(m)})
    led.chain["threshold"] = thr
    led.chain["implied_by_m_ge_1"] = thr < 1
    if m is not None:
        m = ext(m)
        led.check("m_at_least_1", m >= 1, f"m = {m}")
        led.check("m_above_threshold", m > thr, f"{m} > {thr}")
    return led


def source_exponent_conditions(q, s, m, delta=0) -> ExponentLedger:
    """Source-solution exponents for the non-endpoint critical case.

    ``1/a = 1/(q+δ) - 2/q + 1``, ``1/b = 1/(q+δ) - 1/r + 1`` with ``r = q`` and
    ``1/ρ = 1/s - 1/m + 1``; checks ``1 <= b < 3/2`` and
    ``(3/2 - 3/(2a)) ρ < 1``, reported next to the reduced form
    ``1/m < 3/s + 3/(2(q+δ))``.
    """
    q, s, m, delta = ext(q), ext(s), ext(m), ext(delta)
    if q.is_inf or not q > 3:
        raise ValueError("need finite q > 3")
    if delta < 0 or delta.is_inf:
        raise ValueError("δ must be a finite non-negative number")
    if 3 * inv(q) + 2 * inv(s) != 1:
        raise ValueError("the exponent pair must satisfy 3/q + 2/s = 1")
    if not m >= 1:
        raise ValueError("m must be at least 1")
    qd = q + delta
    inv_a = inv(qd) - 2 * inv(q) + 1
    r = q
    inv_b = inv(qd) - inv(r) + 1
    inv_rho = inv(s) - inv(m) + 1
    if not (0 < inv_rho <= 1):
        raise ValueError(f"1/ρ = {inv_rho} outside (0, 1]: need m <= s")
    if not (0 < inv_a <= 1 and 0 < inv_b <= 1):
        raise ValueError("kernel exponents a, b fall outside [1, ∞)")
    a, b, rho = inv(inv_a), inv(inv_b), inv(inv_rho)
    led = ExponentLedger("source", {"q": q, "s": s, "m": m, "delta": delta})
    led.chain.update({"a": a, "b": b, "r": r, "rho": rho})
    led.check("b_window", 1 <= b < ext(Fraction(3, 2)), f"1 <= {b} < 3/2")
    lhs = (ext(Fraction(3, 2)) - Fraction(3, 2) * inv_a) * rho
    led.check("time_integrability", lhs < 1, f"(3/2 - 3/(2a)) rho = {lhs} < 1")
    red = 3 * inv(s) + Fraction(3, 2) * inv(qd)
    led.chain["reduced_rhs"] = red
    led.check("reduced_form", inv(m) < red, f"1/m = {inv(m)} < {red}")
    return led


def delta_window(m):
    """``[0, 3(m-2)/2)`` returned as ``(lower, upper)`` with the upper end open."""
    m = ext(m)
    if m.is_inf:
        return ext(0), INF
    if not m > 2:
        raise ValueError("m must exceed 2")
    return ext(0), ext(Fraction(3, 2) * (m.fraction - 2))


def delta_companion_condition(m, delta) -> bool:
    """``1/m < 3/(2(3+δ))``, the time-integrability counterpart of the window."""
    m, delta = ext(m), ext(delta)
    return inv(m) < Fraction(3, 2) * inv(3 + delta)


def young_convolution_check(a, b, c, kind: str = "strong") -> bool:
    """Admissibility of ``(a, b, c)`` for Young's inequality ``1/c = 1/a + 1/b - 1``.

    ``strong`` allows exponents in ``[1, ∞]``; ``weak`` (one factor in a weak
    Lebesgue space) needs all three strictly inside ``(1, ∞)``.
    """
    a, b, c = ext(a), ext(b), ext(c)
    if kind not in ("strong", "weak"):
        raise ValueError(f"unknown kind {kind!r}")
    lo_ok = all(x >= 1 for x in (a, b, c))
    if kind == "weak":
        lo_ok = all(x > 1 and not x.is_inf for x in (a, b, c))
    if not lo_ok:
        return False
    return inv(c) == inv(a) + inv(b) - 1
