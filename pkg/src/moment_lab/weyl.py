"""Exact Weyl algebra in x and p with [x, p] = i hbar.

Elements are finite sums ``c * x^a p^b * hbar^k`` with exact Gaussian-rational
coefficients ``c`` and ``hbar`` kept as a formal symbol. Monomials are stored in
normal order (all x to the left of all p), which makes equality a key-wise
comparison.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
from numbers import Rational
from typing import Iterable, Mapping

from .errors import ConfigError

__all__ = [
    "GaussianRational", "WeylElement", "X", "P", "HBAR", "ONE", "ZERO",
    "multiply", "commutator", "weyl_monomial", "SL2Triple", "casimir",
    "verify_ladder", "LadderReport", "expand_in_weyl_basis",
]


@dataclass(frozen=True)
class GaussianRational:
    """Exact complex number ``re + i*im`` with rational parts."""

    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @classmethod
    def coerce(cls, v) -> "GaussianRational":
        if isinstance(v, GaussianRational):
            return v
        if isinstance(v, (int, Rational)):
            return cls(Fraction(v), Fraction(0))
        if isinstance(v, complex) and v.real.is_integer() and v.imag.is_integer():
            return cls(Fraction(int(v.real)), Fraction(int(v.imag)))
        raise TypeError(f"cannot use {v!r} as an exact coefficient")

    def __add__(self, o):
        o = GaussianRational.coerce(o)
        return GaussianRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __sub__(self, o):
        return self + (-GaussianRational.coerce(o))

    def __mul__(self, o):
        o = GaussianRational.coerce(o)
        return GaussianRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def conjugate(self):
        return GaussianRational(self.re, -self.im)

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __str__(self):
        if not self.im:
            return str(self.re)
        if self.im == 1:
            im = "i"
        elif self.im == -1:
            im = "-i"
        elif self.im.denominator == 1:
            im = f"{self.im}i"
        else:
            im = f"{self.im}*i"
        if not self.re:
            return im
        sign = "" if im.startswith("-") else "+"
        return f"{self.re}{sign}{im}"


_I = GaussianRational(Fraction(0), Fraction(1))
_MINUS_I = GaussianRational(Fraction(0), Fraction(-1))

# key: (power of x, power of p, power of hbar)
Key = tuple[int, int, int]


def _accumulate(acc: dict, key: Key, c: GaussianRational):
    v = acc.get(key)
    v = c if v is None else v + c
    if v:
        acc[key] = v
    else:
        acc.pop(key, None)


@lru_cache(maxsize=None)
def _reorder(b: int, c: int) -> tuple[tuple[Key, GaussianRational], ...]:
    """Normal-ordered form of ``p^b x^c``.

    Peels one x at a time with ``p^b x = x p^b - i hbar b p^(b-1)``.
    """
    if b == 0 or c == 0:
        return (((c, b, 0), GaussianRational(Fraction(1))),)
    acc: dict = {}
    # x * (p^b x^(c-1))
    for (a2, b2, k2), v in _reorder(b, c - 1):
        _accumulate(acc, (a2 + 1, b2, k2), v)
    # -i hbar b * (p^(b-1) x^(c-1))
    for (a2, b2, k2), v in _reorder(b - 1, c - 1):
        _accumulate(acc, (a2, b2, k2 + 1), v * _MINUS_I * b)
    return tuple(sorted(acc.items()))


class WeylElement:
    """Immutable element of the Weyl algebra in canonical normal order."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Key, object] | Iterable[tuple[Key, object]] = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict = {}
        for (a, b, k), c in items:
            if min(a, b, k) < 0:
                raise ConfigError(f"negative power in key {(a, b, k)}")
            _accumulate(acc, (int(a), int(b), int(k)), GaussianRational.coerce(c))
        self._terms = acc
        self._hash = None

    @classmethod
    def scalar(cls, c, hbar_power: int = 0) -> "WeylElement":
        return cls({(0, 0, hbar_power): c})

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def __iter__(self):
        return iter(sorted(self._terms.items()))

    def __len__(self):
        return len(self._terms)

    def __bool__(self):
        return bool(self._terms)

    def _lift(self, o) -> "WeylElement":
        return o if isinstance(o, WeylElement) else WeylElement.scalar(o)

    def __add__(self, o):
        o = self._lift(o)
        acc = dict(self._terms)
        for key, c in o._terms.items():
            _accumulate(acc, key, c)
        return WeylElement(acc)

    __radd__ = __add__

    def __neg__(self):
        return WeylElement({k: -c for k, c in self._terms.items()})

    def __sub__(self, o):
        return self + (-self._lift(o))

    def __rsub__(self, o):
        return self._lift(o) - self

    def __mul__(self, o):
        if not isinstance(o, WeylElement):
            c = GaussianRational.coerce(o)
            return WeylElement({k: v * c for k, v in self._terms.items()})
        return multiply(self, o)

    def __rmul__(self, o):
        return self * o  # scalars commute with everything

    def __pow__(self, n: int):
        if n < 0:
            raise ConfigError("negative powers are not in the algebra")
        out = ONE
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, o):
        if not isinstance(o, WeylElement):
            try:
                o = WeylElement.scalar(o)
            except TypeError:
                return NotImplemented
        return self._terms == o._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def adjoint(self) -> "WeylElement":
        """Formal adjoint: reverse products and conjugate coefficients (hbar real)."""
        acc: dict = {}
        for (a, b, k), c in self._terms.items():
            cc = c.conjugate()
            for (a2, b2, k2), v in _reorder(b, a):
                _accumulate(acc, (a2, b2, k + k2), v * cc)
        return WeylElement(acc)

    def at_hbar(self, value) -> "WeylElement":
        """Substitute a rational value for the formal hbar."""
        value = Fraction(value)
        acc: dict = {}
        for (a, b, k), c in self._terms.items():
            _accumulate(acc, (a, b, 0), c * (value ** k))
        return WeylElement(acc)

    def substitute(self, x_image: "WeylElement", p_image: "WeylElement") -> "WeylElement":
        """Apply the algebra map x -> x_image, p -> p_image (must preserve [x, p])."""
        out = ZERO
        for (a, b, k), c in self._terms.items():
            out = out + (x_image ** a) * (p_image ** b) * WeylElement.scalar(c, k)
        return out

    @property
    def degree(self) -> int:
        return max((a + b for a, b, _ in self._terms), default=0)

    def is_scalar(self) -> bool:
        return all(a == 0 and b == 0 for a, b, _ in self._terms)

    def __repr__(self):
        return f"WeylElement({str(self)!r})"

    def __str__(self):
        """Render as ``x^a p^b * (c) h^k`` terms joined by ``+``; zero is ``0``."""
        if not self._terms:
            return "0"
        parts = []
        for (a, b, k), c in sorted(self._terms.items(), key=lambda kv: (-kv[0][0] - kv[0][1], kv[0])):
            parts.append(f"x^{a} p^{b} * ({c}) h^{k}")
        return " + ".join(parts)


ZERO = WeylElement()
ONE = WeylElement.scalar(1)
X = WeylElement({(1, 0, 0): 1})
P = WeylElement({(0, 1, 0): 1})
HBAR = WeylElement.scalar(1, 1)


def multiply(A: WeylElement, B: WeylElement) -> WeylElement:
    """Exact product ``A B`` in normal order."""
    acc: dict = {}
    for (a, b, k), ca in A._terms.items():
        for (c, d, l), cb in B._terms.items():
            cab = ca * cb
            for (a2, b2, k2), v in _reorder(b, c):
                _accumulate(acc, (a + a2, b2 + d, k + l + k2), v * cab)
    return WeylElement(acc)


def commutator(A: WeylElement, B: WeylElement) -> WeylElement:
    return multiply(A, B) - multiply(B, A)


@lru_cache(maxsize=None)
def weyl_monomial(n: int, l: int) -> WeylElement:
    """Weyl-symmetric monomial of degree ``n - l`` in x and ``l`` in p.

    ``2**-l * sum_k C(l, k) p^k x^(n-l) p^(l-k)``, returned in normal order.
    """
    if not (0 <= l <= n):
        raise ConfigError(f"need 0 <= l <= n, got n={n}, l={l}")
    xs = X ** (n - l)
    out = ZERO
    for k in range(l + 1):
        out = out + comb(l, k) * ((P ** k) * xs * (P ** (l - k)))
    return out * Fraction(1, 2 ** l)


def expand_in_weyl_basis(E: WeylElement, n: int):
    """Write ``E`` as ``sum_l c_l O_{n,l}`` with hbar-polynomial coefficients.

    Returns ``(coefficients, remainder)``; a zero remainder means ``E`` lies in
    the degree-``n`` module. The top-degree part of ``O_{n,l}`` is exactly
    ``x^(n-l) p^l``, which makes the expansion triangular.
    """
    rem = E
    coeffs = []
    for l in range(n + 1):
        c = WeylElement({(0, 0, k): v for (a, b, k), v in rem._terms.items()
                         if (a, b) == (n - l, l)})
        coeffs.append(c)
        if c:
            rem = rem - c * weyl_monomial(n, l)
    return coeffs, rem


@dataclass(frozen=True)
class SL2Triple:
    x2: WeylElement
    p2: WeylElement
    D: WeylElement

    @classmethod
    def standard(cls) -> "SL2Triple":
        return cls(X * X, P * P, (X * P + P * X) * Fraction(1, 2))

    def relabel(self) -> "SL2Triple":
        """Image under the symplectic map x -> p, p -> -x."""
        f = lambda e: e.substitute(P, -X)  # noqa: E731
        return SL2Triple(f(self.x2), f(self.p2), f(self.D))

    def is_self_adjoint(self) -> bool:
        return all(e == e.adjoint() for e in (self.x2, self.p2, self.D))


def casimir(triple: SL2Triple) -> WeylElement:
    """``(x2 p2 + p2 x2)/2 - D^2``; a scalar for any sl(2,R) triple from x, p."""
    return (triple.x2 * triple.p2 + triple.p2 * triple.x2) * Fraction(1, 2) - triple.D * triple.D


@dataclass
class LadderReport:
    n: int
    l: int
    residuals: dict  # identity name -> residual WeylElement (ZERO when it holds)

    @property
    def passed(self) -> bool:
        return not any(self.residuals.values())

    def failures(self) -> dict:
        return {k: v for k, v in self.residuals.items() if v}


def verify_ladder(n: int, l: int) -> LadderReport:
    """Check the three sl(2,R) actions on ``O_{n,l}`` as exact identities."""
    if not (0 <= l <= n):
        raise ConfigError(f"need 0 <= l <= n, got n={n}, l={l}")
    t = SL2Triple.standard()
    o = weyl_monomial(n, l)
    ih = WeylElement.scalar(_I, 1)
    raise_ = weyl_monomial(n, l + 1) if l < n else ZERO
    lower = weyl_monomial(n, l - 1) if l > 0 else ZERO
    res = {
        "[D,O]": commutator(t.D, o) - ih * (2 * l - n) * o,
        "[p2,O]": commutator(t.p2, o) - ih * (-2 * (n - l)) * raise_,
        "[x2,O]": commutator(t.x2, o) - ih * (2 * l) * lower,
    }
    return LadderReport(n, l, res)
