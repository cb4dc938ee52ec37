"""Global constants and their JSON overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from pathlib import Path


@dataclass(frozen=True)
class Config:
    C1: int = 8
    C2: int = 32
    # 2**21 keeps both C3**(1/3) and C3**(2/3) integral powers of two.
    C3: int = 2**21
    c_d: float = 0.1
    lacunary_dilation: int = 10
    centralize_floor: int = 10**4
    bump_radius: float = 0.24
    decay_order: int = 10
    quadrature_nodes: int = 4096

    def __post_init__(self):
        if not (1 < self.C1 < self.C2 < self.C3):
            raise ValueError("constants must satisfy 1 < C1 < C2 < C3")
        if self.C2 <= self.lacunary_dilation:
            raise ValueError("C2 must exceed the lacunary dilation")
        if not 1 / 6 < self.bump_radius < 0.25:
            raise ValueError("bump_radius must lie in (1/6, 1/4)")

    @property
    def tree_L(self) -> Fraction:
        """Sparseness parameter used when centralizing C2-dilated frequency cubes."""
        return exact_power(self.C3, Fraction(2, 3))

    def to_dict(self) -> dict:
        return asdict(self)


def exact_power(base, exponent: Fraction) -> Fraction:
    """base**exponent, exact when the result is rational, float-backed otherwise."""
    base = Fraction(base)
    exponent = Fraction(exponent)
    guess = round(float(base) ** float(exponent))
    if guess > 0 and Fraction(guess) ** exponent.denominator == base ** exponent.numerator:
        return Fraction(guess)
    return Fraction(float(base) ** float(exponent))


def exact_sqrt(x) -> Fraction:
    x = Fraction(x)
    from math import isqrt

    p, q = x.numerator, x.denominator
    rp, rq = isqrt(p), isqrt(q)
    if rp * rp == p and rq * rq == q:
        return Fraction(rp, rq)
    return Fraction(float(x) ** 0.5)


DEFAULT = Config()


def load_config(path: str | Path | None = None, **overrides) -> Config:
    cfg = DEFAULT
    if path is not None:
        data = json.loads(Path(path).read_text())
        known = {f.name for f in fields(Config)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **data)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg
