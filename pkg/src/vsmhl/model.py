"""Model parameters and initial laws.

The particle system is parametrized by a growth/dimension parameter ``eta``
(strictly greater than 1), a particle count ``N`` and a horizon ``T`` on the
slowed-down clock.  Initial positions are drawn i.i.d. from a law on [0, inf)
with finite first two moments and strictly positive mean; four analytically
tractable families are supported so every experiment has closed-form moments
to check against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "ModelParams",
    "PointMass",
    "GammaLaw",
    "UniformLaw",
    "DiscreteAtoms",
    "InitialLaw",
    "moments",
    "sample_initial",
    "validate",
    "law_violations",
    "require_valid_law",
    "law_to_dict",
    "law_from_dict",
    "split_rng",
]

ATOM_WEIGHT_TOL = 1e-12


def split_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the worker identified by an integer key path.

    Keys address streams directly (not sequentially), so adding replications
    or N values never perturbs the draws of existing ones.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class ModelParams:
    """Triple (eta, N, T) driving a simulation or limit computation."""

    eta: float
    n_particles: int
    horizon: float

    def violations(self) -> list[str]:
        out = []
        if not self.eta > 1.0:
            out.append("eta must exceed 1")
        if self.n_particles < 1:
            out.append("n_particles must be at least 1")
        if not self.horizon > 0.0:
            out.append("horizon must be positive")
        return out


@dataclass(frozen=True)
class PointMass:
    """Unit mass at a single point x0 >= 0."""

    x0: float


@dataclass(frozen=True)
class GammaLaw:
    """Gamma(shape k, scale theta); mean k*theta, second moment k(k+1)theta^2."""

    shape: float
    scale: float


@dataclass(frozen=True)
class UniformLaw:
    """Uniform on [a, b] with 0 <= a < b."""

    a: float
    b: float


@dataclass(frozen=True)
class DiscreteAtoms:
    """Finitely many atoms ((location, weight), ...); weights sum to 1."""

    atoms: tuple[tuple[float, float], ...]

    def locations(self) -> np.ndarray:
        return np.array([a[0] for a in self.atoms], dtype=float)

    def weights(self) -> np.ndarray:
        return np.array([a[1] for a in self.atoms], dtype=float)


InitialLaw = PointMass | GammaLaw | UniformLaw | DiscreteAtoms


def law_violations(law: InitialLaw) -> list[str]:
    """Collect every violated invariant of the law (empty list means valid)."""
    out: list[str] = []
    if isinstance(law, PointMass):
        if law.x0 < 0:
            out.append("point mass location must be nonnegative")
        elif law.x0 == 0:
            out.append("m_lambda must be positive")
    elif isinstance(law, GammaLaw):
        if not law.shape > 0:
            out.append("gamma shape must be positive")
        if not law.scale > 0:
            out.append("gamma scale must be positive")
    elif isinstance(law, UniformLaw):
        if law.a < 0:
            out.append("uniform support must be contained in [0, inf)")
        if not law.a < law.b:
            out.append("uniform law requires a < b")
    elif isinstance(law, DiscreteAtoms):
        if len(law.atoms) == 0:
            out.append("atom list must be nonempty")
        else:
            locs, wts = law.locations(), law.weights()
            if np.any(locs < 0):
                out.append("atom locations must be nonnegative")
            if np.any(wts <= 0):
                out.append("atom weights must be positive")
            if abs(wts.sum() - 1.0) > ATOM_WEIGHT_TOL:
                out.append("atom weights must sum to 1")
            if not out and float(wts @ locs) <= 0:
                out.append("m_lambda must be positive")
    else:
        out.append(f"unknown initial law type {type(law).__name__}")
    return out


def require_valid_law(law: InitialLaw) -> None:
    """Raise ValidationError naming the failed invariants, if any."""
    bad = law_violations(law)
    if bad:
        raise ValidationError("; ".join(bad))


def moments(law: InitialLaw) -> tuple[float, float]:
    """Closed-form first and second moments (m1, m2) of the law."""
    require_valid_law(law)
    if isinstance(law, PointMass):
        return law.x0, law.x0**2
    if isinstance(law, GammaLaw):
        k, th = law.shape, law.scale
        return k * th, k * (k + 1.0) * th**2
    if isinstance(law, UniformLaw):
        a, b = law.a, law.b
        return 0.5 * (a + b), (a * a + a * b + b * b) / 3.0
    locs, wts = law.locations(), law.weights()
    return float(wts @ locs), float(wts @ locs**2)


def sample_initial(law: InitialLaw, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n i.i.d. initial positions from the law.

    Deterministic for a fixed generator state; callers that need independent
    streams should hand each call its own spawned generator.
    """
    require_valid_law(law)
    if n < 1:
        raise ValueError("n must be at least 1")
    if isinstance(law, PointMass):
        return np.full(n, float(law.x0))
    if isinstance(law, GammaLaw):
        return rng.gamma(law.shape, law.scale, size=n)
    if isinstance(law, UniformLaw):
        return rng.uniform(law.a, law.b, size=n)
    return rng.choice(law.locations(), size=n, p=law.weights())


def validate(params: ModelParams, law: InitialLaw) -> list[str]:
    """Report every violated invariant of the pair; empty list means ok."""
    return params.violations() + law_violations(law)


_LAW_TAGS = {
    PointMass: "point_mass",
    GammaLaw: "gamma",
    UniformLaw: "uniform",
    DiscreteAtoms: "atoms",
}


def law_to_dict(law: InitialLaw) -> dict:
    """JSON-ready dict encoding (tag plus parameters)."""
    if isinstance(law, PointMass):
        return {"type": "point_mass", "x0": law.x0}
    if isinstance(law, GammaLaw):
        return {"type": "gamma", "shape": law.shape, "scale": law.scale}
    if isinstance(law, UniformLaw):
        return {"type": "uniform", "a": law.a, "b": law.b}
    if isinstance(law, DiscreteAtoms):
        return {"type": "atoms", "atoms": [[loc, w] for loc, w in law.atoms]}
    raise ValidationError(f"unknown initial law type {type(law).__name__}")


def law_from_dict(spec: dict) -> InitialLaw:
    """Inverse of law_to_dict; raises ValidationError on malformed input."""
    try:
        tag = spec["type"]
    except (TypeError, KeyError):
        raise ValidationError("initial law dict needs a 'type' tag") from None
    try:
        if tag == "point_mass":
            return PointMass(float(spec["x0"]))
        if tag == "gamma":
            return GammaLaw(float(spec["shape"]), float(spec["scale"]))
        if tag == "uniform":
            return UniformLaw(float(spec["a"]), float(spec["b"]))
        if tag == "atoms":
            return DiscreteAtoms(tuple((float(l), float(w)) for l, w in spec["atoms"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed '{tag}' law: {exc}") from None
    raise ValidationError(f"unknown initial law type tag {tag!r}")
