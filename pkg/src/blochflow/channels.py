"""Affine channels on the Bloch ball and time-parameterized channel families.

A qubit channel acts on Bloch vectors as r -> M r + shift, where M is a
3x3 real matrix (rotation / contraction / expansion) and shift is a real
3-vector (translation).  A family maps a time t >= 0 to such a channel and
always starts at the identity.  Composition, inversion and the
intermediate map connecting two snapshots of a family,

    family(t) = intermediate(tau, t) o family(tau),

are the algebra the divisibility classifier is built on.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .bloch import HelstromVector, _check_probability, check_state

__all__ = [
    "CUSTOM_FAMILY_HEADER",
    "SINGULARITY_THRESHOLD",
    "AffineChannel",
    "ChannelFamily",
    "NonPhysicalOutputWarning",
    "SingularChannel",
    "collapse_shift_family",
    "collapse_shift_limit",
    "compose",
    "evolved_helstrom_vector",
    "family_from_samples",
    "gad_family",
    "intermediate",
    "invert",
    "isotropic_decay_family",
    "load_family_csv",
    "smallest_singular_value",
    "spin_cosine_family",
]

# Outputs farther than this outside the unit ball are flagged as evidence
# of a non-positive map.
PHYSICAL_OUTPUT_TOL = 1e-9

# Smallest singular value below which a channel counts as non-invertible.
SINGULARITY_THRESHOLD = 1e-10

UNITAL_TOL = 1e-10


class SingularChannel(ValueError):
    """Raised when a channel with (numerically) rank-deficient M is inverted."""


class NonPhysicalOutputWarning(UserWarning):
    """A channel pushed a state outside the Bloch ball."""


@dataclass(frozen=True, eq=False)
class AffineChannel:
    """The map r -> matrix @ r + shift on Bloch vectors."""

    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        s = np.array(self.shift, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"matrix must be 3x3, got {m.shape}")
        if s.shape != (3,):
            raise ValueError(f"shift must have shape (3,), got {s.shape}")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
            raise ValueError("channel entries must be finite")
        m.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "shift", s)

    @classmethod
    def identity(cls) -> "AffineChannel":
        return cls(np.eye(3), np.zeros(3))

    def is_unital(self, tol: float = UNITAL_TOL) -> bool:
        """Unital channels leave the maximally mixed state fixed: |shift| ~ 0."""
        return float(np.linalg.norm(self.shift)) <= tol

    def apply(self, r) -> np.ndarray:
        """Evolve a state.  Output physicality is the channel's problem, not
        the caller's: leaving the ball is flagged with a warning so that
        non-positive maps are diagnosable but still computable."""
        out = self.matrix @ check_state(r) + self.shift
        norm = float(np.linalg.norm(out))
        if norm > 1.0 + PHYSICAL_OUTPUT_TOL:
            warnings.warn(
                f"channel output left the Bloch ball (|r'| = {norm:.12g}); "
                "the map is not positive",
                NonPhysicalOutputWarning,
                stacklevel=2,
            )
        return out


def smallest_singular_value(ch: AffineChannel) -> float:
    return float(np.linalg.svd(ch.matrix, compute_uv=False)[-1])


def compose(a: AffineChannel, b: AffineChannel) -> AffineChannel:
    """Channel running b first, then a: (M_a M_b, M_a shift_b + shift_a)."""
    return AffineChannel(a.matrix @ b.matrix, a.matrix @ b.shift + a.shift)


def invert(ch: AffineChannel, threshold: float = SINGULARITY_THRESHOLD) -> AffineChannel:
    """Inverse map (M^-1, -M^-1 shift); requires M comfortably non-singular."""
    smallest = smallest_singular_value(ch)
    if smallest <= threshold:
        raise SingularChannel(
            f"channel is not invertible: smallest singular value {smallest:.3e} "
            f"<= threshold {threshold:.1e}"
        )
    inv = np.linalg.inv(ch.matrix)
    return AffineChannel(inv, -inv @ ch.shift)


@dataclass(frozen=True, eq=False)
class ChannelFamily:
    """A time-parameterized channel t -> AffineChannel for t >= 0.

    Built-in families evaluate to the identity at t = 0 (within 1e-12).
    ``unital_hint`` is advisory metadata; the actual test is per-channel.
    """

    name: str
    params: dict = field(default_factory=dict)
    eval_fn: Callable[[float], AffineChannel] = AffineChannel.identity
    unital_hint: bool | None = None

    def __call__(self, t: float) -> AffineChannel:
        return self.eval_fn(float(t))


def gad_family(gamma: float, f: float) -> ChannelFamily:
    """Generalized amplitude damping with decay rate gamma and drive frequency f.

    At time t the transverse Bloch components contract by exp(-gamma t / 2),
    the longitudinal one by eta = exp(-gamma t), and the state is translated
    along z by (2 cos^2(f t) - 1)(1 - eta).  The drive makes the fixed point
    oscillate, so the family is non-unital for t > 0 except at the instants
    where cos^2(f t) = 1/2.
    """
    gamma = float(gamma)
    f = float(f)
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")

    def eval_fn(t: float) -> AffineChannel:
        eta = np.exp(-gamma * t)
        transverse = np.exp(-0.5 * gamma * t)
        cz = (2.0 * np.cos(f * t) ** 2 - 1.0) * (1.0 - eta)
        return AffineChannel(np.diag([transverse, transverse, eta]), np.array([0.0, 0.0, cz]))

    return ChannelFamily("gad", {"gamma": gamma, "f": f}, eval_fn, unital_hint=False)


def isotropic_decay_family(gamma: float) -> ChannelFamily:
    """Uniform contraction exp(-gamma t) of the whole ball; unital semigroup."""
    gamma = float(gamma)
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma!r}")

    def eval_fn(t: float) -> AffineChannel:
        return AffineChannel(np.exp(-gamma * t) * np.eye(3), np.zeros(3))

    return ChannelFamily("isotropic", {"gamma": gamma}, eval_fn, unital_hint=True)


def spin_cosine_family(omega: float) -> ChannelFamily:
    """Transverse cosine modulation diag(cos(omega t), cos(omega t), 1).

    Unital; non-invertible exactly at the zeros of cos(omega t), where every
    equatorial state is projected onto the z-axis.
    """
    omega = float(omega)
    if not np.isfinite(omega):
        raise ValueError(f"omega must be finite, got {omega!r}")

    def eval_fn(t: float) -> AffineChannel:
        c = np.cos(omega * t)
        return AffineChannel(np.diag([c, c, 1.0]), np.zeros(3))

    return ChannelFamily("spin", {"omega": omega}, eval_fn, unital_hint=True)


def collapse_shift_family(c: float, rate: float = 1.0) -> ChannelFamily:
    """Smooth interpolation towards the collapse-and-shift map.

    At time t the channel is r -> exp(-rate t) r + (0, 0, c (1 - exp(-rate t))),
    a convex mixture of the identity and the replacement map onto the state
    (0, 0, c).  It is therefore a valid (completely positive) channel at all
    times and tends to the total collapse M = 0 with translation (0, 0, c)
    as t -> infinity.
    """
    c = float(c)
    rate = float(rate)
    if abs(c) > 1.0:
        raise ValueError(f"shift target must satisfy |c| <= 1, got {c!r}")
    if rate <= 0.0:
        raise ValueError(f"rate must be positive, got {rate!r}")

    def eval_fn(t: float) -> AffineChannel:
        survival = np.exp(-rate * t)
        return AffineChannel(survival * np.eye(3), np.array([0.0, 0.0, c * (1.0 - survival)]))

    return ChannelFamily("collapse", {"c": c, "rate": rate}, eval_fn, unital_hint=False)


def collapse_shift_limit(c: float) -> AffineChannel:
    """The endpoint map itself: everything to the centre, then shifted to (0, 0, c)."""
    c = float(c)
    if abs(c) > 1.0:
        raise ValueError(f"shift target must satisfy |c| <= 1, got {c!r}")
    return AffineChannel(np.zeros((3, 3)), np.array([0.0, 0.0, c]))


def intermediate(fam: ChannelFamily, tau: float, t: float) -> AffineChannel:
    """Map taking the evolution from time tau to time t.

    Defined by family(t) = intermediate o family(tau), i.e. the composition
    of family(t) with the inverse of family(tau).  Requires family(tau) to
    be invertible; tau = t returns the identity exactly.
    """
    tau = float(tau)
    t = float(t)
    if tau < 0.0 or t < tau:
        raise ValueError(f"need 0 <= tau <= t, got tau={tau!r}, t={t!r}")
    if tau == t:
        return AffineChannel.identity()
    return compose(fam(t), invert(fam(tau)))


def evolved_helstrom_vector(fam: ChannelFamily, t: float, r1, r2, p) -> HelstromVector:
    """Weighted difference of the evolved pair: M(t) (p r1 - q r2) + (p - q) shift(t).

    Identical to building the Helstrom vector from the two evolved states;
    the translation survives with weight p - q, which is what makes the
    biased distance sensitive to non-unital dynamics.
    """
    a = check_state(r1, "r1")
    b = check_state(r2, "r2")
    p = _check_probability(p)
    q = 1.0 - p
    ch = fam(t)
    w = ch.matrix @ (p * a - q * b) + (p - q) * ch.shift
    return HelstromVector(w=w, p=p)


CUSTOM_FAMILY_HEADER = "t,T11,T12,T13,T21,T22,T23,T31,T32,T33,c1,c2,c3"


def family_from_samples(times, matrices, shifts, name: str = "custom") -> ChannelFamily:
    """Family interpolated linearly (entrywise) from sampled (t, M, shift) rows.

    Needs at least two rows on a strictly increasing time grid.  Outside the
    sampled range the nearest endpoint row is held constant.
    """
    times = np.asarray(times, dtype=float)
    matrices = np.asarray(matrices, dtype=float)
    shifts = np.asarray(shifts, dtype=float)
    n = times.size
    if n < 2:
        raise ValueError("need at least two sampled rows")
    if times.ndim != 1 or not np.all(np.diff(times) > 0.0):
        raise ValueError("sample times must be strictly increasing")
    if matrices.shape != (n, 3, 3) or shifts.shape != (n, 3):
        raise ValueError("matrices must be (n, 3, 3) and shifts (n, 3)")
    table = np.hstack([matrices.reshape(n, 9), shifts])

    def eval_fn(t: float) -> AffineChannel:
        if t <= times[0]:
            row = table[0]
        elif t >= times[-1]:
            row = table[-1]
        else:
            j = int(np.searchsorted(times, t, side="right"))
            weight = (t - times[j - 1]) / (times[j] - times[j - 1])
            row = (1.0 - weight) * table[j - 1] + weight * table[j]
        return AffineChannel(row[:9].reshape(3, 3), row[9:])

    return ChannelFamily(name, {"rows": int(n)}, eval_fn)


def load_family_csv(path) -> ChannelFamily:
    """Read a custom family from CSV with header ``t,T11,...,T33,c1,c2,c3``."""
    path = Path(path)
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty custom-family file") from None
        if [h.strip() for h in header] != CUSTOM_FAMILY_HEADER.split(","):
            raise ValueError(
                f"{path}: bad header; expected exactly '{CUSTOM_FAMILY_HEADER}'"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 13:
                raise ValueError(f"{path}:{lineno}: expected 13 columns, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two data rows")
    data = np.asarray(rows, dtype=float)
    return family_from_samples(
        data[:, 0], data[:, 1:10].reshape(-1, 3, 3), data[:, 10:13], name=path.stem
    )
