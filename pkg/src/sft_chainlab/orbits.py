"""Reeb orbit records: parity of multiple covers, the good/bad dichotomy,
and the sign action of Z/d on orientation lines.

Orientation lines are modeled axiomatically: every orbit carries a chosen
generator and the deck rotation acts by an explicit sign.  The analytic
construction behind them is out of scope here; only the sign calculus is
consumed downstream.
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional, Tuple

from .errors import InvalidInput, MissingData, MissingOrbit


@dataclass(frozen=True)
class SimpleOrbitSeed:
    """An embedded (simple) Reeb orbit.

    ``neg_eigenvalue_count_parity`` is the mod-2 count of return-map
    eigenvalues in (-1, 0); it controls how parity changes under iteration.
    ``homology_class`` lives in a user-declared free abelian group.
    """

    name: str
    action: Fraction
    parity: int
    neg_eigenvalue_count_parity: int
    cz_index: Optional[int] = None
    homology_class: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "action", Fraction(self.action))
        object.__setattr__(self, "parity", self.parity % 2)
        object.__setattr__(self, "neg_eigenvalue_count_parity",
                           self.neg_eigenvalue_count_parity % 2)
        if self.action <= 0:
            raise InvalidInput(f"orbit {self.name}: action must be positive")


def cover_parity(seed: SimpleOrbitSeed, k: int) -> int:
    """Parity of the k-fold cover: |seed| + (k+1) * m mod 2."""
    if k < 1:
        raise InvalidInput("covering multiplicity must be >= 1")
    return (seed.parity + (k + 1) * seed.neg_eigenvalue_count_parity) % 2


@dataclass(frozen=True)
class ReebOrbit:
    """A (possibly multiply covered) Reeb orbit: seed plus multiplicity d."""

    seed: SimpleOrbitSeed
    multiplicity: int = 1
    cz_index: Optional[int] = None  # per-cover CZ; falls back to seed when d = 1

    def __post_init__(self):
        if self.multiplicity < 1:
            raise InvalidInput("covering multiplicity must be >= 1")

    @property
    def key(self) -> Tuple[str, int]:
        return (self.seed.name, self.multiplicity)

    @property
    def action(self) -> Fraction:
        return self.seed.action * self.multiplicity

    @property
    def parity(self) -> int:
        return cover_parity(self.seed, self.multiplicity)

    @property
    def d(self) -> int:
        return self.multiplicity

    def cz(self) -> int:
        if self.cz_index is not None:
            return self.cz_index
        if self.multiplicity == 1 and self.seed.cz_index is not None:
            return self.seed.cz_index
        raise MissingData(f"orbit {self.key} carries no Conley-Zehnder index")

    def has_cz(self) -> bool:
        return self.cz_index is not None or (
            self.multiplicity == 1 and self.seed.cz_index is not None)

    @property
    def homology_class(self) -> Tuple[int, ...]:
        return tuple(self.multiplicity * x for x in self.seed.homology_class)


def is_bad(orbit: ReebOrbit) -> bool:
    """Bad orbits are the even covers of seeds with odd (-1,0)-eigenvalue count."""
    return orbit.multiplicity % 2 == 0 and orbit.seed.neg_eigenvalue_count_parity == 1


def is_good(orbit: ReebOrbit) -> bool:
    return not is_bad(orbit)


def sign_action(orbit: ReebOrbit, rotation: int) -> int:
    """Sign by which the given deck rotation acts on the orientation line.

    A generator acts by (-1) to the parity difference between the cover and
    its underlying simple orbit, so the homomorphism is trivial exactly on
    good orbits.
    """
    step = (orbit.parity - orbit.seed.parity) % 2
    return -1 if (step * rotation) % 2 else 1


@dataclass(frozen=True)
class OrientationLineModel:
    """Rank-one signed line attached to an orbit, with a chosen generator."""

    orbit: ReebOrbit
    generator_choice: int = 1

    def __post_init__(self):
        if self.generator_choice not in (1, -1):
            raise InvalidInput("generator choice must be +1 or -1")

    @property
    def parity(self) -> int:
        return self.orbit.parity

    def rotate(self, rotation: int) -> int:
        return sign_action(self.orbit, rotation)


class OrbitUniverse:
    """A finite universe of orbits: seeds, covers, and declared data.

    ``n`` is the half-dimension used to validate CZ parity against
    |gamma| = CZ + n - 3 mod 2; ``class_rank`` is the rank of the free
    abelian group modeling homotopy/homology classes.
    """

    def __init__(self, seeds, orbits, n: Optional[int] = None, class_rank: int = 0):
        self.seeds: Dict[str, SimpleOrbitSeed] = {}
        for s in seeds:
            if s.name in self.seeds:
                raise InvalidInput(f"duplicate seed name {s.name}")
            self.seeds[s.name] = s
        self.n = n
        self.class_rank = class_rank
        self.orbits: Dict[Tuple[str, int], ReebOrbit] = {}
        for o in orbits:
            if o.seed.name not in self.seeds or self.seeds[o.seed.name] != o.seed:
                raise InvalidInput(f"orbit {o.key} references an undeclared seed")
            if len(o.seed.homology_class) not in (0, class_rank):
                raise InvalidInput(f"seed {o.seed.name}: homology class has wrong rank")
            if o.key in self.orbits:
                raise InvalidInput(f"duplicate orbit {o.key}")
            if n is not None and o.has_cz():
                if (o.cz() + n - 3) % 2 != o.parity:
                    raise InvalidInput(
                        f"orbit {o.key}: CZ index parity inconsistent with declared parity")
            self.orbits[o.key] = o

    def orbit(self, key) -> ReebOrbit:
        key = tuple(key)
        if key not in self.orbits:
            raise MissingOrbit(f"unknown orbit {key}")
        return self.orbits[key]

    def good_orbits(self):
        return [o for o in self.orbits.values() if is_good(o)]

    def all_orbits(self):
        return list(self.orbits.values())

    def min_action(self) -> Fraction:
        if not self.orbits:
            return Fraction(0)
        return min(o.action for o in self.orbits.values())
