"""Generators of consistent random instances for the verification harnesses.

Consistency is built in exactly:

* flavor-I tables assign each generator a random cycle of the differential
  restricted to lower action (a rational null-space sample), so d.d = 0;
* flavor-II instances conjugate a differential by a random unitriangular
  algebra automorphism g (the cobordism map is g itself);
* flavor-III/IV instances exponentiate an inner derivation [d, S] and read
  the resulting explicit chain homotopy off as a table of disconnected
  counts.

Everything is exact rational arithmetic seeded through random.Random.
"""

import itertools
import random
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from . import linalg
from .counts import CountTable, multiset_stabilizer_order
from .dga import (CCElement, FilteredBasis, cobordism_map, differential,
                  homotopy_map, monomial_degree, _zero_beta)
from .orbits import OrbitUniverse, ReebOrbit, SimpleOrbitSeed

N_HALF_DIM = 2  # half-dimension used for all generated universes


def random_universe(rng: random.Random, max_orbits: int = 5,
                    allow_covers: bool = True) -> OrbitUniverse:
    """A small universe of good orbits with consistent CZ data.

    Orbit degrees form a ladder with actions increasing along it, so that
    index-one splittings with strictly decreasing action actually exist."""
    n_orbits = rng.randint(min(3, max_orbits), max_orbits)
    seeds = []
    orbits = []
    top = rng.randint(2, 3)
    degrees = [rng.randint(0, top) for _ in range(n_orbits)]
    for i in range(min(n_orbits, 3)):
        degrees[i] = i
    for i, deg in enumerate(degrees):
        if allow_covers and i >= 2 and rng.random() < 0.25 and seeds:
            # a multiple cover of an existing seed, with its own CZ data
            seed = rng.choice(seeds)
            k = rng.randint(2, 3)
            want_parity = (seed.parity + (k + 1)
                           * seed.neg_eigenvalue_count_parity) % 2
            cz = deg - N_HALF_DIM + 3
            if (cz + N_HALF_DIM - 3) % 2 != want_parity:
                cz += 1
            cover = ReebOrbit(seed, k, cz_index=cz)
            if cover.key not in {o.key for o in orbits}:
                orbits.append(cover)
            continue
        # occasionally heavy: large action at low degree, so degree-raising
        # action-decreasing operators (chain homotopies) have room to exist
        heavy = rng.choice([0, 0, 1, 1, 2, 3])
        action = Fraction(deg + heavy) + Fraction(rng.randint(1, 15), 16)
        cz = deg - N_HALF_DIM + 3  # integer grading equals deg
        parity = (cz + N_HALF_DIM - 3) % 2
        seed = SimpleOrbitSeed(f"g{i}", action, parity, 0, cz_index=cz)
        seeds.append(seed)
        orbits.append(ReebOrbit(seed, 1))
    return OrbitUniverse(seeds, orbits, n=N_HALF_DIM, class_rank=0)


def _random_fraction(rng: random.Random) -> Fraction:
    num = rng.choice([-3, -2, -1, 1, 2, 3])
    den = rng.choice([1, 1, 1, 2])
    return Fraction(num, den)


def element_to_entries(universe: OrbitUniverse, pos_key, elt: CCElement) -> Dict:
    """Invert the pairing normalization: table entries reproducing d(q) = elt."""
    d = universe.orbit(pos_key).d
    entries = {}
    for (word, beta), coeff in elt.terms.items():
        entries[(pos_key, word, beta)] = coeff * d * multiset_stabilizer_order(word)
    return entries


def random_consistent_table_I(universe: OrbitUniverse, rng: random.Random,
                              density: float = 0.85,
                              max_letters: int = 2) -> CountTable:
    """Build d generator by generator: d(q) is a random cycle of lower action
    and degree one less, sampled from the exact null space."""
    entries: Dict = {}
    table = CountTable("I", {None: universe}, {})
    gens = sorted(universe.good_orbits(), key=lambda o: (o.action, o.key))
    for orbit in gens:
        if rng.random() > density:
            continue
        target_degree = monomial_degree(universe, (orbit.key,), N_HALF_DIM) - 1
        basis = [w for w in FilteredBasis(universe, orbit.action).monomials
                 if len(w) <= max_letters
                 and monomial_degree(universe, w, N_HALF_DIM) == target_degree]
        if not basis:
            continue
        # cycles of the differential built so far, restricted to the candidates
        cols = []
        all_targets: Dict = {}
        for w in basis:
            img = differential(table, CCElement(universe, {(w, ()): Fraction(1)}))
            col = img.project()
            cols.append(col)
            for t in col:
                all_targets.setdefault(t, len(all_targets))
        mat = tuple(tuple(cols[j].get(t, Fraction(0)) for j in range(len(basis)))
                    for t in sorted(all_targets, key=all_targets.get))
        if not all_targets:
            kernel = [tuple(Fraction(1) if i == j else Fraction(0)
                            for j in range(len(basis))) for i in range(len(basis))]
        else:
            kernel = linalg.nullspace(mat)
        if not kernel:
            continue
        picks = min(len(kernel), rng.randint(1, 2))
        chosen = rng.sample(range(len(kernel)), picks)
        coeffs = [Fraction(0)] * len(kernel)
        for i in chosen:
            coeffs[i] = _random_fraction(rng)
        vec = [sum((c * k[j] for c, k in zip(coeffs, kernel)), Fraction(0))
               for j in range(len(basis))]
        elt = CCElement(universe, {(w, ()): v for w, v in zip(basis, vec) if v})
        if elt.is_zero():
            continue
        entries.update(element_to_entries(universe, orbit.key, elt))
        table = CountTable("I", {None: universe}, entries)
    return table


_PAIR_CHOICES = {
    ("II", None): [(0, 0), (0, 1), (1, 1)],
    ("III", "{0}"): [(0, 0), (0, 1), (1, 1)],
    ("III", "{1}"): [(0, 0), (0, 1), (1, 1)],
    ("III", "(0,1)"): [(0, 0), (0, 1), (1, 1)],
    ("IV", "{0}"): [(0, 0), (0, 2), (2, 2)],
    ("IV", "(0,inf)"): [(0, 0), (0, 2), (2, 2)],
    ("IV", "{inf}"): [(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)],
}


def random_decorated_tree(universe: OrbitUniverse, rng: random.Random,
                          flavor: str = "I", max_vertices: int = 6,
                          s_label: Optional[str] = None):
    """A random valid decorated tree of the requested flavor.

    Levels are grown monotonically from the root; orbits are drawn from the
    one universe for every level (adequate for combinatorial tests)."""
    from . import trees as trees_mod
    keys = sorted(o.key for o in universe.all_orbits())
    if flavor in ("III", "IV") and s_label is None:
        s_label = rng.choice(trees_mod.S_LABELS[flavor])
    pairs = _PAIR_CHOICES.get((flavor, s_label if flavor != "II" else None))
    hi = {"I": None, "II": 1, "III": 1, "IV": 2}[flavor]
    n_components = 1 if flavor in ("I", "II") else rng.randint(1, 2)
    counter = itertools.count()
    vertices = []
    edges = []
    orbit = {}
    levels = {}

    def grow(parent: Optional[str], in_level: Optional[int], budget: int) -> int:
        v = f"v{next(counter)}"
        vertices.append(v)
        ename = f"e{next(counter)}"
        edges.append(trees_mod.Edge(ename, parent, v))
        orbit[ename] = universe.orbit(rng.choice(keys))
        used = 1
        if flavor == "I":
            n_children = rng.randint(0, 2) if budget > 1 else 0
            for _ in range(n_children):
                if used >= budget:
                    break
                if rng.random() < 0.5:
                    out = f"e{next(counter)}"
                    edges.append(trees_mod.Edge(out, v, None))
                    orbit[out] = universe.orbit(rng.choice(keys))
                else:
                    used += grow(v, None, budget - used)
            if rng.random() < 0.5:
                out = f"e{next(counter)}"
                edges.append(trees_mod.Edge(out, v, None))
                orbit[out] = universe.orbit(rng.choice(keys))
            return used
        choices = [p for p in pairs if p[0] == in_level]
        a, b = rng.choice(choices)
        levels[v] = (a, b)
        n_children = rng.randint(0, 2) if budget > 1 else 0
        for _ in range(n_children):
            if used >= budget:
                break
            # a child edge at level b: interior into a vertex, or a half
            # edge when b is the deepest level
            can_halt = (b == hi)
            if can_halt and rng.random() < 0.5:
                out = f"e{next(counter)}"
                edges.append(trees_mod.Edge(out, v, None))
                orbit[out] = universe.orbit(rng.choice(keys))
            elif any(p[0] == b for p in pairs):
                used += grow(v, b, budget - used)
        return used

    budget = max_vertices
    for _ in range(n_components):
        if budget <= 0:
            break
        budget -= grow(None, 0 if flavor != "I" else None, budget)
    tree = trees_mod.DecoratedTree.make(
        flavor, vertices, edges, orbit, {v: () for v in vertices},
        levels or None, s_label)
    bad = trees_mod.validate(tree)
    if bad:
        raise AssertionError(f"generator produced an invalid tree: {bad}")
    return tree


def action_bound(universe: OrbitUniverse, factor: int = 3) -> Fraction:
    return max((o.action for o in universe.good_orbits()), default=Fraction(1)) \
        * factor + 1


def perturbation_sweep_detected(table: CountTable, bound) -> bool:
    """Whether bumping each support entry in turn breaks d.d = 0."""
    from . import dga as dga_mod
    for key in table.support():
        entries = dict(table.entries)
        entries[key] = entries[key] + Fraction(1, 9)
        bumped = CountTable("I", table.universes, entries)
        if dga_mod.verify_d_squared(bumped, bound) is None:
            return False
    return True


def random_detectable_table_I(rng: random.Random, max_orbits: int = 5,
                              attempts: int = 80):
    """A consistent table with nonempty support on which every single-entry
    perturbation is detected by the d.d check (rejection sampling)."""
    for _ in range(attempts):
        universe = random_universe(rng, max_orbits)
        table = random_consistent_table_I(universe, rng)
        if not table.support():
            continue
        if perturbation_sweep_detected(table, action_bound(universe)):
            return universe, table
    raise RuntimeError("no detectable table found; widen the attempt budget")


class Automorphism:
    """A unitriangular algebra automorphism given on generators."""

    def __init__(self, universe: OrbitUniverse, corrections: Dict):
        # corrections: generator key -> CCElement of strictly smaller action
        self.universe = universe
        self.corrections = corrections

    def apply(self, x: CCElement) -> CCElement:
        out = CCElement.zero(self.universe)
        for (word, beta), coeff in x.terms.items():
            term = CCElement(self.universe, {((), beta): coeff})
            for letter in word:
                img = CCElement.generator(self.universe, letter)
                if letter in self.corrections:
                    img = img + self.corrections[letter]
                term = _mul(term, img)
                if term.is_zero():
                    break
            out = out + term
        return out

    def inverse_apply(self, x: CCElement) -> CCElement:
        # invert recursively: g^{-1}(q) = q - g^{-1}(correction)
        cache: Dict = {}

        def inv_gen(key) -> CCElement:
            if key in cache:
                return cache[key]
            out = CCElement.generator(self.universe, key)
            if key in self.corrections:
                out = out - inv_elt(self.corrections[key])
            cache[key] = out
            return out

        def inv_elt(e: CCElement) -> CCElement:
            total = CCElement.zero(self.universe)
            for (word, beta), coeff in e.terms.items():
                term = CCElement(self.universe, {((), beta): coeff})
                for letter in word:
                    term = _mul(term, inv_gen(letter))
                    if term.is_zero():
                        break
                total = total + term
            return total

        return inv_elt(x)

    def as_table(self, flavor: str = "II",
                 companions: Optional[Dict] = None) -> CountTable:
        entries: Dict = {}
        for orbit in self.universe.good_orbits():
            img = self.apply(CCElement.generator(self.universe, orbit.key))
            entries.update(element_to_entries(self.universe, orbit.key, img))
        return CountTable(flavor, {0: self.universe, 1: self.universe},
                          entries, companions)


def _mul(a: CCElement, b: CCElement) -> CCElement:
    from .dga import multiply
    return multiply(a, b)


def random_unitriangular_automorphism(universe: OrbitUniverse, rng: random.Random,
                                      density: float = 0.6) -> Automorphism:
    corrections: Dict = {}
    for orbit in universe.good_orbits():
        if rng.random() > density:
            continue
        degree = monomial_degree(universe, (orbit.key,), N_HALF_DIM)
        candidates = [w for w in FilteredBasis(universe, orbit.action).monomials
                      if monomial_degree(universe, w, N_HALF_DIM) == degree]
        if not candidates:
            continue
        terms = {}
        for w in candidates:
            if rng.random() < 0.5:
                terms[(w, ())] = _random_fraction(rng)
        if terms:
            corrections[orbit.key] = CCElement(universe, terms)
    return Automorphism(universe, corrections)


def conjugated_differential(universe: OrbitUniverse, g: Automorphism,
                            table_plus: CountTable) -> CountTable:
    """g . d . g^{-1} as a flavor-I table (exact conjugation)."""
    entries: Dict = {}
    for orbit in universe.good_orbits():
        q = CCElement.generator(universe, orbit.key)
        image = g.apply(differential(table_plus, g.inverse_apply(q)))
        entries.update(element_to_entries(universe, orbit.key, image))
    return CountTable("I", {None: universe}, entries)


def random_chain_map_instance(rng: random.Random, max_orbits: int = 4):
    """(tableII, table_plus, table_minus) with d_minus g = g d_plus exactly."""
    universe = random_universe(rng, max_orbits)
    table_plus = random_consistent_table_I(universe, rng)
    g = random_unitriangular_automorphism(universe, rng)
    table_minus = conjugated_differential(universe, g, table_plus)
    table2 = g.as_table("II")
    table2.companions = {"plus": table_plus, "minus": table_minus}
    return table2, table_plus, table_minus


class Derivation:
    """Odd derivation given on generators by a degree +1 correction."""

    def __init__(self, universe: OrbitUniverse, images: Dict):
        self.universe = universe
        self.images = images

    def apply(self, x: CCElement) -> CCElement:
        out = CCElement.zero(self.universe)
        for (word, beta), coeff in x.terms.items():
            sign = 1
            for i, letter in enumerate(word):
                if letter in self.images:
                    prefix = CCElement(self.universe,
                                       {(word[:i], beta): coeff * sign})
                    suffix = CCElement(self.universe, {(word[i + 1:], ()): Fraction(1)})
                    out = out + _mul(_mul(prefix, self.images[letter]), suffix)
                if self.universe.orbit(letter).parity:
                    sign = -sign
        return out


def random_degree_raising_derivation(universe: OrbitUniverse,
                                     rng: random.Random) -> Derivation:
    images: Dict = {}
    for orbit in universe.good_orbits():
        degree = monomial_degree(universe, (orbit.key,), N_HALF_DIM) + 1
        candidates = [w for w in FilteredBasis(universe, orbit.action).monomials
                      if monomial_degree(universe, w, N_HALF_DIM) == degree]
        terms = {}
        for w in candidates:
            if rng.random() < 0.5:
                terms[(w, ())] = _random_fraction(rng)
        if terms:
            images[orbit.key] = CCElement(universe, terms)
    return Derivation(universe, images)


def _operator_sum(universe, ops, x: CCElement) -> CCElement:
    out = CCElement.zero(universe)
    for op in ops:
        out = out + op(x)
    return out


def read_off_homotopy_table(universe: OrbitUniverse, operator, bound,
                            flavor: str, companions: Dict) -> CountTable:
    """Represent an action-decreasing odd operator as a disconnected-count
    table: each matrix entry goes to the canonical partition (all outputs on
    the first positive end, the remaining ends capped)."""
    basis = FilteredBasis(universe, bound)
    entries: Dict = {}
    lower = companions["minus"].upper_universe()
    for word in basis.monomials:
        if not word:
            continue
        image = operator(CCElement(universe, {(word, ()): Fraction(1)}))
        for (out_word, beta), coeff in image.terms.items():
            comps = [(word[0], out_word, beta)]
            for letter in word[1:]:
                comps.append((letter, (), beta and tuple(0 for _ in beta) or ()))
            key = tuple(sorted(comps))
            probe = CountTable(flavor, dict_universes(flavor, universe, lower),
                               {key: Fraction(1)})
            produced = homotopy_map(probe,
                                    CCElement(universe, {(word, ()): Fraction(1)}))
            eta = produced.terms.get((out_word, beta), Fraction(0))
            if eta == 0:
                raise AssertionError("canonical partition produced a zero pairing")
            entries[key] = coeff / eta
    return CountTable(flavor, dict_universes(flavor, universe, lower), entries,
                      companions)


def dict_universes(flavor: str, up: OrbitUniverse, lo: OrbitUniverse) -> Dict:
    if flavor == "III":
        return {0: up, 1: lo}
    return {0: up, 1: up, 2: lo}


def random_homotopy_instance_III(rng: random.Random, max_orbits: int = 3,
                                 require_support: bool = False,
                                 attempts: int = 40):
    """Tables (d+, d-, phi0, phi1, K) with phi1 - phi0 = dK + Kd exactly."""
    for _ in range(attempts if require_support else 1):
        out = _homotopy_instance_III_once(rng, max_orbits)
        if not require_support or out[0].support():
            return out
    return out


def _homotopy_instance_III_once(rng: random.Random, max_orbits: int = 3):
    universe = random_universe(rng, max_orbits, allow_covers=False)
    table_plus = random_consistent_table_I(universe, rng)
    g = random_unitriangular_automorphism(universe, rng)
    table_minus = conjugated_differential(universe, g, table_plus)
    phi0 = g.as_table("II")
    S = random_degree_raising_derivation(universe, rng)

    def theta(x):
        return differential(table_plus, S.apply(x)) + \
            S.apply(differential(table_plus, x))

    def exp_theta(x):
        total = CCElement.zero(universe)
        term = x
        k = 0
        while not term.is_zero():
            total = total + term
            k += 1
            term = theta(term).scale(Fraction(1, k))
        return total

    def big_g(x):
        # sum theta^k / (k+1)!
        total = CCElement.zero(universe)
        term = x
        k = 0
        while not term.is_zero():
            total = total + term.scale(Fraction(1, k + 1))
            term = theta(term).scale(Fraction(1, k + 1))
            k += 1
        return total

    # phi1 := phi0 . exp(theta); homotopy K := phi0 . S . G
    phi1_entries: Dict = {}
    for orbit in universe.good_orbits():
        q = CCElement.generator(universe, orbit.key)
        img = g.apply(exp_theta(q))
        phi1_entries.update(element_to_entries(universe, orbit.key, img))
    phi1 = CountTable("II", {0: universe, 1: universe}, phi1_entries)

    actions = sorted(o.action for o in universe.good_orbits())
    bound = actions[-1] + 2 * actions[0] if actions else Fraction(1)

    def k_op(x):
        return g.apply(S.apply(big_g(x)))

    companions = {"plus": table_plus, "minus": table_minus,
                  "phi0": phi0, "phi1": phi1}
    table3 = read_off_homotopy_table(universe, k_op, bound, "III", companions)
    return table3, bound


def random_homotopy_instance_IV(rng: random.Random, max_orbits: int = 3,
                                require_support: bool = False,
                                attempts: int = 40):
    """Tables with phi12 phi01 - phi02 = dK + Kd exactly."""
    for _ in range(attempts if require_support else 1):
        out = _homotopy_instance_IV_once(rng, max_orbits)
        if not require_support or out[0].support():
            return out
    return out


def _homotopy_instance_IV_once(rng: random.Random, max_orbits: int = 3):
    universe = random_universe(rng, max_orbits, allow_covers=False)
    d0 = random_consistent_table_I(universe, rng)
    g1 = random_unitriangular_automorphism(universe, rng)
    d1 = conjugated_differential(universe, g1, d0)
    g2 = random_unitriangular_automorphism(universe, rng)
    d2 = conjugated_differential(universe, g2, d1)
    phi01 = g1.as_table("II", {"plus": d0, "minus": d1})
    phi12 = g2.as_table("II", {"plus": d1, "minus": d2})
    S = random_degree_raising_derivation(universe, rng)

    def theta(x):
        return differential(d0, S.apply(x)) + S.apply(differential(d0, x))

    def exp_neg_theta(x):
        total = CCElement.zero(universe)
        term = x
        k = 0
        while not term.is_zero():
            total = total + term
            k += 1
            term = theta(term).scale(Fraction(-1, k))
        return total

    def big_g_tilde(x):
        # sum (-theta)^k / (k+1)!
        total = CCElement.zero(universe)
        term = x
        k = 0
        while not term.is_zero():
            total = total + term.scale(Fraction(1, k + 1))
            term = theta(term).scale(Fraction(-1, k + 1))
            k += 1
        return total

    def compose_far(x):
        return g2.apply(g1.apply(x))

    # phi02 := phi12 phi01 exp(-theta): far - near = FF (1 - exp(-theta))
    #        = FF theta Gtilde = d K + K d with K := FF S Gtilde
    phi02_entries: Dict = {}
    for orbit in universe.good_orbits():
        q = CCElement.generator(universe, orbit.key)
        img = compose_far(exp_neg_theta(q))
        phi02_entries.update(element_to_entries(universe, orbit.key, img))
    phi02 = CountTable("II", {0: universe, 1: universe}, phi02_entries)

    actions = sorted(o.action for o in universe.good_orbits())
    bound = actions[-1] + 2 * actions[0] if actions else Fraction(1)

    def k_op(x):
        return compose_far(S.apply(big_g_tilde(x)))

    companions = {"plus": d0, "minus": d2,
                  "phi01": phi01, "phi12": phi12, "phi02": phi02}
    table4 = read_off_homotopy_table(universe, k_op, bound, "IV", companions)
    return table4, bound
