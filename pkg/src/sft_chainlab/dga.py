"""The contact homology chain algebra: free supercommutative algebra on good
orbit generators, count-table differentials and cobordism maps, chain
homotopies, action-filtered homology, and the filtered isomorphism check.

Elements carry homotopy-class tags so that the verification routines check
the class-refined identities; the chain complex itself (homology_below,
trivial_cobordism_check) lives on plain monomials.
"""

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from . import linalg
from .counts import CountTable, multiset_stabilizer_order
from .errors import InvalidInput, NotFiltered
from .orbits import OrbitUniverse, is_good

OrbitKey = Tuple[str, int]
Monomial = Tuple[OrbitKey, ...]


def _zero_beta(universe: OrbitUniverse) -> Tuple[int, ...]:
    return (0,) * universe.class_rank


class CCElement:
    """Element of the free supercommutative algebra on good-orbit generators.

    ``terms`` maps (canonical monomial, homotopy-class tag) to a rational.
    Monomials never repeat an odd generator.
    """

    def __init__(self, universe: OrbitUniverse, terms: Optional[Dict] = None):
        self.universe = universe
        self.terms: Dict[Tuple[Monomial, Tuple[int, ...]], Fraction] = {}
        for (word, beta), value in (terms or {}).items():
            value = Fraction(value)
            if value:
                self.terms[(tuple(word), tuple(beta))] = value

    @staticmethod
    def unit(universe: OrbitUniverse) -> "CCElement":
        return CCElement(universe, {((), _zero_beta(universe)): Fraction(1)})

    @staticmethod
    def zero(universe: OrbitUniverse) -> "CCElement":
        return CCElement(universe)

    @staticmethod
    def generator(universe: OrbitUniverse, key) -> "CCElement":
        key = tuple(key)
        orbit = universe.orbit(key)
        if not is_good(orbit):
            raise InvalidInput(f"{key} is a bad orbit and not a generator")
        return CCElement(universe, {((key,), _zero_beta(universe)): Fraction(1)})

    @staticmethod
    def monomial(universe: OrbitUniverse, keys, coefficient=1,
                 beta=None) -> "CCElement":
        word, sign = _normal_form(universe, [tuple(k) for k in keys])
        if sign == 0:
            return CCElement.zero(universe)
        beta = tuple(beta) if beta is not None else _zero_beta(universe)
        return CCElement(universe, {(word, beta): Fraction(coefficient) * sign})

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "CCElement") -> "CCElement":
        out = dict(self.terms)
        for key, value in other.terms.items():
            out[key] = out.get(key, Fraction(0)) + value
            if out[key] == 0:
                del out[key]
        return CCElement(self.universe, out)

    def __sub__(self, other: "CCElement") -> "CCElement":
        return self + other.scale(-1)

    def scale(self, c) -> "CCElement":
        c = Fraction(c)
        return CCElement(self.universe,
                         {key: c * value for key, value in self.terms.items()})

    def project(self) -> Dict[Monomial, Fraction]:
        """Forget homotopy-class tags (sum over them)."""
        out: Dict[Monomial, Fraction] = {}
        for (word, _), value in self.terms.items():
            out[word] = out.get(word, Fraction(0)) + value
            if out[word] == 0:
                del out[word]
        return out

    def __eq__(self, other):
        return isinstance(other, CCElement) and self.terms == other.terms

    def __repr__(self):
        if not self.terms:
            return "CC(0)"
        bits = []
        for (word, beta), value in sorted(self.terms.items()):
            mono = "*".join(f"q[{name},{m}]" for name, m in word) or "1"
            tag = f"@{beta}" if any(beta) else ""
            bits.append(f"{value}*{mono}{tag}")
        return "CC(" + " + ".join(bits) + ")"


def _normal_form(universe: OrbitUniverse, word: List[OrbitKey]):
    """Sort a word of generators; returns (tuple, Koszul sign or 0)."""
    parities = [universe.orbit(k).parity for k in word]
    sign = 1
    # insertion sort, counting odd-odd transpositions
    arr = list(zip(word, parities))
    for i in range(1, len(arr)):
        j = i
        while j > 0 and arr[j - 1][0] > arr[j][0]:
            if arr[j - 1][1] and arr[j][1]:
                sign = -sign
            arr[j - 1], arr[j] = arr[j], arr[j - 1]
            j -= 1
    out = tuple(k for k, _ in arr)
    for i in range(len(out) - 1):
        if out[i] == out[i + 1] and universe.orbit(out[i]).parity:
            return out, 0
    return out, sign


def monomial_parity(universe: OrbitUniverse, word: Monomial) -> int:
    return sum(universe.orbit(k).parity for k in word) % 2


def monomial_action(universe: OrbitUniverse, word: Monomial) -> Fraction:
    return sum((universe.orbit(k).action for k in word), Fraction(0))


def monomial_degree(universe: OrbitUniverse, word: Monomial, n: int) -> int:
    """Integer grading when Conley-Zehnder data is available."""
    return sum(universe.orbit(k).cz() + n - 3 for k in word)


def multiply(x: CCElement, y: CCElement) -> CCElement:
    """Supercommutative product in canonical normal form."""
    if x.universe is not y.universe and x.universe.orbits != y.universe.orbits:
        raise InvalidInput("cannot multiply elements over different universes")
    out: Dict = {}
    for (w1, b1), c1 in x.terms.items():
        for (w2, b2), c2 in y.terms.items():
            word, sign = _normal_form(x.universe, list(w1) + list(w2))
            if sign == 0:
                continue
            beta = tuple(a + b for a, b in zip(b1, b2))
            key = (word, beta)
            out[key] = out.get(key, Fraction(0)) + sign * c1 * c2
            if out[key] == 0:
                del out[key]
    return CCElement(x.universe, out)


class FilteredBasis:
    """Monomials of total action below a bound, over good generators."""

    def __init__(self, universe: OrbitUniverse, bound):
        self.universe = universe
        self.bound = Fraction(bound)
        gens = sorted((o.key for o in universe.good_orbits()))
        monomials: List[Monomial] = []

        def extend(prefix: List[OrbitKey], start: int, remaining: Fraction):
            monomials.append(tuple(prefix))
            for i in range(start, len(gens)):
                orbit = universe.orbit(gens[i])
                if orbit.action >= remaining:
                    continue
                if orbit.parity == 1 and prefix and prefix[-1] == gens[i]:
                    continue
                prefix.append(gens[i])
                extend(prefix, i if orbit.parity == 0 else i + 1,
                       remaining - orbit.action)
                prefix.pop()

        extend([], 0, self.bound)
        self.monomials = sorted(monomials, key=lambda w: (len(w), w))
        self.index = {w: i for i, w in enumerate(self.monomials)}

    def __len__(self):
        return len(self.monomials)

    def parity(self, word: Monomial) -> int:
        return monomial_parity(self.universe, word)

    def action(self, word: Monomial) -> Fraction:
        return monomial_action(self.universe, word)


# --- table-driven operators ---------------------------------------------------

def _generator_image(table: CountTable, key: OrbitKey,
                     target: OrbitUniverse) -> CCElement:
    up = table.upper_universe()
    d = up.orbit(key).d
    out = CCElement.zero(target)
    for entry, value in table.entries.items():
        if entry[0] != key or value == 0:
            continue
        _, negs, beta = entry
        coeff = value / (d * multiset_stabilizer_order(negs))
        out = out + CCElement.monomial(target, negs, coeff, beta)
    return out


def differential(table: CountTable, x: CCElement) -> CCElement:
    """Odd derivation determined by a flavor-I table: acts on a generator by
    pairing with the counts over covering multiplicity and multiset
    automorphisms, extended by the Leibniz rule."""
    if table.flavor != "I":
        raise InvalidInput("the differential takes a flavor-I table")
    universe = table.upper_universe()
    out = CCElement.zero(universe)
    for (word, beta), coeff in x.terms.items():
        sign = 1
        for i, letter in enumerate(word):
            dq = _generator_image(table, letter, universe)
            if not dq.is_zero():
                prefix = CCElement(universe, {(word[:i], beta): coeff * sign})
                suffix = CCElement(universe,
                                   {(word[i + 1:], _zero_beta(universe)): Fraction(1)})
                out = out + multiply(multiply(prefix, dq), suffix)
            if universe.orbit(letter).parity:
                sign = -sign
    return out


def cobordism_map(table: CountTable, x: CCElement) -> CCElement:
    """Unital algebra map determined by a flavor-II table."""
    if table.flavor != "II":
        raise InvalidInput("the cobordism map takes a flavor-II table")
    target = table.lower_universe()
    out = CCElement.zero(target)
    for (word, beta), coeff in x.terms.items():
        term = CCElement(target, {((), beta): coeff})
        for letter in word:
            term = multiply(term, _generator_image(table, letter, target))
            if term.is_zero():
                break
        out = out + term
    return out


def homotopy_map(table: CountTable, x: CCElement) -> CCElement:
    """Odd operator determined by a flavor-III/IV table of disconnected
    counts: an entry pairs against the whole monomial of its positive ends.

    The components of an entry are matched to the letters of the canonical
    word in canonical order; the super tensor application sign and the
    normal-form reordering of the outputs account for all signs."""
    if table.flavor not in ("III", "IV"):
        raise InvalidInput("the homotopy map takes a flavor-III/IV table")
    up = table.upper_universe()
    target = table.lower_universe()
    out = CCElement.zero(target)
    for (word, beta), coeff in x.terms.items():
        for entry, value in table.entries.items():
            if value == 0:
                continue
            positives = tuple(sorted(c[0] for c in entry))
            if positives != word:
                continue
            comps = sorted(entry)
            sign = 1
            letter_par = [up.orbit(c[0]).parity for c in comps]
            for j, comp in enumerate(comps):
                comp_par = (up.orbit(comp[0]).parity
                            + sum(target.orbit(k).parity for k in comp[1])) % 2
                if comp_par and sum(letter_par[:j]) % 2:
                    sign = -sign
            term = CCElement(target, {((), beta): coeff * value * sign})
            for comp in comps:
                pos, negs, cbeta = comp
                norm = Fraction(1, up.orbit(pos).d * multiset_stabilizer_order(negs))
                term = multiply(term, CCElement.monomial(target, negs, norm, cbeta))
                if term.is_zero():
                    break
            out = out + term
    return out


# --- verification --------------------------------------------------------------

@dataclass
class Witness:
    generator: object
    monomial: Monomial
    beta: Tuple[int, ...]
    value: Fraction

    def residual_key(self):
        return (self.generator, self.monomial, self.beta)


def verify_d_squared(table: CountTable, bound) -> Optional[Witness]:
    """d.d = 0 on every generator of action below the bound, classes tracked.

    Returns None when the identity holds, else the first witness; its key
    matches a nonzero master residual."""
    universe = table.upper_universe()
    bound = Fraction(bound)
    for orbit in sorted(universe.good_orbits(), key=lambda o: o.key):
        if orbit.action >= bound:
            continue
        q = CCElement.generator(universe, orbit.key)
        dd = differential(table, differential(table, q))
        for (word, beta), value in sorted(dd.terms.items()):
            return Witness(orbit.key, word, beta, value)
    return None


def verify_chain_map(table2: CountTable, table_plus: CountTable,
                     table_minus: CountTable, bound) -> Optional[Witness]:
    """d_minus . Phi = Phi . d_plus on every generator below the bound."""
    up = table2.upper_universe()
    bound = Fraction(bound)
    for orbit in sorted(up.good_orbits(), key=lambda o: o.key):
        if orbit.action >= bound:
            continue
        q = CCElement.generator(up, orbit.key)
        lhs = differential(table_minus, cobordism_map(table2, q))
        rhs = cobordism_map(table2, differential(table_plus, q))
        defect = lhs - rhs
        for (word, beta), value in sorted(defect.terms.items()):
            return Witness(orbit.key, word, beta, value)
    return None


def verify_homotopy(table: CountTable, bound) -> Optional[Witness]:
    """Far route minus near route equals dK + Kd on every filtered monomial.

    Flavor III: Phi^1 - Phi^0 = d.K + K.d.  Flavor IV: Phi^12 Phi^01 -
    Phi^02 = d.K + K.d.  Companion tables are taken from the table itself.
    """
    if table.flavor not in ("III", "IV"):
        raise InvalidInput("verify_homotopy takes a flavor-III/IV table")
    comps = table.companions
    up = table.upper_universe()
    basis = FilteredBasis(up, bound)
    for word in basis.monomials:
        q = CCElement(up, {(word, _zero_beta(up)): Fraction(1)})
        if table.flavor == "III":
            far = cobordism_map(comps["phi1"], q)
            near = cobordism_map(comps["phi0"], q)
        else:
            far = cobordism_map(comps["phi12"], cobordism_map(comps["phi01"], q))
            near = cobordism_map(comps["phi02"], q)
        lhs = far - near
        rhs = differential(comps["minus"], homotopy_map(table, q)) + \
            homotopy_map(table, differential(comps["plus"], q))
        defect = lhs - rhs
        for (out_word, beta), value in sorted(defect.terms.items()):
            return Witness(word, out_word, beta, value)
    return None


# --- homology -------------------------------------------------------------------

@dataclass
class HomologyResult:
    dims: Tuple[int, int]              # (even, odd)
    unit_is_exact: bool
    basis_size: int
    integer_dims: Optional[Dict[int, int]] = None


def homology_below(table: CountTable, bound) -> HomologyResult:
    """Z/2-graded homology of the action-truncated complex.

    The truncation is a subcomplex because the differential strictly
    decreases action.  When Conley-Zehnder data is present the refined
    integer-graded dimensions are reported as well."""
    universe = table.upper_universe()
    witness = verify_d_squared(table, bound)
    if witness is not None:
        raise InvalidInput(f"d.d != 0 below the bound; witness {witness}")
    basis = FilteredBasis(universe, bound)
    columns: Dict[Monomial, Dict[Monomial, Fraction]] = {}
    for word in basis.monomials:
        q = CCElement(universe, {(word, _zero_beta(universe)): Fraction(1)})
        columns[word] = differential(table, q).project()

    def graded_dims(grading) -> Dict[object, int]:
        groups: Dict[object, List[Monomial]] = {}
        for word in basis.monomials:
            groups.setdefault(grading(word), []).append(word)
        dims = {}
        for g, words in groups.items():
            target_words = groups.get(_pred(g), [])
            source_words = groups.get(_succ(g), [])
            mat_out = _block(columns, words, target_words)
            mat_in = _block(columns, source_words, words)
            h = len(words) - linalg.rank(mat_out) - linalg.rank(mat_in)
            dims[g] = h
        return dims

    def _pred(g):
        return g - 1

    def _succ(g):
        return g + 1

    parity_dims_raw = {}
    groups: Dict[int, List[Monomial]] = {0: [], 1: []}
    for word in basis.monomials:
        groups[basis.parity(word)].append(word)
    for p in (0, 1):
        words = groups[p]
        mat_out = _block(columns, words, groups[1 - p])
        mat_in = _block(columns, groups[1 - p], words)
        parity_dims_raw[p] = len(words) - linalg.rank(mat_out) - linalg.rank(mat_in)

    unit_exact = False
    unit_cols = [w for w in basis.monomials if basis.parity(w) == 1]
    if unit_cols:
        mat = _block(columns, unit_cols, basis.monomials)
        target = [Fraction(0)] * len(basis.monomials)
        target[basis.index[()]] = Fraction(1)
        unit_exact = linalg.solve(mat, tuple(target)) is not None

    integer_dims = None
    if universe.n is not None and all(o.has_cz() for o in universe.good_orbits()):
        n = universe.n
        integer_dims = {g: d for g, d in graded_dims(
            lambda w: monomial_degree(universe, w, n)).items() if d}

    return HomologyResult((parity_dims_raw[0], parity_dims_raw[1]), unit_exact,
                          len(basis), integer_dims)


def _block(columns, source_words, target_words) -> linalg.Matrix:
    index = {w: i for i, w in enumerate(target_words)}
    rows = len(target_words)
    out = []
    for i in range(rows):
        out.append([Fraction(0)] * len(source_words))
    for j, w in enumerate(source_words):
        for tw, val in columns[w].items():
            if tw in index:
                out[index[tw]][j] = val
    return tuple(tuple(r) for r in out)


# --- filtered isomorphism check -------------------------------------------------

def trivial_cobordism_check(basis: FilteredBasis, matrix: Dict[Tuple[Monomial, Monomial], Fraction]):
    """Check that a filtered endomorphism is an isomorphism and invert it.

    ``matrix[(target, source)]`` is the coefficient of the target monomial in
    the image of the source.  The map must respect the (action, length)
    filtration: entries need action(target) < action(source), or equal
    action with length(target) >= length(source).  Returns
    (True, inverse dict) or (False, reason).  Raises NotFiltered when an
    entry violates the filtration."""
    universe = basis.universe
    entries: Dict[Tuple[Monomial, Monomial], Fraction] = {}
    for (tgt, src), value in matrix.items():
        value = Fraction(value)
        if value == 0:
            continue
        tgt, src = tuple(tgt), tuple(src)
        if tgt not in basis.index or src not in basis.index:
            raise InvalidInput("matrix entry outside the filtered basis")
        at, as_ = basis.action(tgt), basis.action(src)
        if at > as_ or (at == as_ and len(tgt) < len(src)):
            raise NotFiltered("entry violates the action filtration",
                              witness=(tgt, src))
        entries[(tgt, src)] = value

    def level(word):
        return (basis.action(word), -len(word))

    order = sorted(basis.monomials, key=lambda w: (level(w), w))
    levels: List[Tuple[object, List[Monomial]]] = []
    for w in order:
        if levels and levels[-1][0] == level(w):
            levels[-1][1].append(w)
        else:
            levels.append((level(w), [w]))

    # invert the diagonal blocks once
    block_inverse: Dict[object, Dict[Tuple[Monomial, Monomial], Fraction]] = {}
    for lv, words in levels:
        block = tuple(tuple(entries.get((t, s), Fraction(0)) for s in words)
                      for t in words)
        inv = linalg.solve_matrix(block, linalg.identity(len(words)))
        if inv is None:
            return False, ("singular diagonal block", tuple(words))
        block_inverse[lv] = {(t, s): inv[i][j]
                             for i, t in enumerate(words)
                             for j, s in enumerate(words) if inv[i][j]}

    # columns of the inverse, one source at a time, level by descending level
    inverse: Dict[Tuple[Monomial, Monomial], Fraction] = {}
    by_source: Dict[Monomial, List[Tuple[Monomial, Fraction]]] = {}
    for (t, s), value in entries.items():
        by_source.setdefault(s, []).append((t, value))
    for _, src_words in levels:
        for s in src_words:
            x: Dict[Monomial, Fraction] = {}
            slevel = level(s)
            for lv, words in reversed(levels):
                if lv > slevel:
                    continue
                rhs = {}
                for t in words:
                    val = Fraction(1) if t == s else Fraction(0)
                    rhs[t] = val
                for u, xu in x.items():
                    for (t2, a) in by_source.get(u, []):
                        if level(t2) == lv:
                            rhs[t2] = rhs.get(t2, Fraction(0)) - a * xu
                binv = block_inverse[lv]
                for t in words:
                    val = sum((binv.get((t, u), Fraction(0)) * rhs[u]
                               for u in words), Fraction(0))
                    if val:
                        x[t] = val
            for t, val in x.items():
                inverse[(t, s)] = val
    return True, inverse
