"""Virtual-count tables, their validation, master-equation residuals, and
the bijection with strata-module maps.

Table values live in the trivialized orientation lines determined by the
chosen generator of every good orbit, with negative ends stored in canonical
(sorted) order; permuting the ends changes the value by the Koszul sign, so
canonical storage is lossless.

Residuals follow the engine's fixed normalization: the flavor-I residual of
a key equals the coefficient of that key in the square of the differential
applied to the positive generator, with homotopy classes tracked.  The
flavor II/III/IV residuals are the matrix entries of the chain-map and
chain-homotopy defects, computed here by direct convolution of tables (the
dga module recomputes the same identities by operator composition).
"""

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import InvalidInput, MissingOrbit, NotAChainMap
from .graded_linear import koszul_sign
from .orbits import OrbitUniverse, ReebOrbit, is_bad
from .strata import EffectiveSet, StrataPoset, Triple, merge_triples
from . import trees as trees_mod

OrbitKey = Tuple[str, int]
ConnKey = Triple  # (positive orbit, sorted negative orbit multiset, beta)
SetKey = Tuple[ConnKey, ...]  # sorted multiset of connected triples


def multiset_stabilizer_order(keys: Sequence) -> int:
    """|Aut| of a decorated multiset: product of multiplicity factorials."""
    counts: Dict[object, int] = {}
    for k in keys:
        counts[k] = counts.get(k, 0) + 1
    out = 1
    for m in counts.values():
        f = 1
        for i in range(2, m + 1):
            f *= i
        out *= f
    return out


def norm_conn_key(key) -> ConnKey:
    pos, negs, beta = key
    return (tuple(pos), tuple(sorted(tuple(k) for k in negs)), tuple(int(b) for b in beta))


def norm_set_key(key) -> SetKey:
    return tuple(sorted(norm_conn_key(k) for k in key))


def _word_parities(universe: OrbitUniverse, word) -> List[int]:
    return [universe.orbit(k).parity for k in word]


def _sort_word(universe, word, parities=None):
    """Canonically sort a word of orbit keys; returns (tuple, sign).

    Returns sign 0 when the sorted word repeats an odd orbit (the monomial
    vanishes in the supercommutative algebra)."""
    if parities is None:
        parities = _word_parities(universe, word)
    order = sorted(range(len(word)), key=lambda i: (word[i], i))
    sign = koszul_sign(order, parities)
    out = tuple(word[i] for i in order)
    for i in range(len(out) - 1):
        if out[i] == out[i + 1] and universe.orbit(out[i]).parity == 1:
            return out, 0
    return out, sign


class CountTable:
    """Finite table of virtual counts for one flavor.

    ``universes`` maps level symbols to orbit universes: {None: u} for
    flavor I, {0: positive end, 1: negative end} for flavors II and III,
    {0: top, 1: middle, 2: bottom} for flavor IV.  ``companions`` holds the
    tables of the adjacent structures entering this flavor's master
    equation (see ``REQUIRED_COMPANIONS``).
    """

    REQUIRED_COMPANIONS = {
        "I": (),
        "II": ("plus", "minus"),
        "III": ("plus", "minus", "phi0", "phi1"),
        "IV": ("plus", "minus", "phi01", "phi12", "phi02"),
    }

    def __init__(self, flavor: str, universes: Mapping, entries: Mapping,
                 companions: Optional[Mapping[str, "CountTable"]] = None):
        if flavor not in ("I", "II", "III", "IV"):
            raise InvalidInput(f"unknown flavor {flavor}")
        self.flavor = flavor
        self.universes = dict(universes)
        self.companions = dict(companions or {})
        self.entries: Dict[object, Fraction] = {}
        for key, value in entries.items():
            nk = self.normalize_key(key)
            if nk in self.entries:
                raise InvalidInput(f"duplicate table key {nk}")
            self.entries[nk] = Fraction(value)

    # universes by role
    def upper_universe(self) -> OrbitUniverse:
        if self.flavor == "I":
            return self.universes[None]
        return self.universes[0]

    def lower_universe(self) -> OrbitUniverse:
        if self.flavor == "I":
            return self.universes[None]
        return self.universes[2 if self.flavor == "IV" else 1]

    def normalize_key(self, key):
        if self.flavor in ("I", "II"):
            return norm_conn_key(key)
        return norm_set_key(key)

    def value(self, key) -> Fraction:
        return self.entries.get(self.normalize_key(key), Fraction(0))

    def declared_keys(self):
        return list(self.entries)

    def support(self):
        return [k for k, v in self.entries.items() if v != 0]

    def entries_by_positive(self) -> Dict[OrbitKey, List[Tuple[ConnKey, Fraction]]]:
        out: Dict[OrbitKey, List[Tuple[ConnKey, Fraction]]] = {}
        if self.flavor in ("I", "II"):
            for key, value in self.entries.items():
                out.setdefault(key[0], []).append((key, value))
        return out

    def connected_mu(self, key: ConnKey, n: int) -> int:
        pos, negs, _ = key
        up = self.upper_universe()
        lo = self.lower_universe()
        total = up.orbit(pos).cz() + n - 3
        for k in negs:
            total -= lo.orbit(k).cz() + n - 3
        return total

    def key_mu(self, key, n: int) -> int:
        if self.flavor in ("I", "II"):
            return self.connected_mu(key, n)
        return sum(self.connected_mu(c, n) for c in key)

    def effective_set(self) -> EffectiveSet:
        """Support closure used as the strata effectivity oracle (flavor I)."""
        if self.flavor != "I":
            raise InvalidInput("effectivity oracle is defined for flavor-I tables")
        return EffectiveSet(self.declared_keys())


def validate_counts(table: CountTable, universe=None) -> List[str]:
    """Check the count-table invariants; returns violation descriptions.

    Raises MissingOrbit when a key references an undeclared orbit.
    """
    report: List[str] = []
    up = table.upper_universe()
    lo = table.lower_universe()

    def conn_check(key: ConnKey, value: Fraction, tag: str):
        pos, negs, beta = key
        pos_orbit = up.orbit(pos)  # raises MissingOrbit
        neg_orbits = [lo.orbit(k) for k in negs]
        if value != 0:
            if is_bad(pos_orbit) or any(is_bad(o) for o in neg_orbits):
                report.append(f"{tag}: nonzero count on a bad orbit")
            odd_seen = set()
            for o in neg_orbits:
                if o.parity == 1:
                    if o.key in odd_seen:
                        report.append(f"{tag}: repeated odd negative end forces zero")
                        break
                    odd_seen.add(o.key)
        neg_action = sum((o.action for o in neg_orbits), Fraction(0))
        if table.flavor == "I":
            if neg_action >= pos_orbit.action:
                report.append(f"{tag}: action does not strictly decrease")
        else:
            if neg_action > pos_orbit.action:
                report.append(f"{tag}: action increases across the cobordism")

    n = up.n
    for key, value in table.entries.items():
        tag = f"key {key}"
        conn_keys = [key] if table.flavor in ("I", "II") else list(key)
        for ck in conn_keys:
            conn_check(ck, value, tag)
        if value != 0:
            want = {"I": 1, "II": 0, "III": -1, "IV": -1}[table.flavor]
            have_cz = all(
                up.orbit(ck[0]).has_cz() and all(lo.orbit(k).has_cz() for k in ck[1])
                for ck in conn_keys)
            if n is not None and have_cz:
                if table.key_mu(key, n) != want:
                    report.append(f"{tag}: nonzero count with index {table.key_mu(key, n)}"
                                  f" != {want}")
            else:
                parity = 0
                for ck in conn_keys:
                    parity += up.orbit(ck[0]).parity
                    parity += sum(lo.orbit(k).parity for k in ck[1])
                if parity % 2 != want % 2:
                    report.append(f"{tag}: nonzero count with wrong index parity")
    return report


# --- expansion helpers (table convolution route) -----------------------------

def _generator_expansion(table: CountTable, pos: OrbitKey):
    """[(coefficient, output word (canonical), beta)] for d or Phi on one
    generator: value / (d_gamma * |Aut(Gamma, beta)|)."""
    out = []
    up = table.upper_universe()
    d = up.orbit(pos).d
    for key, value in table.entries.items():
        if table.flavor not in ("I", "II"):
            raise InvalidInput("generator expansion needs a connected-key table")
        if key[0] != pos or value == 0:
            continue
        _, negs, beta = key
        coeff = value / (d * multiset_stabilizer_order(negs))
        out.append((coeff, negs, beta))
    return out


def _derivation_terms(table: CountTable, word, universe_letters: OrbitUniverse):
    """Leibniz expansion of an odd table-operator on a canonical word.

    Yields (coefficient, new word canonical, beta).  Outputs that repeat an
    odd orbit are dropped (they vanish in the algebra).
    """
    out_universe = table.lower_universe()
    parities = _word_parities(universe_letters, word)
    for i, letter in enumerate(word):
        sign = -1 if sum(parities[:i]) % 2 else 1
        for coeff, block, beta in _generator_expansion(table, letter):
            new_word = list(word[:i]) + list(block) + list(word[i + 1:])
            new_par = parities[:i] + _word_parities(out_universe, block) + parities[i + 1:]
            sorted_word, ssign = _sort_word_mixed(new_word, new_par)
            if ssign == 0:
                continue
            yield (coeff * sign * ssign, sorted_word, beta)


def _sort_word_mixed(word, parities):
    order = sorted(range(len(word)), key=lambda i: (word[i], i))
    sign = koszul_sign(order, parities)
    out = tuple(word[i] for i in order)
    pars = [parities[i] for i in order]
    for i in range(len(out) - 1):
        if out[i] == out[i + 1] and pars[i] == 1:
            return out, 0
    return out, sign


def _algebra_map_terms(table: CountTable, word):
    """Multiplicative expansion of an even table-operator on a word.

    Yields (coefficient, output word canonical, total beta)."""
    per_letter = [(letter, _generator_expansion(table, letter)) for letter in word]
    out_universe = table.lower_universe()
    for combo in itertools.product(*(opts for _, opts in per_letter)):
        coeff = Fraction(1)
        blocks = []
        beta_total = None
        for c, block, beta in combo:
            coeff *= c
            blocks.extend(block)
            beta_total = beta if beta_total is None else \
                tuple(a + b for a, b in zip(beta_total, beta))
        if coeff == 0:
            continue
        pars = _word_parities(out_universe, blocks)
        sorted_word, ssign = _sort_word_mixed(list(blocks), pars)
        if ssign == 0:
            continue
        yield (coeff * ssign, sorted_word, beta_total if beta_total is not None else ())


def _mu_parity(universe_up, universe_lo, conn: ConnKey) -> int:
    p = universe_up.orbit(conn[0]).parity
    p += sum(universe_lo.orbit(k).parity for k in conn[1])
    return p % 2


def _homotopy_terms(table: CountTable, word):
    """Pairing of a disconnected-count table against a full monomial.

    Components are matched to the letters of the canonical word in canonical
    order; the sign is the super tensor application sign times the sign of
    sorting the concatenated outputs.  Yields (coefficient, word, beta)."""
    up = table.upper_universe()
    lo = table.lower_universe()
    for key, value in table.entries.items():
        if value == 0:
            continue
        positives = tuple(c[0] for c in key)
        if tuple(sorted(positives)) != tuple(word):
            continue
        # canonical matching: both sorted by positive orbit
        comps = sorted(key, key=lambda c: (c[0], c[1], c[2]))
        sign = 1
        letter_parities = [up.orbit(c[0]).parity for c in comps]
        comp_parities = [_mu_parity(up, lo, c) for c in comps]
        # (k_1 x ... x k_m)(a_1 x ... x a_m) sign: k_j crosses a_1..a_{j-1}
        for j in range(len(comps)):
            if comp_parities[j] % 2 and sum(letter_parities[:j]) % 2:
                sign = -sign
        coeff = Fraction(value)
        blocks = []
        beta_total = None
        for c in comps:
            pos, negs, beta = c
            coeff /= up.orbit(pos).d * multiset_stabilizer_order(negs)
            blocks.extend(negs)
            beta_total = beta if beta_total is None else \
                tuple(a + b for a, b in zip(beta_total, beta))
        pars = _word_parities(lo, blocks)
        sorted_word, ssign = _sort_word_mixed(list(blocks), pars)
        if ssign == 0:
            continue
        yield (coeff * sign * ssign, sorted_word,
               beta_total if beta_total is not None else ())


def _accumulate(acc: Dict, coeff: Fraction, word, beta):
    key = (tuple(word), tuple(beta))
    acc[key] = acc.get(key, Fraction(0)) + coeff
    if acc[key] == 0:
        del acc[key]


# --- master residuals --------------------------------------------------------

def master_residual(table: CountTable, key) -> Fraction:
    """Residual of one master-equation key; zero for a consistent table.

    Flavor I: coefficient of the key in d(d(positive generator)), classes
    tracked.  Flavor II: coefficient of the chain-map defect d.Phi - Phi.d.
    Flavors III/IV: coefficient of the homotopy defect between the two
    cobordism routes (keys are reduced to their matrix entry: positive word,
    output word, total class)."""
    if table.flavor == "I":
        return _residual_I(table, norm_conn_key(key))
    if table.flavor == "II":
        return _residual_II(table, norm_conn_key(key))
    return _residual_homotopy(table, key)


def _require_companions(table: CountTable):
    for name in CountTable.REQUIRED_COMPANIONS[table.flavor]:
        if name not in table.companions:
            raise InvalidInput(f"flavor-{table.flavor} table needs companion "
                               f"table '{name}'")


def _residual_I(table: CountTable, key: ConnKey) -> Fraction:
    pos, target_word, target_beta = key
    uni = table.upper_universe()
    acc: Dict = {}
    for coeff1, word1, beta1 in _generator_expansion(table, pos):
        word1, s1 = _sort_word(uni, word1)
        if s1 == 0:
            continue
        for coeff2, word2, beta2 in _derivation_terms(table, word1, uni):
            beta = tuple(a + b for a, b in zip(beta1, beta2))
            _accumulate(acc, coeff1 * s1 * coeff2, word2, beta)
    return acc.get((tuple(target_word), tuple(target_beta)), Fraction(0))


def residual_candidate_keys(table: CountTable) -> List[ConnKey]:
    """Keys reachable by composing two support entries (flavor I)."""
    if table.flavor != "I":
        raise InvalidInput("candidate keys are for flavor-I tables")
    out = set()
    support = table.support()
    for upper in support:
        for lower in support:
            if lower[0] in upper[1]:
                out.add(merge_triples(upper, lower))
    return sorted(out)


def _residual_II(table: CountTable, key: ConnKey) -> Fraction:
    _require_companions(table)
    plus = table.companions["plus"]
    minus = table.companions["minus"]
    pos, target_word, target_beta = key
    up = table.upper_universe()
    lo = table.lower_universe()
    acc: Dict = {}
    # d_minus . Phi
    for coeff1, word1, beta1 in _generator_expansion(table, pos):
        word1, s1 = _sort_word(lo, word1)
        if s1 == 0:
            continue
        for coeff2, word2, beta2 in _derivation_terms(minus, word1, lo):
            beta = tuple(a + b for a, b in zip(beta1, beta2))
            _accumulate(acc, coeff1 * s1 * coeff2, word2, beta)
    # minus Phi . d_plus
    for coeff1, word1, beta1 in _generator_expansion(plus, pos):
        word1, s1 = _sort_word(up, word1)
        if s1 == 0:
            continue
        for coeff2, word2, beta2 in _algebra_map_terms(table, word1):
            beta = tuple(a + b for a, b in zip(beta1, beta2))
            _accumulate(acc, -coeff1 * s1 * coeff2, word2, beta)
    return acc.get((tuple(target_word), tuple(target_beta)), Fraction(0))


def _homotopy_defect_entry(table: CountTable, in_word, out_word, beta) -> Fraction:
    """Matrix entry of Phi_far - Phi_near - d.K - K.d for flavors III/IV."""
    _require_companions(table)
    plus = table.companions["plus"]
    minus = table.companions["minus"]
    up = table.upper_universe()
    lo = table.lower_universe()
    acc: Dict = {}
    if table.flavor == "III":
        phi_near = [table.companions["phi0"]]
        phi_far = [table.companions["phi1"]]
    else:
        phi_near = [table.companions["phi02"]]
        phi_far = [table.companions["phi01"], table.companions["phi12"]]

    def apply_route(route, sgn):
        terms = [(Fraction(1), tuple(in_word), None)]
        for tab in route:
            new_terms = []
            for coeff, word, beta_acc in terms:
                for c2, w2, b2 in _algebra_map_terms(tab, word):
                    btot = b2 if beta_acc is None else \
                        tuple(a + b for a, b in zip(beta_acc, b2))
                    new_terms.append((coeff * c2, w2, btot))
            terms = new_terms
        for coeff, word, beta_acc in terms:
            _accumulate(acc, sgn * coeff, word,
                        beta_acc if beta_acc is not None else ())

    apply_route(phi_far, 1)
    apply_route(phi_near, -1)
    # minus d_minus . K
    for c1, w1, b1 in _homotopy_terms(table, tuple(in_word)):
        for c2, w2, b2 in _derivation_terms(minus, w1, lo):
            _accumulate(acc, -c1 * c2, w2, tuple(a + b for a, b in zip(b1, b2)))
    # minus K . d_plus
    for c1, w1, b1 in _derivation_terms(plus, tuple(in_word), up):
        for c2, w2, b2 in _homotopy_terms(table, w1):
            _accumulate(acc, -c1 * c2, w2, tuple(a + b for a, b in zip(b1, b2)))
    return acc.get((tuple(out_word), tuple(beta)), Fraction(0))


def _is_set_key(key) -> bool:
    key = tuple(key)
    if not key:
        return False
    return all(isinstance(c, (tuple, list)) and len(c) == 3
               and isinstance(c[0], (tuple, list)) and len(c[0]) == 2
               and isinstance(c[0][0], str) for c in key)


def _residual_homotopy(table: CountTable, key) -> Fraction:
    """Reduce a set-shaped key to its matrix entry and evaluate the defect."""
    if _is_set_key(key):
        skey = norm_set_key(key)
        in_word = tuple(sorted(c[0] for c in skey))
        blocks = [k for c in skey for k in c[1]]
        out_word, sgn = _sort_word(table.lower_universe(), blocks)
        if sgn == 0:
            return Fraction(0)
        betas = [c[2] for c in skey]
        beta = tuple(sum(col) for col in zip(*betas)) if betas and betas[0] else ()
        return _homotopy_defect_entry(table, in_word, out_word, beta)
    in_word, out_word, beta = key
    in_word = tuple(sorted(tuple(k) for k in in_word))
    out_word, sgn = _sort_word(table.lower_universe(), [tuple(k) for k in out_word])
    if sgn == 0:
        return Fraction(0)
    return _homotopy_defect_entry(table, in_word, out_word, tuple(beta))


# --- counts <-> strata module maps -------------------------------------------

@dataclass
class SModuleMap:
    """A map from the strata module to the constants: one rational per
    zero-virtual-dimension stratum class, determined by the product law."""

    flavor: str
    universes: Dict
    values: Dict[ConnKey, Fraction] = field(default_factory=dict)

    def one_vertex_value(self, key: ConnKey) -> Fraction:
        return self.values.get(norm_conn_key(key), Fraction(0))

    def stratum_value(self, stratum_tree) -> Fraction:
        """Value on a stratum: product of vertex counts over junction
        covering multiplicities (the concatenation law)."""
        total = Fraction(1)
        for v in stratum_tree.vertices:
            total *= self.one_vertex_value(stratum_tree.vertex_triple(v))
            if total == 0:
                return total
        for e in stratum_tree.interior_edges():
            total /= stratum_tree.orbit(e.name).d
        return total


def counts_to_module_map(table: CountTable, check_residuals: bool = True) -> SModuleMap:
    """Encode a consistent flavor-I table as a strata-module map.

    Raises NotAChainMap with a witness key when a master residual is
    nonzero (the chain-map condition for the module map)."""
    if table.flavor != "I":
        raise InvalidInput("module-map encoding is implemented for flavor-I tables")
    if check_residuals:
        for key in residual_candidate_keys(table):
            r = master_residual(table, key)
            if r != 0:
                raise NotAChainMap(f"master residual nonzero at {key}", witness=key)
    return SModuleMap(table.flavor, dict(table.universes),
                      {k: v for k, v in table.entries.items()})


def module_map_to_counts(m: SModuleMap) -> CountTable:
    """Restrict a module map to one-vertex strata: the count table."""
    return CountTable(m.flavor, m.universes, dict(m.values))
