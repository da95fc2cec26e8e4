"""Strata modules, homotopy colimits, cofibrancy, and lifting at finite scale.

Diagrams are indexed by finite posets (the slice categories materialize as
posets of isomorphism classes; automorphism orders enter the strata complex
as rational weights).  The homotopy colimit is chains on the nerve with a
coefficient system depending only on the total composition; degenerate
simplices never arise because chains consist of strictly increasing steps.
"""

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import linalg
from . import strata as strata_mod
from . import trees as trees_mod
from .errors import DiagramViolation, InvalidInput, InvalidSubposet
from .graded_linear import (ChainComplex, ChainMap, GradedSpace,
                            homology_dimensions, mapping_cylinder,
                            tensor_product, zero_complex)

ZERO = Fraction(0)
ONE = Fraction(1)


class FiniteCategory:
    """A finite category presented by objects, hom sets, and a composition
    table; associativity and identity laws are checked on construction."""

    def __init__(self, objects, homs, compose, identities):
        self.objects = list(objects)
        self.homs = {k: list(v) for k, v in homs.items()}
        self.compose_table = dict(compose)
        self.identities = dict(identities)
        self._check()

    @staticmethod
    def from_poset(objects, leq) -> "FiniteCategory":
        """The category of a partial order: one arrow x -> y when leq(x, y)."""
        objects = list(objects)
        homs = {}
        compose = {}
        identities = {}
        for x in objects:
            for y in objects:
                if leq(x, y):
                    homs[(x, y)] = [(x, y)]
        for x in objects:
            identities[x] = (x, x)
        for x in objects:
            for y in objects:
                if (x, y) not in homs:
                    continue
                for z in objects:
                    if (y, z) in homs:
                        compose[((x, y), (y, z))] = (x, z)
        return FiniteCategory(objects, homs, compose, identities)

    def _check(self):
        for x in self.objects:
            if x not in self.identities:
                raise InvalidInput(f"missing identity at {x}")
            if self.identities[x] not in self.homs.get((x, x), []):
                raise InvalidInput(f"identity of {x} is not an endomorphism")
        for (x, y), fs in self.homs.items():
            for f in fs:
                idx, idy = self.identities[x], self.identities[y]
                if self.compose_table.get((idx, f), f) != f or \
                        self.compose_table.get((f, idy), f) != f:
                    raise InvalidInput("identity law fails")
        for ((f, g), fg) in self.compose_table.items():
            pass
        # associativity on all composable triples
        for (x, y) in self.homs:
            for f in self.homs[(x, y)]:
                for (y2, z) in self.homs:
                    if y2 != y:
                        continue
                    for g in self.homs[(y2, z)]:
                        fg = self.compose_table.get((f, g))
                        if fg is None:
                            raise InvalidInput("missing composite")
                        for (z2, w) in self.homs:
                            if z2 != z:
                                continue
                            for h in self.homs[(z2, w)]:
                                gh = self.compose_table.get((g, h))
                                if self.compose_table.get((fg, h)) != \
                                        self.compose_table.get((f, gh)):
                                    raise InvalidInput("associativity fails")

    def hom(self, x, y):
        return self.homs.get((x, y), [])

    def is_poset(self) -> bool:
        for (x, y), fs in self.homs.items():
            if len(fs) > 1:
                return False
            if x != y and self.homs.get((y, x)):
                return False
        return True

    def leq(self, x, y) -> bool:
        return bool(self.homs.get((x, y)))

    def nondegenerate_chains(self) -> List[Tuple]:
        """Strictly increasing chains (x_0 < x_1 < ... < x_p), all lengths."""
        arrows = {(x, y) for (x, y), fs in self.homs.items() if fs and x != y}
        chains = [(x,) for x in self.objects]
        out = list(chains)
        frontier = chains
        while frontier:
            new = []
            for c in frontier:
                for y in self.objects:
                    if (c[-1], y) in arrows:
                        new.append(c + (y,))
            out.extend(new)
            frontier = new
        return out

    def has_final_object(self) -> Optional[object]:
        for y in self.objects:
            if all(len(self.hom(x, y)) == 1 for x in self.objects):
                return y
        return None


class HomotopyDiagram:
    """Chain-complex coefficients on a finite poset category, depending only
    on the total composition.

    ``complexes[(x, y)]`` is the value on any chain from x to y (x <= y);
    ``src_drop[(x, y, z)]`` maps the value on x..z to the value on y..z and
    ``tgt_drop[(x, y, z)]`` to the value on x..y.  Functoriality of both
    families is checked on all composable chains of length three.
    """

    def __init__(self, category: FiniteCategory, complexes, src_drop, tgt_drop,
                 check: bool = True):
        if not category.is_poset():
            raise DiagramViolation("homotopy diagrams are supported over posets")
        self.category = category
        self.complexes = dict(complexes)
        self.src_drop = dict(src_drop)
        self.tgt_drop = dict(tgt_drop)
        if check:
            self._check()

    @staticmethod
    def from_functor(category: FiniteCategory, values, arrows) -> "HomotopyDiagram":
        """Coefficients A(x..y) := F(x), pushforwards along the source.

        ``values`` maps object -> ChainComplex; ``arrows`` maps (x, y) with
        x < y to a ChainMap F(x) -> F(y)."""
        complexes = {}
        src_drop = {}
        tgt_drop = {}
        objs = category.objects
        for x in objs:
            for y in objs:
                if category.leq(x, y):
                    complexes[(x, y)] = values[x]
        for x in objs:
            for y in objs:
                for z in objs:
                    if x != y and category.leq(x, y) and category.leq(y, z):
                        src_drop[(x, y, z)] = arrows[(x, y)]
                    if y != z and category.leq(x, y) and category.leq(y, z):
                        tgt_drop[(x, y, z)] = ChainMap.identity(values[x])
        return HomotopyDiagram(category, complexes, src_drop, tgt_drop)

    @staticmethod
    def constant(category: FiniteCategory, value: ChainComplex) -> "HomotopyDiagram":
        values = {x: value for x in category.objects}
        arrows = {}
        for x in category.objects:
            for y in category.objects:
                if x != y and category.leq(x, y):
                    arrows[(x, y)] = ChainMap.identity(value)
        return HomotopyDiagram.from_functor(category, values, arrows)

    def value(self, x, y) -> ChainComplex:
        return self.complexes[(x, y)]

    def drop_source(self, x, y, z) -> ChainMap:
        if x == y:
            return ChainMap.identity(self.complexes[(x, z)])
        return self.src_drop[(x, y, z)]

    def drop_target(self, x, y, z) -> ChainMap:
        if y == z:
            return ChainMap.identity(self.complexes[(x, y)])
        return self.tgt_drop[(x, y, z)]

    def _check(self):
        cat = self.category
        for (x, y) in list(self.complexes):
            if not cat.leq(x, y):
                raise DiagramViolation(f"coefficient on a non-arrow {(x, y)}")
        for x in cat.objects:
            for y in cat.objects:
                if not cat.leq(x, y):
                    continue
                for z in cat.objects:
                    if not cat.leq(y, z):
                        continue
                    if x != y:
                        m = self.drop_source(x, y, z)
                        if m.source.spaces != self.complexes[(x, z)].spaces or \
                                m.target.spaces != self.complexes[(y, z)].spaces:
                            raise DiagramViolation("source drop has wrong ends")
                    if y != z:
                        m = self.drop_target(x, y, z)
                        if m.source.spaces != self.complexes[(x, z)].spaces or \
                                m.target.spaces != self.complexes[(x, y)].spaces:
                            raise DiagramViolation("target drop has wrong ends")
        # functoriality on chains of length three
        for chain in self.category.nondegenerate_chains():
            if len(chain) != 3:
                continue
            x, y, z = chain
            for w in self.category.objects:
                if self.category.leq(z, w):
                    a = self.drop_source(y, z, w).compose(self.drop_source(x, y, w))
                    if a != self.drop_source(x, z, w):
                        raise DiagramViolation("source drops do not compose")
                if self.category.leq(w, x):
                    a = self.drop_target(w, x, y).compose(self.drop_target(w, y, z))
                    if a != self.drop_target(w, x, z):
                        raise DiagramViolation("target drops do not compose")
            # mixed square: dropping source and target commutes
            m1 = self.drop_source(x, y, y).compose(self.drop_target(x, y, z))
            m2 = self.drop_target(y, y, z).compose(self.drop_source(x, y, z))
            if m1 != m2:
                raise DiagramViolation("source and target drops do not commute")


def hocolim(diagram: HomotopyDiagram):
    """Chains on the nerve with the given coefficients.

    Returns (complex, basis) where basis lists (chain, degree, index)
    labels in order of the complex's graded bases."""
    cat = diagram.category
    chains = [c for c in cat.nondegenerate_chains()]
    entries: Dict[int, List[Tuple[Tuple, int, int]]] = {}
    for chain in chains:
        p = len(chain) - 1
        value = diagram.value(chain[0], chain[-1])
        for k in value.degrees():
            for i in range(value.dim(k)):
                entries.setdefault(k + p, []).append((chain, k, i))
    index = {}
    spaces = {}
    for deg, items in entries.items():
        labels = []
        for pos, (chain, k, i) in enumerate(items):
            index[(chain, k, i)] = (deg, pos)
            parity = deg % 2
            labels.append(((chain, k, i), parity, ZERO))
        spaces[deg] = GradedSpace(tuple(labels))
    diff: Dict[int, List[List[Fraction]]] = {}
    for deg, items in entries.items():
        rows = len(entries.get(deg - 1, []))
        if rows == 0:
            continue
        tgt = {lab: i for i, lab in enumerate(entries[deg - 1])}
        mat = [[ZERO] * len(items) for _ in range(rows)]
        for j, (chain, k, i) in enumerate(items):
            p = len(chain) - 1
            value = diagram.value(chain[0], chain[-1])
            # internal differential
            d = value.d(k)
            for r in range(value.dim(k - 1)):
                if d[r][i]:
                    mat[tgt[(chain, k - 1, r)]][j] += d[r][i]
            # nerve faces, with the Koszul sign of passing the coefficient
            sign = -ONE if k % 2 else ONE
            for face in range(p + 1):
                face_sign = sign * (ONE if face % 2 == 0 else -ONE)
                new_chain = chain[:face] + chain[face + 1:]
                if len(new_chain) == 0:
                    continue
                if face == 0:
                    fmap = diagram.drop_source(chain[0], chain[1], chain[-1])
                elif face == p:
                    fmap = diagram.drop_target(chain[0], chain[-2], chain[-1])
                else:
                    fmap = None
                if p == 0:
                    continue
                if fmap is None:
                    mat[tgt[(new_chain, k, i)]][j] += face_sign
                else:
                    col = [fmap.f(k)[r][i] for r in range(fmap.target.dim(k))]
                    for r, val in enumerate(col):
                        if val:
                            mat[tgt[(new_chain, k, r)]][j] += face_sign * val
        diff[deg] = tuple(tuple(row) for row in mat)
    complex_ = ChainComplex(spaces, diff)
    return complex_, index


# --- strata complexes ---------------------------------------------------------

def qs_complex(poset: strata_mod.StrataPoset, n: Optional[int] = None):
    """The strata module evaluated at the base: one line per stratum class
    with the automorphism-weighted boundary differential.

    Returns (complex, labels) with labels mapping stratum keys to (degree,
    index).  Lines killed by an orientation-reversing automorphism are
    omitted.  Degrees are virtual dimensions when Conley-Zehnder data is
    available (pass n), else minus the codimension."""
    keys = [k for k in poset.keys() if not poset.strata[k].orientation_killed]

    def degree(key) -> int:
        st = poset.strata[key]
        if n is not None:
            return trees_mod.vdim(st.tree, n)
        return -st.codim

    entries: Dict[int, List] = {}
    for key in sorted(keys, key=repr):
        entries.setdefault(degree(key), []).append(key)
    labels = {}
    spaces = {}
    for deg, ks in entries.items():
        items = []
        for pos, key in enumerate(ks):
            labels[key] = (deg, pos)
            items.append(((key,), deg % 2, ZERO))
        spaces[deg] = GradedSpace(tuple(items))

    # boundary coefficients: for a codimension-one degeneration T' -> T''
    # sum over contractible edges of T'' landing on T', with the stabilizer
    # weight and the word-calculus sign
    diff: Dict[int, List[List[Fraction]]] = {}
    aut_over = {}
    autos = {}
    for key in keys:
        tree = poset.strata[key].tree
        autos[key] = strata_mod.enumerate_automorphisms_over_base(tree)
        aut_over[key] = len(autos[key])
    for deg, ks in entries.items():
        rows_keys = entries.get(deg - 1, [])
        if not rows_keys:
            continue
        row_index = {k: i for i, k in enumerate(rows_keys)}
        mat = [[ZERO] * len(ks) for _ in rows_keys]
        for j, src_key in enumerate(ks):
            # sources of the differential are shallower strata; their
            # boundaries are the strata with one more vertex
            for deep_key in rows_keys:
                deep = poset.strata[deep_key]
                total = ZERO
                for e in deep.tree.interior_edges():
                    mor = trees_mod.contract(deep.tree, [e.name])
                    canon, _, _ = trees_mod.canonical_relabel(mor.target)
                    if trees_mod.canonical_key(canon) != src_key:
                        continue
                    stab = sum(1 for (vm, em) in autos[deep_key]
                               if em.get(e.name) == e.name)
                    sign = strata_mod.contraction_sign(deep.tree, e.name)
                    total += Fraction(sign * stab, aut_over[src_key])
                if total:
                    mat[row_index[deep_key]][j] = total
        diff[deg] = tuple(tuple(row) for row in mat)
    return ChainComplex(spaces, diff), labels


def module_map_defect(poset: strata_mod.StrataPoset, complex_: ChainComplex,
                      labels, values) -> Dict:
    """Evaluate a strata-module map against the boundary: for every stratum
    whose boundary strata carry values, the weighted sum that must vanish.

    ``values`` maps stratum keys to rationals (zero where undefined)."""
    out = {}
    for key, (deg, pos) in labels.items():
        d = complex_.d(deg)
        if not d:
            continue
        total = ZERO
        for r in range(complex_.dim(deg - 1)):
            coeff = d[r][pos]
            if coeff:
                target_key = complex_.spaces[deg - 1].basis[r][0][0]
                total += coeff * values.get(target_key, ZERO)
        if total or any(d[r][pos] for r in range(complex_.dim(deg - 1))):
            out[key] = total
    return out


# --- strata module instances ---------------------------------------------------

@dataclass
class Decomposition:
    """A declared concatenation: factor complexes, the gluing map into the
    value at the glued object, and the junction automorphism order."""

    factors: Tuple[ChainComplex, ...]
    target_key: object
    map_to_target: ChainMap      # from the tensor product of the factors
    junction_order: int = 1


class SModuleInstance:
    """A functor from a finite poset to chain complexes, with optional
    declared concatenation data.

    ``poset`` is a FiniteCategory poset; ``complexes`` maps objects to
    values; ``maps`` holds a ChainMap for every strict pair x < y and must
    commute on composable pairs (checked)."""

    def __init__(self, poset: FiniteCategory, complexes, maps,
                 decompositions: Sequence[Decomposition] = (), check: bool = True):
        self.poset = poset
        self.complexes = dict(complexes)
        self.maps = dict(maps)
        self.decompositions = list(decompositions)
        if check:
            self._check()

    def value(self, x) -> ChainComplex:
        return self.complexes[x]

    def arrow(self, x, y) -> ChainMap:
        if x == y:
            return ChainMap.identity(self.complexes[x])
        return self.maps[(x, y)]

    def _check(self):
        if not self.poset.is_poset():
            raise InvalidInput("instance index must be a poset")
        for x in self.poset.objects:
            if x not in self.complexes:
                raise InvalidInput(f"missing value at {x}")
        for x in self.poset.objects:
            for y in self.poset.objects:
                if x != y and self.poset.leq(x, y) and (x, y) not in self.maps:
                    raise InvalidInput(f"missing structure map {x} -> {y}")
        for chain in self.poset.nondegenerate_chains():
            if len(chain) != 3:
                continue
            x, y, z = chain
            if self.arrow(y, z).compose(self.arrow(x, y)) != self.arrow(x, z):
                raise InvalidInput(f"functoriality fails on {chain}")

    def sub_objects(self, predicate):
        return [x for x in self.poset.objects if predicate(x)]

    def restrict(self, subset) -> "SModuleInstance":
        subset = set(subset)
        cat = FiniteCategory.from_poset(sorted(subset, key=repr),
                                        lambda a, b: self.poset.leq(a, b))
        complexes = {x: self.complexes[x] for x in subset}
        maps = {(x, y): m for (x, y), m in self.maps.items()
                if x in subset and y in subset}
        return SModuleInstance(cat, complexes, maps, check=False)


def poset_colimit(instance: SModuleInstance, subset=None):
    """Colimit of the diagram over a (sub)poset.

    Returns (complex, injections) where injections[x] is the ChainMap from
    the value at x into the colimit."""
    objects = sorted(subset if subset is not None else instance.poset.objects,
                     key=repr)
    offsets: Dict[object, Dict[int, int]] = {}
    total_dim: Dict[int, int] = {}
    degrees: Set[int] = set()
    for x in objects:
        for k in instance.value(x).degrees():
            degrees.add(k)
    for k in sorted(degrees):
        pos = 0
        for x in objects:
            offsets.setdefault(x, {})[k] = pos
            pos += instance.value(x).dim(k)
        total_dim[k] = pos

    # relations from the arrows inside the subposet
    relations: Dict[int, List[List[Fraction]]] = {k: [] for k in degrees}
    for x in objects:
        for y in objects:
            if x == y or not instance.poset.leq(x, y):
                continue
            m = instance.arrow(x, y)
            for k in instance.value(x).degrees():
                for i in range(instance.value(x).dim(k)):
                    vec = [ZERO] * total_dim[k]
                    vec[offsets[x][k] + i] += ONE
                    col = m.f(k)
                    for r in range(instance.value(y).dim(k)):
                        if col[r][i]:
                            vec[offsets[y][k] + r] -= col[r][i]
                    relations[k].append(vec)

    # quotient coordinates: non-pivot columns of the relation row space
    proj: Dict[int, linalg.Matrix] = {}
    basis_of: Dict[int, List[int]] = {}
    for k in sorted(degrees):
        nd = total_dim[k]
        if relations[k]:
            r, pivots = linalg.rref(tuple(tuple(v) for v in relations[k]))
        else:
            r, pivots = (), ()
        pivset = set(pivots)
        free = [c for c in range(nd) if c not in pivset]
        basis_of[k] = free
        # projection: eliminate pivot coordinates using the relations
        rows = []
        for fidx, fcol in enumerate(free):
            row = [ZERO] * nd
            row[fcol] = ONE
            rows.append(row)
        # reduce pivot columns: pivot column c with relation row i expresses
        # e_c = -sum over free of r[i][f] e_f (from the relation = 0)
        for i, c in enumerate(pivots):
            for fidx, fcol in enumerate(free):
                if r[i][fcol]:
                    rows[fidx][c] = -r[i][fcol]
        proj[k] = tuple(tuple(row) for row in rows)

    # differential on the quotient
    spaces = {}
    for k in sorted(degrees):
        if basis_of[k]:
            spaces[k] = GradedSpace.make(
                [(("colim", k, i), k % 2) for i in range(len(basis_of[k]))])
    diff = {}
    for k in sorted(degrees):
        if not basis_of.get(k) or not basis_of.get(k - 1):
            continue
        cols = []
        for fcol in basis_of[k]:
            # locate the object and index of the coordinate
            vec = [ZERO] * total_dim.get(k - 1, 0)
            for x in objects:
                off = offsets[x][k]
                dim = instance.value(x).dim(k)
                if off <= fcol < off + dim:
                    i = fcol - off
                    d = instance.value(x).d(k)
                    for r in range(instance.value(x).dim(k - 1)):
                        if d[r][i]:
                            vec[offsets[x][k - 1] + r] += d[r][i]
                    break
            cols.append(linalg.mat_vec(proj[k - 1], tuple(vec)))
        diff[k] = linalg.column_stack(cols)
    colim = ChainComplex(spaces, diff)

    injections = {}
    for x in objects:
        comps = {}
        for k in instance.value(x).degrees():
            if not basis_of.get(k):
                continue
            cols = []
            for i in range(instance.value(x).dim(k)):
                vec = [ZERO] * total_dim[k]
                vec[offsets[x][k] + i] = ONE
                cols.append(linalg.mat_vec(proj[k], tuple(vec)))
            comps[k] = linalg.column_stack(cols)
        injections[x] = ChainMap(instance.value(x), colim, comps)
    return colim, injections


# --- cofibrancy -----------------------------------------------------------------

@dataclass
class CofibrancyReport:
    ok: bool
    witness: Optional[object] = None
    detail: str = ""


def check_cofibrant(instance: SModuleInstance) -> CofibrancyReport:
    """Condition (a): declared concatenation maps are isomorphisms after
    coinvariants.  Condition (b): for every object, the colimit over the
    strictly smaller objects injects into the value."""
    for dec in instance.decompositions:
        tensor = dec.factors[0]
        for f in dec.factors[1:]:
            tensor, _ = tensor_product(tensor, f)
        m = dec.map_to_target
        for k in set(tensor.degrees()) | set(instance.value(dec.target_key).degrees()):
            if tensor.dim(k) != instance.value(dec.target_key).dim(k):
                return CofibrancyReport(False, dec.target_key,
                                        "concatenation dimensions differ")
            if linalg.rank(m.f(k)) != tensor.dim(k):
                return CofibrancyReport(False, dec.target_key,
                                        "concatenation map not invertible")
    for x in instance.poset.objects:
        below = [y for y in instance.poset.objects
                 if y != x and instance.poset.leq(y, x)]
        if not below:
            continue
        colim, injections = poset_colimit(instance, below)
        induced = _induced_from_colimit(instance, colim, injections, below,
                                        {y: instance.arrow(y, x) for y in below},
                                        instance.value(x))
        if induced is None:
            return CofibrancyReport(False, x, "colimit map not determined")
        for k in colim.degrees():
            if linalg.rank(induced.f(k)) < colim.dim(k):
                return CofibrancyReport(False, x,
                                        f"colimit injection fails in degree {k}")
    return CofibrancyReport(True)


def _induced_from_colimit(instance: SModuleInstance, colim: ChainComplex,
                          injections, below, family, target: ChainComplex):
    """The unique map out of the colimit determined by a compatible family
    of maps family[y] : value(y) -> target.  Returns None if inconsistent."""
    comps = {}
    for k in colim.degrees():
        a_cols = []
        b_cols = []
        for y in below:
            iy = injections[y]
            m = family[y]
            for i in range(m.source.dim(k)):
                a_cols.append(tuple(iy.f(k)[r][i] for r in range(colim.dim(k))))
                b_cols.append(tuple(m.f(k)[r][i] for r in range(target.dim(k))))
        if not a_cols:
            continue
        a = linalg.column_stack(a_cols)
        b = linalg.column_stack(b_cols)
        sol = linalg.solve_matrix(a, linalg.identity(colim.dim(k)))
        if sol is None:
            return None
        comps[k] = linalg.mat_mul(b, sol)
    try:
        return ChainMap(colim, target, comps)
    except InvalidInput:
        return None


def cofibrant_replacement(instance: SModuleInstance):
    """Objectwise mapping cylinders over the colimit of the strictly smaller
    part; the colimit then injects into the replacement by construction.

    Returns (replacement instance, q) with q a dict of surjective
    quasi-isomorphisms onto the original values."""
    order = sorted(instance.poset.objects,
                   key=lambda x: (sum(1 for y in instance.poset.objects
                                      if y != x and instance.poset.leq(y, x)),
                                  repr(x)))
    new_values: Dict = {}
    new_maps: Dict = {}
    q_maps: Dict = {}
    for x in order:
        below = [y for y in order if y != x and instance.poset.leq(y, x)]
        if below:
            sub = SModuleInstance(instance.poset,
                                  {y: new_values[y] for y in below},
                                  {(a, b): new_maps[(a, b)]
                                   for (a, b) in new_maps
                                   if a in below and b in below}, check=False)
            colim, injections = poset_colimit(sub, below)
            family = {y: instance.arrow(y, x).compose(q_maps[y]) for y in below}
            to_x = _induced_from_colimit(sub, colim, injections, below, family,
                                         instance.value(x))
            if to_x is None:
                raise InvalidInput("colimit family is not compatible")
            cyl, incl, proj = mapping_cylinder(to_x)
            new_values[x] = cyl
            q_maps[x] = proj
            for y in below:
                new_maps[(y, x)] = incl.compose(injections[y])
        else:
            cyl, incl, proj = mapping_cylinder(ChainMap.identity(instance.value(x)))
            new_values[x] = cyl
            q_maps[x] = proj
    replacement = SModuleInstance(instance.poset, new_values, new_maps, check=True)
    return replacement, q_maps


def qs_instance(poset: strata_mod.StrataPoset, n: Optional[int] = None,
                with_decompositions: bool = True) -> SModuleInstance:
    """The strata module in its base-normalized presentation.

    The value at a stratum is the subcomplex of the full strata complex
    spanned by the strata below it; structure maps are the inclusions.
    Non-maximal strata optionally carry their product decompositions into
    vertex-wise strata complexes (the concatenation data of the module)."""
    full, labels = qs_complex(poset, n)
    kept = set(labels)

    def subcomplex(keys):
        keys = [k for k in keys if k in kept]
        spaces = {}
        index = {}
        for deg in full.degrees():
            items = []
            for key in keys:
                if labels[key][0] == deg:
                    index[key] = (deg, len(items))
                    items.append(((key,), deg % 2, ZERO))
            if items:
                spaces[deg] = GradedSpace(tuple(items))
        diff = {}
        for deg in spaces:
            if deg - 1 not in spaces:
                continue
            rows = spaces[deg - 1].dim
            mat = [[ZERO] * spaces[deg].dim for _ in range(rows)]
            for key in keys:
                if key not in index or index[key][0] != deg:
                    continue
                j = index[key][1]
                col = labels[key]
                d = full.d(deg)
                for key2 in keys:
                    if key2 in index and index[key2][0] == deg - 1:
                        mat[index[key2][1]][j] = d[labels[key2][1]][col[1]]
            diff[deg] = tuple(tuple(r) for r in mat)
        return ChainComplex(spaces, diff), index

    values = {}
    indexes = {}
    for key in poset.keys():
        values[key], indexes[key] = subcomplex(poset.down_set(key))
    maps = {}
    for x in poset.keys():
        for y in poset.keys():
            if x != y and poset.leq(x, y):
                comps: Dict[int, List[List[Fraction]]] = {}
                for skey, (deg, i) in indexes[x].items():
                    tdeg, ti = indexes[y][skey]
                    comps.setdefault(deg, [[ZERO] * values[x].dim(deg)
                                           for _ in range(values[y].dim(deg))])
                    comps[deg][ti][i] = ONE
                maps[(x, y)] = ChainMap(values[x], values[y],
                                        {k: tuple(tuple(r) for r in m)
                                         for k, m in comps.items()})
    cat = FiniteCategory.from_poset(sorted(poset.keys(), key=repr), poset.leq)
    decomps = []
    if with_decompositions:
        for x in poset.keys():
            tree = poset.strata[x].tree
            if len(tree.vertices) < 2:
                continue
            dec = _qs_decomposition(poset, x, values[x], indexes[x], n)
            if dec is not None:
                decomps.append(dec)
    return SModuleInstance(cat, values, maps, decomps)


def _qs_decomposition(poset: strata_mod.StrataPoset, x, value, index,
                      n: Optional[int]) -> Optional[Decomposition]:
    """Product decomposition of a non-maximal stratum into its vertex pieces.

    The coefficients of the gluing map are fitted from the chain-map
    condition along the differential graph; the result is verified by the
    ChainMap constructor."""
    tree = poset.strata[x].tree
    universe = poset.universe
    effective = poset.effective
    if effective is None:
        return None
    verts = sorted(tree.vertices)
    factor_posets = []
    for v in verts:
        pos, negs, beta = tree.vertex_triple(v)
        base_v = strata_mod.one_vertex_tree(universe, pos, negs, beta)
        factor_posets.append(trees_mod.enumerate_strata(base_v, universe, effective))
    factor_data = [qs_complex(p, n) for p in factor_posets]

    tensor = factor_data[0][0]
    addressing = {((0, k, i),): (k, i) for k in tensor.degrees()
                  for i in range(tensor.dim(k))}
    # iteratively tensor, tracking product labels through basis labels
    for fi in range(1, len(factor_data)):
        tensor, idx = tensor_product(tensor, factor_data[fi][0])
        new_addr = {}
        for (pa, pb), (k, pos) in idx.items():
            for label, loc in addressing.items():
                if loc == pa:
                    new_addr[label + ((fi,) + pb,)] = (k, pos)
        addressing = new_addr
    # each address is a tuple of (factor, degree, index) triples
    tuple_to_merged = {}
    for address, loc in addressing.items():
        pieces = []
        for (fi, k, i) in address:
            complex_f, labels_f = factor_data[fi]
            key_f = complex_f.spaces[k].basis[i][0][0]
            pieces.append(factor_posets[fi].strata[key_f].tree)
        merged = _merge_pieces(tree, verts, pieces)
        mkey = trees_mod.canonical_key(merged)
        if mkey not in index:
            return None
        tuple_to_merged[address] = mkey

    # fit coefficients along the differential graph
    coeff: Dict = {}
    order = sorted(addressing, key=lambda a: (-addressing[a][0], repr(a)))
    for address in order:
        if address in coeff:
            continue
        coeff[address] = ONE
        stack = [address]
        while stack:
            cur = stack.pop()
            kc, ic = addressing[cur]
            for other in order:
                ko, io = addressing[other]
                if abs(ko - kc) != 1:
                    continue
                if ko == kc - 1:
                    a = tensor.d(kc)[io][ic]
                    mk_src, mk_tgt = tuple_to_merged[cur], tuple_to_merged[other]
                    (ds, js), (dt, jt) = index[mk_src], index[mk_tgt]
                    if dt != ds - 1:
                        return None
                    b = value.d(ds)[jt][js]
                    if a == 0 and b == 0:
                        continue
                    if a == 0 or b == 0:
                        return None
                    want = coeff[cur] * b / a
                    if other in coeff:
                        if coeff[other] != want:
                            return None
                    else:
                        coeff[other] = want
                        stack.append(other)
    comps: Dict[int, List[List[Fraction]]] = {}
    for address, (k, i) in addressing.items():
        mkey = tuple_to_merged[address]
        dt, jt = index[mkey]
        if dt != k:
            return None
        comps.setdefault(k, [[ZERO] * tensor.dim(k)
                             for _ in range(value.dim(k))])
        comps[k][jt][i] = coeff[address]
    m = ChainMap(tensor, value, {k: tuple(tuple(r) for r in v)
                                 for k, v in comps.items()})
    junction = 1
    for e in tree.interior_edges():
        junction *= tree.orbit(e.name).d
    return Decomposition(tuple(f[0] for f in factor_data), x, m, junction)


def _merge_pieces(tree, verts, pieces):
    """Glue strata of the vertex triples back along the tree's edges."""
    parts = list(pieces)
    matching = []
    # match each interior edge of the base stratum tree to half edges of the
    # corresponding pieces, consuming them by orbit
    out_pool: Dict[int, List] = {}
    in_name: Dict[int, str] = {}
    for i, piece in enumerate(parts):
        out_pool[i] = sorted((e for e in piece.output_edges()),
                             key=lambda e: (piece.orbit(e.name).key, e.name))
        in_name[i] = piece.input_edges()[0].name
    vindex = {v: i for i, v in enumerate(verts)}
    for e in sorted(tree.interior_edges(), key=lambda e: e.name):
        i, j = vindex[e.src], vindex[e.dst]
        orb = tree.orbit(e.name)
        pick = None
        for cand in out_pool[i]:
            if parts[i].orbit(cand.name) == orb:
                pick = cand
                break
        if pick is None:
            raise InvalidInput("piece does not carry the junction orbit")
        out_pool[i].remove(pick)
        matching.append(((i, pick.name), (j, in_name[j])))
    conc = trees_mod.Concatenation.make("I", parts, matching)
    glued = trees_mod.concatenate(conc)
    out, _, _ = trees_mod.canonical_relabel(glued)
    return out


def colim_vs_hocolim(instance: SModuleInstance, subset) -> Dict:
    """Compare homology of the homotopy colimit and the colimit over a
    downward-closed subposet; returns a report dict."""
    subset = list(subset)
    sset = set(subset)
    for x in subset:
        for y in instance.poset.objects:
            if instance.poset.leq(y, x) and y not in sset:
                raise InvalidSubposet(f"{y} -> {x} escapes the subset")
    if not subset:
        return {"hocolim": {}, "colim": {}, "equal": True}
    cat = FiniteCategory.from_poset(sorted(sset, key=repr),
                                    lambda a, b: instance.poset.leq(a, b))
    diagram = HomotopyDiagram.from_functor(
        cat, {x: instance.value(x) for x in subset},
        {(x, y): instance.arrow(x, y) for x in subset for y in subset
         if x != y and instance.poset.leq(x, y)})
    hc, _ = hocolim(diagram)
    colim, _ = poset_colimit(instance, subset)
    h1 = homology_dimensions(hc)
    h2 = homology_dimensions(colim)
    return {"hocolim": h1, "colim": h2, "equal": h1 == h2}
