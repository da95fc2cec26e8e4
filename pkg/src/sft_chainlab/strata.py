"""Strata posets over a one-vertex base tree (flavor I).

A stratum is an isomorphism class of trees contracting onto the base; the
poset order is generated by single-edge contractions.  Enumeration keeps a
stratum only when every vertex triple is effective, and terminates because
the action strictly decreases along every splitting.

The module also carries the orientation-line bookkeeping used by the
strata chain complex: each stratum gets an ordered word of signed symbols
(one dual symbol per vertex input slot, one symbol per output slot, one odd
symbol per interior edge), automorphisms act on words by Koszul signs, and
the boundary-map sign of a single contraction is the Koszul sign of the
induced word rearrangement with the cancelling pair appended at the end.
"""

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from . import trees as T
from .errors import InvalidInput, NonTerminating
from .graded_linear import koszul_sign
from .orbits import OrbitUniverse

Triple = Tuple[Tuple[str, int], Tuple[Tuple[str, int], ...], Tuple[int, ...]]


def merge_triples(upper: Triple, lower: Triple) -> Triple:
    """Glue two vertex triples along one copy of the lower positive orbit."""
    pos_u, negs_u, beta_u = upper
    pos_w, negs_w, beta_w = lower
    if pos_w not in negs_u:
        raise InvalidInput("lower positive orbit does not appear among upper outputs")
    negs = list(negs_u)
    negs.remove(pos_w)
    negs.extend(negs_w)
    beta = tuple(a + b for a, b in zip(beta_u, beta_w)) if beta_u or beta_w else ()
    if len(beta_u) != len(beta_w):
        raise InvalidInput("class rank mismatch in merge")
    return (pos_u, tuple(sorted(negs)), beta)


class EffectiveSet:
    """Finite set of effective vertex triples, closed under merging."""

    def __init__(self, triples: Iterable[Triple], close: bool = True,
                 max_size: int = 50000):
        base = {self._norm(t) for t in triples}
        if close:
            frontier = set(base)
            while frontier:
                new = set()
                for a in base:
                    for b in frontier:
                        for pair in ((a, b), (b, a)):
                            if pair[1][0] in pair[0][1]:
                                m = merge_triples(pair[0], pair[1])
                                if m not in base and m not in new:
                                    new.add(m)
                if len(base) + len(new) > max_size:
                    raise NonTerminating("effective closure exceeds size bound")
                base |= new
                frontier = new
        self._set = base

    @staticmethod
    def _norm(t) -> Triple:
        pos, negs, beta = t
        return (tuple(pos), tuple(sorted(tuple(k) for k in negs)), tuple(beta))

    def __contains__(self, t) -> bool:
        return self._norm(t) in self._set

    def __iter__(self):
        return iter(sorted(self._set))

    def __len__(self):
        return len(self._set)


def one_vertex_tree(universe: OrbitUniverse, pos_key, neg_keys, beta,
                    flavor: str = "I", level=None, s_label=None) -> T.DecoratedTree:
    """Convenience constructor for a single-vertex decorated tree."""
    edges = [T.Edge("e0", None, "v0")]
    orbit = {"e0": universe.orbit(pos_key)}
    for i, k in enumerate(neg_keys):
        name = f"e{i + 1}"
        edges.append(T.Edge(name, "v0", None))
        orbit[name] = universe.orbit(k)
    levels = {"v0": level} if level is not None else None
    return T.DecoratedTree.make(flavor, ["v0"], edges, orbit, {"v0": tuple(beta)},
                                levels, s_label)


# --- orientation words -------------------------------------------------------

def tree_word(tree: T.DecoratedTree):
    """Ordered list of (symbol, parity) for the orientation line of a stratum.

    Symbols: ("pos", v) for the input slot of each vertex, ("neg", e) for each
    output slot, both of the parity of the orbit; ("nu", e) of odd parity for
    each interior edge (one gluing direction per broken level)."""
    word = []
    for v in sorted(tree.vertices):
        inc = tree.incoming(v)
        word.append((("pos", v), tree.orbit(inc.name).parity))
        for e in tree.outgoing(v):
            word.append((("neg", e.name), tree.orbit(e.name).parity))
    for e in sorted(tree.interior_edges(), key=lambda e: e.name):
        word.append((("nu", e.name), 1))
    return word


def _perm_sign(word_from, word_to) -> int:
    index = {sym: i for i, (sym, _) in enumerate(word_from)}
    perm = [index[sym] for sym, _ in word_to]
    parities = [p for _, p in word_from]
    return koszul_sign(perm, parities)


def automorphism_word_sign(tree: T.DecoratedTree, vmap: Dict[str, str],
                           emap: Dict[str, str]) -> int:
    """Sign by which a decoration-preserving automorphism acts on the
    orientation word."""
    word = tree_word(tree)
    moved = []
    for sym, parity in word:
        if sym[0] == "pos":
            moved.append((("pos", vmap[sym[1]]), parity))
        else:
            moved.append(((sym[0], emap[sym[1]]), parity))
    return _perm_sign(word, moved)


def enumerate_automorphisms_over_base(tree: T.DecoratedTree):
    """All decoration-preserving automorphisms fixing every half edge.

    Returns a list of (vertex map, edge map) pairs.  Half-edge pinning is
    automatic: a half edge can only map to the half edge of the same name,
    so branches containing half edges never move.  Exponential in branch
    symmetry; intended for desk-scale strata."""

    def merge(maps):
        vm: Dict[str, str] = {}
        em: Dict[str, str] = {}
        for (cvm, cem) in maps:
            vm.update(cvm)
            em.update(cem)
        return (vm, em)

    def branch_maps(e1: T.Edge, e2: T.Edge) -> List:
        if e1.dst is None or e2.dst is None:
            if e1.dst is None and e2.dst is None and e1.name == e2.name:
                return [({}, {e1.name: e1.name})]
            return []
        if T._branch_key(tree, e1) != T._branch_key(tree, e2):
            return []
        out = []
        for (vm, em) in subtree_maps(e1.dst, e2.dst):
            em = dict(em)
            em[e1.name] = e2.name
            out.append((vm, em))
        return out

    def subtree_maps(v1: str, v2: str) -> List:
        o1 = tree.outgoing(v1)
        o2 = tree.outgoing(v2)
        groups1: Dict[object, List[T.Edge]] = {}
        groups2: Dict[object, List[T.Edge]] = {}
        for e in o1:
            groups1.setdefault(T._branch_key(tree, e), []).append(e)
        for e in o2:
            groups2.setdefault(T._branch_key(tree, e), []).append(e)
        if sorted(groups1, key=repr) != sorted(groups2, key=repr) or \
                any(len(groups1[k]) != len(groups2[k]) for k in groups1):
            return []
        results = [({v1: v2}, {})]
        for key in sorted(groups1, key=repr):
            g1, g2 = groups1[key], groups2[key]
            group_results = []
            for perm in itertools.permutations(g2):
                per_branch = []
                ok = True
                for e1, e2 in zip(g1, perm):
                    opts = branch_maps(e1, e2)
                    if not opts:
                        ok = False
                        break
                    per_branch.append(opts)
                if not ok:
                    continue
                for combo in itertools.product(*per_branch):
                    group_results.append(merge(combo))
            if not group_results:
                return []
            results = [merge([r, g]) for r in results for g in group_results]
        return results

    total = [({}, {})]
    for comp in sorted(tree.components(), key=sorted):
        root = next(v for v in comp if tree.incoming(v).is_input)
        root_edge = tree.incoming(root)
        options = []
        for (vm, em) in subtree_maps(root, root):
            em = dict(em)
            em[root_edge.name] = root_edge.name
            options.append((vm, em))
        total = [merge([t, o]) for t in total for o in options]
    return total


# --- the poset ---------------------------------------------------------------

@dataclass
class Stratum:
    tree: T.DecoratedTree       # canonical representative
    key: object
    codim: int
    orientation_killed: bool    # some automorphism over the base reverses sign


class StrataPoset:
    """Iso classes of strata over a one-vertex flavor-I tree."""

    def __init__(self, base: T.DecoratedTree, universe: OrbitUniverse,
                 effective=None):
        self.base = base
        self.universe = universe
        self.effective = effective
        self.strata: Dict[object, Stratum] = {}
        # covers[src_key] = {target_key: [contracted edge names in src rep]}
        self.covers: Dict[object, Dict[object, List[str]]] = {}
        self._descend: Optional[Dict[object, Set[object]]] = None

    def add(self, stratum: Stratum):
        self.strata[stratum.key] = stratum
        self.covers.setdefault(stratum.key, {})

    def keys(self):
        return list(self.strata)

    def codim(self, key) -> int:
        return self.strata[key].codim

    def leq(self, a, b) -> bool:
        """a <= b iff there is a contraction from a onto b."""
        if a == b:
            return True
        return b in self._reachable(a)

    def _reachable(self, key) -> Set[object]:
        out: Set[object] = set()
        stack = [key]
        while stack:
            k = stack.pop()
            for tgt in self.covers.get(k, {}):
                if tgt not in out:
                    out.add(tgt)
                    stack.append(tgt)
        return out

    def up_set(self, key) -> Set[object]:
        return {key} | self._reachable(key)

    def down_set(self, key) -> Set[object]:
        return {k for k in self.strata if self.leq(k, key)}

    def is_open(self, subset) -> bool:
        subset = set(subset)
        return all(self.up_set(k) <= subset for k in subset)

    def is_downward_closed(self, subset) -> bool:
        subset = set(subset)
        return all(self.down_set(k) <= subset for k in subset)

    def maximal_key(self):
        return T.canonical_key(self.base)

    def single_contractions(self, key):
        """(edge name, target key) pairs, one per interior edge of the rep."""
        stratum = self.strata[key]
        out = []
        for e in stratum.tree.interior_edges():
            mor = T.contract(stratum.tree, [e.name])
            canon, _, _ = T.canonical_relabel(mor.target)
            out.append((e.name, T.canonical_key(canon)))
        return out


def contraction_sign(tree: T.DecoratedTree, edge_name: str) -> int:
    """Sign of the boundary-map term for contracting one interior edge.

    Convention: pull the target word back through the contraction, append
    the cancelling pair (output slot, input slot) and the gluing symbol of
    the contracted edge at the end, and take the Koszul sign of the
    rearrangement onto the source word."""
    e = tree.edge(edge_name)
    u, w = e.src, e.dst
    mor = T.contract(tree, [edge_name])
    target = mor.target
    canon, vmap, emap = T.canonical_relabel(target)
    # pull the canonical target word back to source symbols
    inv_v = {}
    for v in tree.vertices:
        inv_v.setdefault(vmap[mor.v(v)], v)
    # the merged class pulls back to its top vertex
    merged_canon = vmap[mor.v(u)]
    inv_v[merged_canon] = u
    inv_e = {}
    for ename, mid in mor.edge_map:
        inv_e[emap[mid]] = ename
    pulled = []
    for sym, parity in tree_word(canon):
        if sym[0] == "pos":
            pulled.append(((("pos", inv_v[sym[1]])), parity))
        else:
            pulled.append(((sym[0], inv_e[sym[1]]), parity))
    p = tree.orbit(edge_name).parity
    pulled.append((("neg", edge_name), p))
    pulled.append((("pos", w), p))
    pulled.append((("nu", edge_name), 1))
    return _perm_sign(pulled, tree_word(tree))


def enumerate_strata(base: T.DecoratedTree, universe: OrbitUniverse,
                     effective, max_strata: int = 20000) -> StrataPoset:
    """Breadth-first generation of strata by single-vertex splittings."""
    if base.flavor != "I":
        raise InvalidInput("strata enumeration is implemented for flavor I")
    if len(base.vertices) != 1:
        raise InvalidInput("base must be a one-vertex tree")
    if universe.orbits and universe.min_action() <= 0:
        raise NonTerminating("universe contains an orbit of non-positive action")

    if not isinstance(effective, EffectiveSet):
        effective = EffectiveSet(effective)

    poset = StrataPoset(base, universe, effective)
    base_canon, _, _ = T.canonical_relabel(base)

    def add_stratum(tree: T.DecoratedTree) -> Stratum:
        key = T.canonical_key(tree)
        if key in poset.strata:
            return poset.strata[key]
        killed = False
        for vm, em in enumerate_automorphisms_over_base(tree):
            if automorphism_word_sign(tree, vm, em) < 0:
                killed = True
                break
        st = Stratum(tree, key, len(tree.vertices) - 1, killed)
        poset.add(st)
        return st

    add_stratum(base_canon)
    frontier = [base_canon]
    fresh = itertools.count()
    while frontier:
        new_frontier = []
        for tree in frontier:
            for v in tree.vertices:
                out_edges = tree.outgoing(v)
                pos_orbit = tree.orbit(tree.incoming(v).name).key
                beta_v = tree.beta(v)
                for lower in effective:
                    lpos, lnegs, lbeta = lower
                    if len(lbeta) != len(beta_v):
                        continue
                    beta_u = tuple(a - b for a, b in zip(beta_v, lbeta))
                    kept_needed = list(lnegs)
                    # choose which outgoing edges move below
                    for subset in _subsets_matching(tree, out_edges, kept_needed):
                        kept = [e for e in out_edges if e not in subset]
                        upper = (pos_orbit,
                                 tuple(sorted([tree.orbit(e.name).key for e in kept]
                                              + [lpos])),
                                 beta_u)
                        if upper not in effective:
                            continue
                        split = _apply_split(tree, v, subset, lower, universe, fresh)
                        canon, _, _ = T.canonical_relabel(split)
                        key = T.canonical_key(canon)
                        if key in poset.strata:
                            continue
                        if len(poset.strata) >= max_strata:
                            raise NonTerminating("stratum bound exceeded")
                        st = add_stratum(canon)
                        new_frontier.append(st.tree)
        frontier = new_frontier

    for key, stratum in list(poset.strata.items()):
        for edge_name, tgt in poset.single_contractions(key):
            poset.covers[key].setdefault(tgt, []).append(edge_name)
    return poset


def _subsets_matching(tree: T.DecoratedTree, out_edges, needed_keys):
    """Subsets of outgoing edges whose orbit multiset equals needed_keys."""
    needed: Dict[object, int] = {}
    for k in needed_keys:
        needed[k] = needed.get(k, 0) + 1
    by_key: Dict[object, List] = {}
    for e in out_edges:
        by_key.setdefault(tree.orbit(e.name).key, []).append(e)
    if any(needed.get(k, 0) > len(by_key.get(k, [])) for k in needed):
        return
    groups = sorted(needed)
    choices = [itertools.combinations(by_key[k], needed[k]) for k in groups]
    for combo in itertools.product(*choices):
        subset = [e for group in combo for e in group]
        yield subset


def _apply_split(tree: T.DecoratedTree, v: str, moved_edges, lower: Triple,
                 universe: OrbitUniverse, fresh) -> T.DecoratedTree:
    lpos, lnegs, lbeta = lower
    wname = f"w{next(fresh)}"
    jname = f"j{next(fresh)}"
    moved = {e.name for e in moved_edges}
    new_edges = []
    for e in tree.edges:
        if e.name in moved:
            new_edges.append(T.Edge(e.name, wname, e.dst))
        else:
            new_edges.append(e)
    new_edges.append(T.Edge(jname, v, wname))
    orbit = {e.name: tree.orbit(e.name) for e in tree.edges}
    orbit[jname] = universe.orbit(lpos)
    beta = {u: tree.beta(u) for u in tree.vertices}
    beta[wname] = tuple(lbeta)
    beta[v] = tuple(a - b for a, b in zip(tree.beta(v), lbeta))
    return T.DecoratedTree.make(
        "I", list(tree.vertices) + [wname], new_edges, orbit, beta)
