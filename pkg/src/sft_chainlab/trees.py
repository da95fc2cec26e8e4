"""Decorated tree categories for the four flavors of strata.

A tree is a finite directed forest with half edges, every vertex having a
unique incoming edge.  Edges are directed downward: an edge with no source
is an input edge, one with no sink is an output edge.  Decorations attach a
Reeb orbit to every edge, a homotopy class (element of a free abelian group,
stored as an integer tuple) to every vertex, level labels to vertices for
flavors II-IV, an interval label ``s`` for flavors III-IV, and a Z/d
basepoint marker to every input/output edge.

Morphisms are contractions of interior edges together with compatible label
changes and basepoint paths.  Concatenations glue output edges to input
edges.  Isomorphism classes are keyed by a deterministic canonical form that
forgets basepoints.
"""

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

from .errors import (DisconnectedResult, InvalidComposition, InvalidInput,
                     MissingData, NoConsistentLabeling, NonTerminating, OrbitMismatch)
from .orbits import OrbitUniverse, ReebOrbit

FLAVORS = ("I", "II", "III", "IV")

S_LABELS = {
    "III": ("{0}", "{1}", "(0,1)"),
    "IV": ("{0}", "{inf}", "(0,inf)"),
}

# closure containment: morphism source s must be contained in closure of target s
_S_CLOSURE_OK = {
    "III": {("{0}", "{0}"), ("{1}", "{1}"), ("(0,1)", "(0,1)"),
            ("{0}", "(0,1)"), ("{1}", "(0,1)")},
    "IV": {("{0}", "{0}"), ("{inf}", "{inf}"), ("(0,inf)", "(0,inf)"),
           ("{0}", "(0,inf)"), ("{inf}", "(0,inf)")},
}

_ALLOWED_PAIRS = {
    "II": {(0, 0), (0, 1), (1, 1)},
    "III": {(0, 0), (0, 1), (1, 1)},
    ("IV", "{0}"): {(0, 0), (0, 2), (2, 2)},
    ("IV", "(0,inf)"): {(0, 0), (0, 2), (2, 2)},
    ("IV", "{inf}"): {(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)},
}

_EDGE_RANGE = {"II": (0, 1), "III": (0, 1), "IV": (0, 2)}


@dataclass(frozen=True)
class Edge:
    name: str
    src: Optional[str]
    dst: Optional[str]

    def __post_init__(self):
        if self.src is None and self.dst is None:
            raise InvalidInput(f"edge {self.name} has no endpoints")

    @property
    def is_input(self) -> bool:
        return self.src is None

    @property
    def is_output(self) -> bool:
        return self.dst is None

    @property
    def is_interior(self) -> bool:
        return self.src is not None and self.dst is not None


def _norm_beta(beta) -> Tuple[int, ...]:
    return tuple(int(x) for x in beta)


@dataclass(frozen=True)
class DecoratedTree:
    flavor: str
    vertices: Tuple[str, ...]
    edges: Tuple[Edge, ...]
    edge_orbit: Tuple[Tuple[str, ReebOrbit], ...]
    vertex_class: Tuple[Tuple[str, Tuple[int, ...]], ...]
    vertex_level: Tuple[Tuple[str, Tuple[int, int]], ...]
    s_label: Optional[str]
    basepoints: Tuple[Tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "_orbit", dict(self.edge_orbit))
        object.__setattr__(self, "_beta", dict(self.vertex_class))
        object.__setattr__(self, "_level", dict(self.vertex_level))
        object.__setattr__(self, "_bp", dict(self.basepoints))
        object.__setattr__(self, "_edge_by_name", {e.name: e for e in self.edges})
        incoming = {}
        outgoing = {v: [] for v in self.vertices}
        for e in self.edges:
            if e.dst is not None:
                incoming.setdefault(e.dst, []).append(e)
            if e.src is not None:
                outgoing.setdefault(e.src, []).append(e)
        object.__setattr__(self, "_incoming", incoming)
        object.__setattr__(self, "_outgoing", outgoing)

    @staticmethod
    def make(flavor, vertices, edges, edge_orbit, vertex_class,
             vertex_level=None, s_label=None, basepoints=None) -> "DecoratedTree":
        vertices = tuple(sorted(vertices))
        edges = tuple(sorted(edges, key=lambda e: e.name))
        eo = tuple(sorted((name, orb) for name, orb in dict(edge_orbit).items()))
        vc = tuple(sorted((v, _norm_beta(b)) for v, b in dict(vertex_class).items()))
        vl = tuple(sorted((v, (int(a), int(b)))
                          for v, (a, b) in dict(vertex_level or {}).items()))
        bp = dict(basepoints or {})
        for e in edges:
            if not e.is_interior:
                bp.setdefault(e.name, 0)
        bp = tuple(sorted(bp.items()))
        return DecoratedTree(flavor, vertices, edges, eo, vc, vl, s_label, bp)

    # --- accessors ---------------------------------------------------------

    def orbit(self, edge_name: str) -> ReebOrbit:
        return self._orbit[edge_name]

    def beta(self, v: str) -> Tuple[int, ...]:
        return self._beta[v]

    def level(self, v: str) -> Tuple[int, int]:
        return self._level[v]

    def edge(self, name: str) -> Edge:
        return self._edge_by_name[name]

    def incoming(self, v: str) -> Edge:
        inc = self._incoming.get(v, [])
        if len(inc) != 1:
            raise InvalidInput(f"vertex {v} has {len(inc)} incoming edges")
        return inc[0]

    def outgoing(self, v: str) -> List[Edge]:
        return sorted(self._outgoing.get(v, []), key=lambda e: e.name)

    def input_edges(self) -> List[Edge]:
        return [e for e in self.edges if e.is_input]

    def output_edges(self) -> List[Edge]:
        return [e for e in self.edges if e.is_output]

    def interior_edges(self) -> List[Edge]:
        return [e for e in self.edges if e.is_interior]

    def half_edges(self) -> List[Edge]:
        return [e for e in self.edges if not e.is_interior]

    def edge_level(self, e: Edge) -> Optional[int]:
        if self.flavor == "I":
            return None
        if e.src is not None:
            return self._level[e.src][1]
        return self._level[e.dst][0]

    def basepoint(self, edge_name: str) -> int:
        return self._bp.get(edge_name, 0)

    def is_empty(self) -> bool:
        return not self.vertices

    def components(self) -> List[FrozenSet[str]]:
        parent = {v: v for v in self.vertices}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in self.edges:
            if e.is_interior:
                ra, rb = find(e.src), find(e.dst)
                if ra != rb:
                    parent[ra] = rb
        groups: Dict[str, Set[str]] = {}
        for v in self.vertices:
            groups.setdefault(find(v), set()).add(v)
        return [frozenset(g) for g in groups.values()]

    def is_connected(self) -> bool:
        return len(self.components()) <= 1

    def symplectization_vertices(self) -> List[str]:
        if self.flavor == "I":
            return list(self.vertices)
        return [v for v in self.vertices if self._level[v][0] == self._level[v][1]]

    def s_dim(self) -> int:
        if self.flavor in ("I", "II"):
            return 0
        return 1 if self.s_label in ("(0,1)", "(0,inf)") else 0

    def class_rank(self) -> Optional[int]:
        for _, b in self.vertex_class:
            return len(b)
        return None

    def vertex_triple(self, v: str):
        """(positive orbit key, canonical negative multiset, beta) at a vertex."""
        pos = self.orbit(self.incoming(v).name).key
        negs = tuple(sorted(self.orbit(e.name).key for e in self.outgoing(v)))
        return (pos, negs, self.beta(v))


# --- validation ------------------------------------------------------------

def validate(tree: DecoratedTree, universes: Optional[Mapping] = None) -> List[str]:
    """Check all structural and decoration invariants; returns violation codes."""
    out: List[str] = []
    names = [e.name for e in tree.edges]
    if len(set(names)) != len(names):
        out.append("duplicate-edge-name")
        return out
    for e in tree.edges:
        for endpoint in (e.src, e.dst):
            if endpoint is not None and endpoint not in tree._beta:
                out.append(f"edge-endpoint-unknown:{e.name}")
    for v in tree.vertices:
        inc = tree._incoming.get(v, [])
        if len(inc) != 1:
            out.append(f"incoming-edge-count:{v}:{len(inc)}")
    # acyclicity: walk up parent pointers
    if not out:
        for v in tree.vertices:
            seen = {v}
            cur = v
            while True:
                e = tree._incoming.get(cur, [None])[0]
                if e is None or e.src is None:
                    break
                cur = e.src
                if cur in seen:
                    out.append(f"cycle-through:{v}")
                    break
                seen.add(cur)
    if tree.flavor in ("I", "II"):
        if tree.is_empty():
            out.append("empty-tree")
        elif not tree.is_connected():
            out.append("disconnected")
        if tree.s_label is not None:
            out.append("unexpected-s-label")
    else:
        if tree.s_label not in S_LABELS[tree.flavor]:
            out.append(f"bad-s-label:{tree.s_label}")
    for e in tree.edges:
        if e.name not in tree._orbit:
            out.append(f"missing-orbit:{e.name}")
    for v in tree.vertices:
        if v not in tree._beta:
            out.append(f"missing-class:{v}")
    ranks = {len(b) for _, b in tree.vertex_class}
    if len(ranks) > 1:
        out.append("class-rank-mismatch")
    if tree.flavor != "I":
        lo, hi = _EDGE_RANGE[tree.flavor]
        if tree.flavor == "IV":
            allowed = _ALLOWED_PAIRS.get(("IV", tree.s_label))
        else:
            allowed = _ALLOWED_PAIRS[tree.flavor]
        for v in tree.vertices:
            if v not in tree._level:
                out.append(f"missing-level:{v}")
                continue
            a, b = tree._level[v]
            if not (lo <= a <= b <= hi):
                out.append(f"level-order:{v}")
            if allowed is not None and (a, b) not in allowed:
                out.append(f"level-pair-not-allowed:{v}:{(a, b)}")
        if not any(o.startswith("missing-level") for o in out):
            for e in tree.edges:
                if e.is_input and tree._level[e.dst][0] != lo:
                    out.append(f"input-edge-level:{e.name}")
                if e.is_output and tree._level[e.src][1] != hi:
                    out.append(f"output-edge-level:{e.name}")
                if e.is_interior and tree._level[e.src][1] != tree._level[e.dst][0]:
                    out.append(f"edge-level-mismatch:{e.name}")
    if universes is not None:
        for e in tree.edges:
            lvl = tree.edge_level(e) if tree.flavor != "I" else None
            uni = universes.get(lvl)
            if uni is None:
                out.append(f"no-universe-for-level:{e.name}")
                continue
            orb = tree.orbit(e.name)
            if orb.key not in uni.orbits or uni.orbits[orb.key] != orb:
                out.append(f"orbit-not-in-universe:{e.name}")
    for e in tree.edges:
        if not e.is_interior:
            d = tree.orbit(e.name).d
            if not (0 <= tree.basepoint(e.name) < d):
                out.append(f"basepoint-out-of-range:{e.name}")
    return out


def require_valid(tree: DecoratedTree, universes=None):
    v = validate(tree, universes)
    if v:
        raise InvalidInput("invalid tree: " + "; ".join(v))


# --- canonical forms and automorphisms --------------------------------------

def _branch_key(tree: DecoratedTree, e: Edge):
    orb = tree.orbit(e.name).key
    lvl = tree.edge_level(e)
    if e.is_output or e.dst is None:
        return ("out", lvl, orb)
    return ("int", lvl, orb, _vertex_key(tree, e.dst))


def _vertex_key(tree: DecoratedTree, v: str):
    lvl = tree._level.get(v)
    branches = tuple(sorted(_branch_key(tree, e) for e in tree.outgoing(v)))
    return ("v", lvl, tree.beta(v), branches)


def canonical_key(tree: DecoratedTree):
    """Deterministic isomorphism-class key.  Basepoints are quotiented out."""
    comps = []
    for comp in tree.components():
        roots = [v for v in comp if tree.incoming(v).is_input]
        if len(roots) != 1:
            raise InvalidInput("component without a unique input edge")
        root = roots[0]
        e = tree.incoming(root)
        comps.append(("comp", tree.edge_level(e), tree.orbit(e.name).key,
                      _vertex_key(tree, root)))
    return (tree.flavor, tree.s_label, tuple(sorted(comps)))


def _vertex_graph_aut(tree: DecoratedTree, v: str, pinned: Set[str]) -> int:
    """Decoration-preserving automorphisms of the branch below v.

    Branches containing a pinned edge are fixed setwise; identical
    unpinned branches may be permuted.
    """
    order = 1
    groups: Dict[object, int] = {}
    for e in tree.outgoing(v):
        if e.is_interior:
            order *= _vertex_graph_aut(tree, e.dst, pinned)
        if _branch_contains_pinned(tree, e, pinned):
            continue
        key = _branch_key(tree, e)
        groups[key] = groups.get(key, 0) + 1
    for m in groups.values():
        order *= factorial(m)
    return order


def _branch_contains_pinned(tree: DecoratedTree, e: Edge, pinned: Set[str]) -> bool:
    if e.name in pinned:
        return True
    if e.dst is None:
        return False
    stack = [e.dst]
    while stack:
        v = stack.pop()
        for out in tree.outgoing(v):
            if out.name in pinned:
                return True
            if out.dst is not None:
                stack.append(out.dst)
    return False


def graph_automorphism_order(tree: DecoratedTree, pinned_edges=()) -> int:
    """Order of the decoration-preserving tree automorphism group, with the
    given edges (and hence the branches containing them) fixed pointwise."""
    pinned = set(pinned_edges)
    order = 1
    comp_groups: Dict[object, int] = {}
    for comp in tree.components():
        root = next(v for v in comp if tree.incoming(v).is_input)
        root_edge = tree.incoming(root)
        order *= _vertex_graph_aut(tree, root, pinned)
        comp_pinned = root_edge.name in pinned or _branch_contains_pinned(
            tree, root_edge, pinned)
        if not comp_pinned:
            key = ("comp", tree.edge_level(root_edge), tree.orbit(root_edge.name).key,
                   _vertex_key(tree, root))
            comp_groups[key] = comp_groups.get(key, 0) + 1
    for m in comp_groups.values():
        order *= factorial(m)
    return order


def automorphism_order(tree: DecoratedTree) -> int:
    """|Aut(T)|: rotations of every input/output edge times tree symmetries."""
    order = graph_automorphism_order(tree)
    for e in tree.half_edges():
        order *= tree.orbit(e.name).d
    return order


def aut_over_contraction(tree: DecoratedTree) -> int:
    """|Aut(T'/T)| for the full contraction onto the maximal tree: tree
    symmetries fixing every half edge, with trivial rotations."""
    pinned = {e.name for e in tree.half_edges()}
    return graph_automorphism_order(tree, pinned)


def aut_relative(f: "TreeMorphism") -> int:
    """|Aut(T'/T)| of a morphism: automorphisms of the source commuting with
    it.  Half edges and surviving interior edges are forced pointwise fixed;
    only structure inside the contracted classes may move."""
    pinned = {e.name for e in f.source.half_edges()}
    pinned |= {name for name, _ in f.edge_map}
    return graph_automorphism_order(f.source, pinned)


def canonical_relabel(tree: DecoratedTree):
    """Relabel vertices and edges deterministically by canonical traversal.

    Returns (relabeled tree, vertex map, edge map).  Isomorphic trees yield
    equal relabeled trees (basepoints are reset to zero).
    """
    comps = []
    for comp in tree.components():
        root = next(v for v in comp if tree.incoming(v).is_input)
        e = tree.incoming(root)
        key = ("comp", tree.edge_level(e), tree.orbit(e.name).key,
               _vertex_key(tree, root))
        comps.append((key, root))
    comps.sort(key=lambda t: (t[0], t[1]))
    vmap: Dict[str, str] = {}
    emap: Dict[str, str] = {}
    counter = itertools.count()
    ecounter = itertools.count()

    def walk(v: str):
        vmap[v] = f"v{next(counter)}"
        emap[tree.incoming(v).name] = f"e{next(ecounter)}"
        children = sorted(tree.outgoing(v),
                          key=lambda e: (_branch_key(tree, e), e.name))
        for e in children:
            if e.dst is None:
                emap[e.name] = f"e{next(ecounter)}"
            else:
                walk(e.dst)

    for _, root in comps:
        walk(root)

    new_edges = [Edge(emap[e.name],
                      vmap[e.src] if e.src is not None else None,
                      vmap[e.dst] if e.dst is not None else None)
                 for e in tree.edges]
    out = DecoratedTree.make(
        tree.flavor,
        [vmap[v] for v in tree.vertices],
        new_edges,
        {emap[e.name]: tree.orbit(e.name) for e in tree.edges},
        {vmap[v]: tree.beta(v) for v in tree.vertices},
        {vmap[v]: tree.level(v) for v in tree.vertices} if tree.flavor != "I" else None,
        tree.s_label, None)
    return out, vmap, emap


def enumerate_strata(tree: DecoratedTree, universe, effective, max_strata: int = 20000):
    """Poset of isomorphism classes of strata over a one-vertex base tree.

    ``effective`` is a set of vertex triples or anything supporting ``in``;
    a stratum is kept only when every vertex triple is effective.  See
    strata.StrataPoset for the returned structure.
    """
    from .strata import enumerate_strata as _impl
    return _impl(tree, universe, effective, max_strata)


# --- morphisms ---------------------------------------------------------------

@dataclass(frozen=True)
class TreeMorphism:
    source: DecoratedTree
    target: DecoratedTree
    vertex_map: Tuple[Tuple[str, str], ...]
    edge_map: Tuple[Tuple[str, str], ...]
    contracted: Tuple[str, ...]
    basepoint_paths: Tuple[Tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "_vmap", dict(self.vertex_map))
        object.__setattr__(self, "_emap", dict(self.edge_map))
        object.__setattr__(self, "_paths", dict(self.basepoint_paths))

    @staticmethod
    def build(source, target, vertex_map, edge_map, contracted, basepoint_paths=None):
        paths = dict(basepoint_paths or {})
        norm_paths = {}
        for e in source.half_edges():
            d = source.orbit(e.name).d
            norm_paths[e.name] = paths.get(e.name, 0) % d
        return TreeMorphism(source, target,
                            tuple(sorted(vertex_map.items())),
                            tuple(sorted(edge_map.items())),
                            tuple(sorted(contracted)),
                            tuple(sorted(norm_paths.items())))

    def v(self, vertex: str) -> str:
        return self._vmap[vertex]

    def e(self, edge_name: str) -> Optional[str]:
        return self._emap.get(edge_name)

    def path(self, edge_name: str) -> int:
        return self._paths.get(edge_name, 0)

    def is_identity_shape(self) -> bool:
        return not self.contracted and self.source == self.target and \
            all(a == b for a, b in self.vertex_map) and \
            all(a == b for a, b in self.edge_map)


def identity_morphism(tree: DecoratedTree) -> TreeMorphism:
    return TreeMorphism.build(tree, tree,
                              {v: v for v in tree.vertices},
                              {e.name: e.name for e in tree.edges},
                              (), {})


def _check_morphism(m: TreeMorphism):
    src, tgt = m.source, m.target
    contracted = set(m.contracted)
    for name in contracted:
        if not src.edge(name).is_interior:
            raise InvalidInput(f"cannot contract non-interior edge {name}")
    for e in src.edges:
        if e.name in contracted:
            continue
        img = m.e(e.name)
        if img is None:
            raise InvalidInput(f"surviving edge {e.name} has no image")
        if src.orbit(e.name) != tgt.orbit(img):
            raise OrbitMismatch(f"edge {e.name}: orbit changes under morphism")
        ie = tgt.edge(img)
        if (e.src is None) != (ie.src is None) or (e.dst is None) != (ie.dst is None):
            raise InvalidInput(f"edge {e.name}: half-edge type changes")
        if e.src is not None and m.v(e.src) != ie.src:
            raise InvalidInput(f"edge {e.name}: source endpoint mismatch")
        if e.dst is not None and m.v(e.dst) != ie.dst:
            raise InvalidInput(f"edge {e.name}: sink endpoint mismatch")
        if src.flavor != "I" and src.edge_level(e) != tgt.edge_level(ie):
            raise NoConsistentLabeling(f"edge {e.name}: level changes")
    # beta additivity
    fibers: Dict[str, List[str]] = {}
    for v in src.vertices:
        fibers.setdefault(m.v(v), []).append(v)
    rank = src.class_rank()
    for w in tgt.vertices:
        vs = fibers.get(w, [])
        if not vs:
            raise InvalidInput(f"target vertex {w} not in image")
        total = tuple(sum(src.beta(v)[i] for v in vs)
                      for i in range(rank or 0)) if rank else ()
        if total != tgt.beta(w):
            raise InvalidInput(f"beta not additive at {w}")
    if src.flavor != "I":
        for v in src.vertices:
            a, b = src.level(v)
            a2, b2 = tgt.level(m.v(v))
            if not (a2 <= a and b2 >= b):
                raise NoConsistentLabeling(f"level monotonicity fails at {v}")
    if src.flavor in ("III", "IV"):
        if (src.s_label, tgt.s_label) not in _S_CLOSURE_OK[src.flavor]:
            raise NoConsistentLabeling("s-label not in closure of target's")


def contract(tree: DecoratedTree, contracted_edges, relabels=None,
             new_s: Optional[str] = None, basepoint_paths=None) -> TreeMorphism:
    """Contract interior edges and merge decorations.

    ``relabels`` maps a vertex to a new lower level for its merged class;
    only classes with no surviving outgoing edges have that freedom.  Raises
    NoConsistentLabeling when no valid target labeling exists.
    """
    contracted = set(contracted_edges)
    relabels = dict(relabels or {})
    for name in contracted:
        if name not in tree._edge_by_name or not tree.edge(name).is_interior:
            raise InvalidInput(f"cannot contract edge {name}")

    parent = {v: v for v in tree.vertices}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for name in contracted:
        e = tree.edge(name)
        ra, rb = find(e.src), find(e.dst)
        if ra != rb:
            parent[ra] = rb
    classes: Dict[str, List[str]] = {}
    for v in tree.vertices:
        classes.setdefault(find(v), []).append(v)
    cname = {root: min(members) for root, members in classes.items()}
    vmap = {v: cname[find(v)] for v in tree.vertices}

    new_vertices = sorted(cname.values())
    new_edges = []
    emap = {}
    for e in tree.edges:
        if e.name in contracted:
            continue
        ne = Edge(e.name,
                  vmap[e.src] if e.src is not None else None,
                  vmap[e.dst] if e.dst is not None else None)
        new_edges.append(ne)
        emap[e.name] = e.name
    new_orbit = {e.name: tree.orbit(e.name) for e in new_edges}

    rank = tree.class_rank() or 0
    new_beta = {}
    for root, members in classes.items():
        new_beta[cname[root]] = tuple(
            sum(tree.beta(v)[i] for v in members) for i in range(rank))

    new_level = {}
    if tree.flavor != "I":
        target_s = new_s if new_s is not None else tree.s_label
        if tree.flavor == "IV":
            allowed = _ALLOWED_PAIRS[("IV", target_s)]
        else:
            allowed = _ALLOWED_PAIRS[tree.flavor]
        outgoing_by_class: Dict[str, List[Edge]] = {w: [] for w in new_vertices}
        for e in new_edges:
            if e.src is not None:
                outgoing_by_class[e.src].append(e)
        for root, members in classes.items():
            w = cname[root]
            tops = [v for v in members
                    if tree.incoming(v).name not in contracted]
            if len(tops) != 1:
                raise InvalidInput("contracted class without unique top")
            a = tree.level(tops[0])[0]
            out_levels = {tree.edge_level(tree.edge(e.name))
                          for e in outgoing_by_class[w]}
            max_b = max(tree.level(v)[1] for v in members)
            requested = [relabels[v] for v in members if v in relabels]
            if out_levels:
                if len(out_levels) != 1:
                    raise NoConsistentLabeling(
                        f"class {w}: surviving outgoing edges carry different levels")
                b = out_levels.pop()
                if requested and any(r != b for r in requested):
                    raise NoConsistentLabeling(
                        f"class {w}: relabel conflicts with surviving edge levels")
            elif requested:
                if len(set(requested)) > 1:
                    raise NoConsistentLabeling(f"class {w}: conflicting relabels")
                b = requested[0]
            else:
                b = max_b
            if b < max_b or (a, b) not in allowed:
                raise NoConsistentLabeling(f"class {w}: no consistent label {(a, b)}")
            new_level[w] = (a, b)

    result = DecoratedTree.make(
        tree.flavor, new_vertices, new_edges, new_orbit, new_beta,
        new_level, new_s if new_s is not None else tree.s_label,
        {e.name: tree.basepoint(e.name) for e in new_edges if not e.is_interior})
    violations = validate(result)
    if violations:
        raise NoConsistentLabeling("contraction target invalid: " + "; ".join(violations))
    mor = TreeMorphism.build(tree, result, vmap, emap, contracted, basepoint_paths)
    _check_morphism(mor)
    return mor


def compose(f: TreeMorphism, g: TreeMorphism) -> TreeMorphism:
    """g after f (apply f first)."""
    if f.target != g.source:
        raise InvalidComposition("target of first morphism differs from source of second")
    vmap = {v: g.v(f.v(v)) for v in f.source.vertices}
    emap = {}
    contracted = set(f.contracted)
    for e in f.source.edges:
        if e.name in contracted:
            continue
        mid = f.e(e.name)
        img = g.e(mid)
        if img is None:
            contracted.add(e.name)
        else:
            emap[e.name] = img
    paths = {}
    for e in f.source.half_edges():
        d = f.source.orbit(e.name).d
        paths[e.name] = (f.path(e.name) + g.path(f.e(e.name))) % d
    out = TreeMorphism.build(f.source, g.target, vmap, emap, contracted, paths)
    _check_morphism(out)
    return out


# --- concatenation -----------------------------------------------------------

@dataclass(frozen=True)
class Concatenation:
    """Parts glued along matched (output edge, input edge) pairs.

    ``parts`` is a list of decorated trees already labeled in the target
    flavor's level system.  ``matching`` is a list of
    ((part_index, output_edge_name), (part_index, input_edge_name)) pairs.
    ``junction_paths`` assigns a Z/d rotation to each matched pair.
    """

    flavor: str
    parts: Tuple[DecoratedTree, ...]
    matching: Tuple[Tuple[Tuple[int, str], Tuple[int, str]], ...]
    junction_paths: Tuple[int, ...] = ()
    s_label: Optional[str] = None

    @staticmethod
    def make(flavor, parts, matching, junction_paths=None, s_label=None):
        parts = tuple(parts)
        matching = tuple(((int(a), str(b)), (int(c), str(d)))
                         for (a, b), (c, d) in matching)
        jp = tuple(junction_paths or [0] * len(matching))
        if len(jp) != len(matching):
            raise InvalidInput("junction path count mismatch")
        return Concatenation(flavor, parts, matching, jp, s_label)


def aut_concat(c: Concatenation) -> int:
    """Order of the diagonal junction rotation group: product of d over
    matched edges."""
    order = 1
    for (i, out_name), _ in c.matching:
        order *= c.parts[i].orbit(out_name).d
    return order


def concatenate(c: Concatenation) -> DecoratedTree:
    """Glue the parts along the matching; returns the resulting tree."""
    flavor = c.flavor
    if flavor not in FLAVORS:
        raise InvalidInput(f"unknown flavor {flavor}")
    vertices = []
    edges: Dict[Tuple[int, str], Edge] = {}
    orbit = {}
    beta = {}
    level = {}
    bps = {}

    def vn(i, v):
        return f"p{i}.{v}"

    def en(i, e):
        return f"p{i}.{e}"

    for i, part in enumerate(c.parts):
        if flavor == "I" and part.flavor != "I":
            raise InvalidInput("flavor-I concatenation takes flavor-I parts")
        for v in part.vertices:
            vertices.append(vn(i, v))
            beta[vn(i, v)] = part.beta(v)
            if part.flavor != "I":
                level[vn(i, v)] = part.level(v)
        for e in part.edges:
            ne = Edge(en(i, e.name),
                      vn(i, e.src) if e.src is not None else None,
                      vn(i, e.dst) if e.dst is not None else None)
            edges[(i, e.name)] = ne
            orbit[ne.name] = part.orbit(e.name)
            if not e.is_interior:
                bps[ne.name] = part.basepoint(e.name)

    for idx, ((i, out_name), (j, in_name)) in enumerate(c.matching):
        try:
            oe = edges[(i, out_name)]
            ie = edges[(j, in_name)]
        except KeyError as exc:
            raise InvalidInput(f"matching references unknown edge: {exc}")
        if oe.dst is not None or ie.src is not None:
            raise InvalidInput("matching must pair an output edge with an input edge")
        part_i, part_j = c.parts[i], c.parts[j]
        if part_i.orbit(out_name) != part_j.orbit(in_name):
            raise OrbitMismatch(f"matched pair {idx}: orbit labels differ")
        if flavor != "I":
            if part_i.edge_level(part_i.edge(out_name)) != \
                    part_j.edge_level(part_j.edge(in_name)):
                raise OrbitMismatch(f"matched pair {idx}: edge levels differ")
        merged = Edge(oe.name, oe.src, ie.dst)
        del edges[(i, out_name)]
        del edges[(j, in_name)]
        orbit.pop(ie.name, None)
        bps.pop(oe.name, None)
        bps.pop(ie.name, None)
        edges[(i, out_name)] = merged
        orbit[merged.name] = part_i.orbit(out_name)

    s_label = c.s_label
    if flavor in ("III", "IV"):
        for p in c.parts:
            if p.flavor != flavor:
                raise InvalidInput("parts must be labeled in the target flavor")
        part_s = {p.s_label for p in c.parts}
        if len(part_s) > 1:
            raise InvalidInput("parts carry different s labels")
        if part_s:
            only = part_s.pop()
            if s_label is not None and s_label != only:
                raise InvalidInput("s label conflicts with the parts")
            s_label = only
        if s_label is None:
            raise InvalidInput("concatenation of no parts needs an explicit s label")
        if s_label in ("(0,1)", "(0,inf)"):
            hi = 1 if flavor == "III" else 2
            pure = {(0, 0), (hi, hi)}
            nonpure = [p for p in c.parts if p.vertices and
                       {p.level(v) for v in p.vertices} - pure]
            if len(nonpure) > 1:
                raise InvalidInput(
                    "an interval-label concatenation admits one main part; "
                    "the rest must be symplectization parts")
            for p in c.parts:
                if p not in nonpure and p.vertices and not p.is_connected():
                    raise InvalidInput("symplectization parts must be connected")

    result = DecoratedTree.make(flavor, vertices, list(edges.values()),
                                orbit, beta, level, s_label, bps)
    violations = validate(result)
    if "disconnected" in violations:
        raise DisconnectedResult("concatenation result is disconnected")
    if violations:
        raise InvalidInput("concatenation result invalid: " + "; ".join(violations))
    return result


# --- numerical invariants ----------------------------------------------------

def vertex_index(tree: DecoratedTree, v: str, n: int) -> int:
    inc = tree.orbit(tree.incoming(v).name)
    if not inc.has_cz():
        raise MissingData(f"orbit {inc.key} carries no Conley-Zehnder index")
    total = inc.cz() + n - 3
    for e in tree.outgoing(v):
        orb = tree.orbit(e.name)
        if not orb.has_cz():
            raise MissingData(f"orbit {orb.key} carries no Conley-Zehnder index")
        total -= orb.cz() + n - 3
    return total


def index(tree: DecoratedTree, n: int) -> int:
    """Fredholm index in terms of Conley-Zehnder data, summed over vertices."""
    return sum(vertex_index(tree, v, n) for v in tree.vertices)


def codim(tree: DecoratedTree) -> int:
    return len(tree.symplectization_vertices()) - tree.s_dim()


def vdim(tree: DecoratedTree, n: int) -> int:
    return index(tree, n) - codim(tree)


# --- subtrees ----------------------------------------------------------------

def _induced_subtree(tree: DecoratedTree, chosen: FrozenSet[str]) -> DecoratedTree:
    edges = []
    for e in tree.edges:
        inside_src = e.src in chosen
        inside_dst = e.dst in chosen
        if not inside_src and not inside_dst:
            continue
        edges.append(Edge(e.name,
                          e.src if inside_src else None,
                          e.dst if inside_dst else None))
    return DecoratedTree.make(
        tree.flavor, chosen, edges,
        {e.name: tree.orbit(e.name) for e in edges},
        {v: tree.beta(v) for v in chosen},
        {v: tree.level(v) for v in chosen} if tree.flavor != "I" else None,
        tree.s_label, None)


def enumerate_subtrees(tree: DecoratedTree) -> List[DecoratedTree]:
    """All connected, non-empty vertex-induced subtrees with inherited
    decorations.  Edges touching a chosen vertex are kept, cut edges become
    half edges, basepoints reset."""
    out = []
    verts = list(tree.vertices)
    for r in range(1, len(verts) + 1):
        for combo in itertools.combinations(verts, r):
            chosen = frozenset(combo)
            sub = _induced_subtree(tree, chosen)
            if sub.is_connected():
                out.append(sub)
    return out


# --- maximality and decompositions -------------------------------------------

def is_maximal(tree: DecoratedTree) -> bool:
    """No nontrivial morphism out: single-vertex components at the deepest
    level label, with the full interval label for flavors III/IV."""
    if tree.is_empty():
        return tree.flavor in ("III", "IV") and \
            tree.s_label in ("(0,1)", "(0,inf)")
    comps = tree.components()
    if tree.flavor in ("I", "II") and len(comps) != 1:
        return False
    for comp in comps:
        if len(comp) != 1:
            return False
    if tree.flavor == "I":
        return True
    want = {"II": (0, 1), "III": (0, 1), "IV": (0, 2)}[tree.flavor]
    if any(tree.level(v) != want for v in tree.vertices):
        return False
    if tree.flavor == "III":
        return tree.s_label == "(0,1)"
    if tree.flavor == "IV":
        return tree.s_label == "(0,inf)"
    return True


def _piece_levels(tree: DecoratedTree, piece: FrozenSet[str], cut: Set[str]):
    """(input edge levels, output edge levels, vertex level set) of a piece."""
    ins, outs = set(), set()
    for v in piece:
        e = tree.incoming(v)
        if e.is_input or e.name in cut or e.src not in piece:
            ins.add(tree.edge_level(e) if tree.flavor != "I" else None)
        for e in tree.outgoing(v):
            if e.is_output or e.name in cut or (e.dst is not None and e.dst not in piece):
                outs.add(tree.edge_level(e) if tree.flavor != "I" else None)
    levels = {tree.level(v) for v in piece} if tree.flavor != "I" else set()
    return ins, outs, levels


def _cut_pieces(tree: DecoratedTree, cut: Set[str]) -> List[FrozenSet[str]]:
    parent = {v: v for v in tree.vertices}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in tree.edges:
        if e.is_interior and e.name not in cut:
            ra, rb = find(e.src), find(e.dst)
            if ra != rb:
                parent[ra] = rb
    groups: Dict[str, Set[str]] = {}
    for v in tree.vertices:
        groups.setdefault(find(v), set()).add(v)
    return [frozenset(g) for g in groups.values()]


def has_nontrivial_concatenation(tree: DecoratedTree) -> bool:
    """Exhaustive search for a nontrivial concatenation decomposition."""
    if tree.flavor in ("III", "IV") and tree.s_label in ("{0}", "{1}", "{inf}"):
        # endpoint trees are concatenations of flavor-II style parts
        return True
    if tree.is_empty():
        return False
    interior = [e.name for e in tree.interior_edges()]
    if tree.flavor == "I":
        return bool(interior)

    def pure(levels, lvl):
        return levels == {(lvl, lvl)}

    if tree.flavor == "II":
        if pure({tree.level(v) for v in tree.vertices}, 0) or \
                pure({tree.level(v) for v in tree.vertices}, 1):
            return True
        for r in range(1, len(interior) + 1):
            for cut in itertools.combinations(interior, r):
                cut = set(cut)
                ok = True
                for piece in _cut_pieces(tree, cut):
                    ins, outs, levels = _piece_levels(tree, piece, cut)
                    if pure(levels, 0) or pure(levels, 1):
                        continue
                    if ins <= {0} and outs <= {1}:
                        continue
                    ok = False
                    break
                if ok:
                    return True
        return False

    hi = 1 if tree.flavor == "III" else 2
    # interval label: split off symplectization parts (type three)
    for r in range(0, len(interior) + 1):
        for cut in itertools.combinations(interior, r):
            cut = set(cut)
            pieces = _cut_pieces(tree, cut)
            n_pure = 0
            ok = True
            for piece in pieces:
                ins, outs, levels = _piece_levels(tree, piece, cut)
                if pure(levels, 0) or pure(levels, hi):
                    n_pure += 1
                    continue
                if ins <= {0} and outs <= {hi}:
                    continue
                ok = False
                break
            if ok and n_pure >= 1:
                return True
    return False
