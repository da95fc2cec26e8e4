"""Coordinate models of the gluing-parameter spaces and their stratification.

Gluing parameters are stored in the bounded chart h = exp(-g), so h = 0
means g = infinity (no gluing) and h > 0 means the edge or vertex parameter
is finite.  The vertex constraint g_v = g_e + g_{v'} becomes h_v = h_e *
h_{v'}, with h_{v'} read as 1 when v' carries no vertex parameter.  Values
are exact Fractions or floats; the chart transforms are exact on rational
points whose discriminants are perfect squares (in particular on every
round trip starting from rational gluing data) and float otherwise.

The relaxation h in [0, infinity) rather than [0, 1) is used throughout;
the stratification only depends on the zero pattern.
"""

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from . import trees as T
from .errors import InvalidChart, InvalidInput

TOL = 1e-9


def _is_exact(x) -> bool:
    return isinstance(x, (Fraction, int))


def frac_sqrt(x: Fraction) -> Optional[Fraction]:
    """Exact square root of a nonnegative rational, or None."""
    x = Fraction(x)
    if x < 0:
        return None
    if x == 0:
        return Fraction(0)
    n, d = x.numerator, x.denominator
    rn = math.isqrt(n)
    rd = math.isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


def _sqrt(x, exact: bool):
    if exact:
        r = frac_sqrt(x)
        if r is None:
            raise InvalidChart(f"square root of {x} is not rational; use float mode")
        return r
    return math.sqrt(float(x))


def _vertex_parameter_set(tree: T.DecoratedTree) -> List[str]:
    """Vertices carrying a gluing parameter g_v."""
    if tree.flavor == "I":
        return []
    out = []
    for v in tree.vertices:
        a, b = tree.level(v)
        if (a, b) == (0, 0):
            out.append(v)
        elif (a, b) == (1, 1) and tree.flavor == "IV" and tree.s_label == "{inf}":
            out.append(v)
    return sorted(out)


@dataclass
class GluingPoint:
    """A point of the gluing-parameter space over a tree, in h coordinates."""

    tree: T.DecoratedTree
    h_edges: Dict[str, object] = field(default_factory=dict)
    h_vertices: Dict[str, object] = field(default_factory=dict)
    t: Optional[object] = None  # interval coordinate; tau = exp(-t) for IV at {inf}

    def is_exact(self) -> bool:
        vals = list(self.h_edges.values()) + list(self.h_vertices.values())
        if self.t is not None:
            vals.append(self.t)
        return all(_is_exact(v) for v in vals)

    def validate(self, tol: float = TOL) -> List[str]:
        tree = self.tree
        out = []
        interior = {e.name for e in tree.interior_edges()}
        if set(self.h_edges) != interior:
            out.append("edge-parameter-set-mismatch")
        vset = set(_vertex_parameter_set(tree))
        if set(self.h_vertices) != vset:
            out.append("vertex-parameter-set-mismatch")
        for name, value in self.h_edges.items():
            if value < 0:
                out.append(f"negative-edge-parameter:{name}")
        for name, value in self.h_vertices.items():
            if value < 0:
                out.append(f"negative-vertex-parameter:{name}")
        needs_t = tree.flavor == "III" or tree.flavor == "IV"
        if needs_t and self.t is None:
            out.append("missing-t")
        if tree.flavor == "III" and self.t is not None:
            # ranges [0,1), (0,1), (0,1] for s = {0}, (0,1), {1}
            if tree.s_label == "{0}" and not (0 <= self.t < 1):
                out.append("t-out-of-range")
            if tree.s_label == "(0,1)" and not (0 < self.t < 1):
                out.append("t-out-of-range")
            if tree.s_label == "{1}" and not (0 < self.t <= 1):
                out.append("t-out-of-range")
        if tree.flavor == "IV" and self.t is not None:
            # t in [0,inf) for s={0}, (0,inf) for the interval,
            # and tau = exp(-t) in [0,inf) for s={inf}
            if self.t < 0:
                out.append("t-out-of-range")
            if tree.s_label == "(0,inf)" and self.t == 0:
                out.append("t-out-of-range")
        if out:
            return out
        for v, e, vp in self._constraints():
            hv = self.h_vertices[v] if v is not None else self.t
            he = self.h_edges[e]
            hvp = self.h_vertices.get(vp, 1) if vp is not None else 1
            lhs, rhs = hv, he * hvp
            if _is_exact(lhs) and _is_exact(rhs) and _is_exact(he):
                if lhs != rhs:
                    out.append(f"constraint:{e}")
            elif abs(float(lhs) - float(rhs)) > tol:
                out.append(f"constraint:{e}")
        return out

    def _constraints(self):
        """(vertex or None for t, edge, child vertex or None) triples with
        h_v = h_e * h_child."""
        tree = self.tree
        vset = set(_vertex_parameter_set(tree))
        out = []
        for e in tree.interior_edges():
            v, vp = e.src, e.dst
            if tree.flavor == "I":
                continue
            va, vb = tree.level(v)
            if (va, vb) == (0, 0):
                out.append((v, e.name, vp if vp in vset else None))
            elif tree.flavor == "IV" and tree.s_label == "{inf}":
                if (va, vb) == (1, 1):
                    out.append((v, e.name, vp if vp in vset else None))
                elif (va, vb) == (0, 1) and tree.edge_level(e) == 1:
                    out.append((None, e.name, vp if vp in vset else None))
        return out


@dataclass
class ChartPoint:
    """Unconstrained chart coordinates of a gluing point.

    Keys are ("h_top", vertex), ("q", edge), ("h", edge), ("tau",) and
    ("t",), with ranges [0,inf), (-inf,inf), [0,inf), [0,inf), and the
    s-interval respectively."""

    tree: T.DecoratedTree
    coords: Dict[Tuple, object] = field(default_factory=dict)


def chart_keys(tree: T.DecoratedTree) -> List[Tuple]:
    """The chart coordinate system of a tree, in deterministic order."""
    keys: List[Tuple] = []
    if tree.flavor == "I":
        for e in sorted(tree.interior_edges(), key=lambda e: e.name):
            keys.append(("h", e.name))
        return keys
    vset = set(_vertex_parameter_set(tree))
    for comp in sorted(tree.components(), key=sorted):
        root = next(v for v in comp if tree.incoming(v).is_input)
        if tree.level(root) == (0, 0):
            keys.append(("h_top", root))
    for e in sorted(tree.interior_edges(), key=lambda e: e.name):
        lvl_dst = tree.level(e.dst)
        if lvl_dst == (0, 0):
            keys.append(("q", e.name))
    if tree.flavor == "IV" and tree.s_label == "{inf}":
        keys.append(("tau",))
        for e in sorted(tree.interior_edges(), key=lambda e: e.name):
            if tree.level(e.dst) == (1, 1):
                keys.append(("q", e.name))
        for e in sorted(tree.interior_edges(), key=lambda e: e.name):
            if tree.edge_level(e) == 2:
                keys.append(("h", e.name))
        return keys
    free_level = {"II": 1, "III": 1, "IV": 2}[tree.flavor]
    for e in sorted(tree.interior_edges(), key=lambda e: e.name):
        if tree.edge_level(e) == free_level:
            keys.append(("h", e.name))
    if tree.flavor in ("III", "IV"):
        keys.append(("t",))
    return keys


def expected_chart_dimension(tree: T.DecoratedTree) -> int:
    """codim T for flavor II, codim T + 1 for flavors III/IV charts."""
    if tree.flavor == "I":
        return len(tree.interior_edges())
    base = len(tree.symplectization_vertices())
    if tree.flavor == "II":
        return base
    return base + 1


def to_chart(p: GluingPoint) -> ChartPoint:
    """Forward chart transform; exact on exact inputs."""
    tree = p.tree
    bad = p.validate()
    if bad:
        raise InvalidInput("invalid gluing point: " + "; ".join(bad))
    coords: Dict[Tuple, object] = {}
    vset = set(_vertex_parameter_set(tree))
    for key in chart_keys(tree):
        kind = key[0]
        if kind == "h_top":
            coords[key] = p.h_vertices[key[1]]
        elif kind == "h":
            coords[key] = p.h_edges[key[1]] if tree.flavor != "I" else p.h_edges[key[1]]
        elif kind == "q":
            e = key[1]
            child = tree.edge(e).dst
            he = p.h_edges[e]
            hc = p.h_vertices.get(child, 1)
            coords[key] = he * he - hc * hc
        elif kind == "tau":
            coords[key] = p.t
        elif kind == "t":
            coords[key] = p.t
    return ChartPoint(tree, coords)


def from_chart(c: ChartPoint, mode: str = "auto") -> GluingPoint:
    """Inverse chart transform.

    mode "exact" insists on rational square roots, "float" computes in
    floating point, "auto" tries exact and falls back to float."""
    tree = c.tree
    keys = chart_keys(tree)
    if set(c.coords) != set(keys):
        raise InvalidChart("chart coordinate set mismatch")
    for key, value in c.coords.items():
        if key[0] in ("h_top", "h", "tau") and value < 0:
            raise InvalidChart(f"coordinate {key} out of range")
    if ("t",) in c.coords:
        value = c.coords[("t",)]
        if tree.flavor == "III" and not (0 <= value <= 1):
            raise InvalidChart("t out of range")
        if tree.flavor == "IV" and value < 0:
            raise InvalidChart("t out of range")

    exact = mode == "exact" or (mode == "auto"
                                and all(_is_exact(v) for v in c.coords.values()))

    def solve_pair(q, hv):
        """h_e, h_child with h_e^2 - h_child^2 = q and h_e * h_child = hv."""
        disc = q * q + 4 * hv * hv
        if exact:
            r = frac_sqrt(Fraction(disc))
            if r is None:
                if mode == "exact":
                    raise InvalidChart("irrational chart point in exact mode")
                return solve_pair_float(q, hv)
            he2 = (q + r) / 2
            hc2 = (r - q) / 2
            he = frac_sqrt(Fraction(he2))
            hc = frac_sqrt(Fraction(hc2))
            if he is None or hc is None:
                if mode == "exact":
                    raise InvalidChart("irrational chart point in exact mode")
                return solve_pair_float(q, hv)
            return he, hc
        return solve_pair_float(q, hv)

    def solve_pair_float(q, hv):
        q = float(q)
        hv = float(hv)
        r = math.sqrt(q * q + 4 * hv * hv)
        he = math.sqrt(max((q + r) / 2, 0.0))
        hc = math.sqrt(max((r - q) / 2, 0.0))
        return he, hc

    h_edges: Dict[str, object] = {}
    h_vertices: Dict[str, object] = {}
    t = c.coords.get(("t",), c.coords.get(("tau",)))

    if tree.flavor == "I":
        for e in tree.interior_edges():
            h_edges[e.name] = c.coords[("h", e.name)]
        return GluingPoint(tree, h_edges, {}, None)

    vset = set(_vertex_parameter_set(tree))
    for comp in tree.components():
        root = next(v for v in comp if tree.incoming(v).is_input)
        stack = [root]
        if tree.level(root) == (0, 0):
            h_vertices[root] = c.coords[("h_top", root)]
        while stack:
            v = stack.pop()
            lvl = tree.level(v)
            for e in tree.outgoing(v):
                if e.dst is None:
                    continue
                child = e.dst
                clvl = tree.level(child)
                parent_param = None
                if lvl == (0, 0):
                    parent_param = h_vertices[v]
                elif tree.flavor == "IV" and tree.s_label == "{inf}":
                    if lvl == (1, 1):
                        parent_param = h_vertices[v]
                    elif lvl == (0, 1) and tree.edge_level(e) == 1:
                        parent_param = t
                if parent_param is not None:
                    if child in vset:
                        he, hc = solve_pair(c.coords[("q", e.name)], parent_param)
                        h_edges[e.name] = he
                        h_vertices[child] = hc
                    else:
                        h_edges[e.name] = parent_param
                else:
                    h_edges[e.name] = c.coords[("h", e.name)]
                stack.append(child)
    return GluingPoint(tree, h_edges, h_vertices, t)


def _pos(x, tol: float = TOL) -> bool:
    return (x != 0) if _is_exact(x) else (abs(float(x)) > tol)


def stratify(p: GluingPoint) -> T.TreeMorphism:
    """The stratification map: contract edges with finite gluing parameter,
    push vertices with finite vertex parameter to the next level, and place
    the interval coordinate."""
    tree = p.tree
    bad = p.validate()
    if bad:
        raise InvalidInput("invalid gluing point: " + "; ".join(bad))
    contracted = [name for name, h in p.h_edges.items() if _pos(h)]
    relabels: Dict[str, int] = {}
    tau_pos = tree.flavor == "IV" and tree.s_label == "{inf}" and _pos(p.t)
    for v, h in p.h_vertices.items():
        if not _pos(h):
            continue
        if tree.level(v) == (0, 0):
            if tree.flavor == "IV" and (tree.s_label != "{inf}" or tau_pos):
                relabels[v] = 2
            else:
                relabels[v] = 1
        else:
            relabels[v] = 2
    if tau_pos:
        # finite composition parameter: the middle level disappears, every
        # cobordism-level vertex lands in the composite
        for v in tree.vertices:
            if tree.level(v) == (0, 1):
                relabels[v] = 2
    new_s = None
    if tree.flavor == "III":
        tv = float(p.t)
        if tree.s_label == "{0}":
            new_s = "{0}" if not _pos(p.t) else "(0,1)"
        elif tree.s_label == "{1}":
            new_s = "{1}" if not _pos(1 - Fraction(p.t) if _is_exact(p.t)
                                      else 1 - tv) else "(0,1)"
        else:
            new_s = "(0,1)"
    elif tree.flavor == "IV":
        if tree.s_label == "{inf}":
            new_s = "(0,inf)" if _pos(p.t) else "{inf}"
        elif tree.s_label == "{0}":
            new_s = "(0,inf)" if _pos(p.t) else "{0}"
        else:
            new_s = "(0,inf)"
    return T.contract(tree, contracted, relabels, new_s)


@dataclass
class CellReport:
    samples: int
    dimension_checks: int
    dimension_failures: List
    continuity_checks: int
    continuity_failures: List
    product_checks: int
    product_failures: List

    @property
    def ok(self) -> bool:
        return not (self.dimension_failures or self.continuity_failures
                    or self.product_failures)

    def lines(self) -> List[str]:
        out = [
            f"samples: {self.samples}",
            f"dimension checks: {self.dimension_checks} "
            f"({len(self.dimension_failures)} failures)",
            f"continuity checks: {self.continuity_checks} "
            f"({len(self.continuity_failures)} failures)",
            f"product checks: {self.product_checks} "
            f"({len(self.product_failures)} failures)",
        ]
        return out


def sample_chart_point(tree: T.DecoratedTree, rng: random.Random,
                       rational: bool = False) -> ChartPoint:
    coords = {}
    for key in chart_keys(tree):
        kind = key[0]
        if kind in ("h_top", "h", "tau"):
            if rng.random() < 0.3:
                value = Fraction(0) if rational else 0.0
            elif rational:
                value = Fraction(rng.randint(1, 8), rng.randint(1, 4))
            else:
                value = rng.uniform(0.05, 2.0)
        elif kind == "q":
            value = (Fraction(rng.randint(-8, 8), rng.randint(1, 4))
                     if rational else rng.uniform(-2.0, 2.0))
        else:  # t: sample within the source tree's s-range
            if tree.flavor == "III":
                interior = rng.uniform(0.05, 0.95)
                if tree.s_label == "{0}":
                    value = rng.choice([0.0, interior])
                elif tree.s_label == "{1}":
                    value = rng.choice([1.0, interior])
                else:
                    value = interior
            else:
                if tree.s_label in ("{0}", "{inf}"):
                    value = rng.choice([0.0, rng.uniform(0.05, 3.0)])
                else:
                    value = rng.uniform(0.05, 3.0)
            if rational:
                value = Fraction(value).limit_denominator(16)
        coords[key] = value
    return ChartPoint(tree, coords)


def stratum_local_dimension(p: GluingPoint) -> int:
    """Number of chart directions that move without changing the stratum."""
    c = to_chart(p)
    dim = 0
    for key, value in c.coords.items():
        kind = key[0]
        if kind == "q":
            dim += 1
        elif kind in ("h_top", "h", "tau"):
            if _pos(value):
                dim += 1
        else:  # t: interior values move freely
            if p.tree.flavor == "III":
                inside = TOL < float(value) < 1 - TOL
            else:
                inside = _pos(value)
            if inside:
                dim += 1
    return dim


def verify_cell_like(tree: T.DecoratedTree, samples: int = 200,
                     seed: int = 0) -> CellReport:
    """Sampled verification that the stratification behaves like a cell
    structure: stratum dimensions match the codimension bookkeeping, the
    stratification is continuous along coordinate degenerations, and the
    fiber decomposition respects stratum membership."""
    rng = random.Random(seed)
    dim_fail: List = []
    cont_fail: List = []
    prod_fail: List = []
    dim_checks = cont_checks = prod_checks = 0
    base_s_dim = tree.s_dim()
    for snum in range(samples):
        c = sample_chart_point(tree, rng)
        p = from_chart(c, mode="float")
        mor = stratify(p)
        target = mor.target
        dim_checks += 1
        expected = (T.codim(tree) - T.codim(target)) + base_s_dim
        got = stratum_local_dimension(p)
        if got != expected:
            dim_fail.append((snum, expected, got))
        # continuity: send one positive bounded coordinate to zero
        pos_keys = [k for k, v in c.coords.items()
                    if k[0] in ("h_top", "h", "tau") and _pos(v)]
        if pos_keys:
            cont_checks += 1
            key = rng.choice(pos_keys)
            limit_coords = dict(c.coords)
            limit_coords[key] = 0.0
            limit = from_chart(ChartPoint(tree, limit_coords), mode="float")
            lmor = stratify(limit)
            if not (set(lmor.contracted) <= set(mor.contracted)):
                cont_fail.append((snum, key))
            else:
                # relabeled vertex sets must shrink as well
                def relabeled(m):
                    out = set()
                    for v in tree.vertices:
                        if tree.level(v) != m.target.level(m.v(v)):
                            out.add(v)
                    return out
                if not (relabeled(lmor) <= relabeled(mor)):
                    cont_fail.append((snum, key))
        # product decomposition over the stratum
        prod_checks += 1
        if not _check_product_split(tree, p, mor):
            prod_fail.append(snum)
    return CellReport(samples, dim_checks, dim_fail, cont_checks, cont_fail,
                      prod_checks, prod_fail)


def _check_product_split(tree: T.DecoratedTree, p: GluingPoint,
                         mor: T.TreeMorphism) -> bool:
    """Fiberwise constraints of the point must hold within every fiber of
    its stratum map (the product decomposition of the relative space)."""
    fibers: Dict[str, List[str]] = {}
    for v in tree.vertices:
        fibers.setdefault(mor.v(v), []).append(v)
    for target_vertex, verts in fibers.items():
        inside = set(verts)
        for v, e, vp in p._constraints():
            ename_src = tree.edge(e).src
            if ename_src in inside or (tree.edge(e).dst in inside):
                hv = p.h_vertices[v] if v is not None else p.t
                he = p.h_edges[e]
                hvp = p.h_vertices.get(vp, 1) if vp is not None else 1
                if abs(float(hv) - float(he) * float(hvp)) > 1e-6:
                    return False
    return True
