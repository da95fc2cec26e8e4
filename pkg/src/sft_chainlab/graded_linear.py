"""Z/2-graded rational linear algebra: Koszul signs, chain complexes,
homology, mapping cylinders, and lifting against acyclic fibrations.

All arithmetic is exact (fractions.Fraction); no floating point enters this
module.  Complexes are finite windows of integer degrees, bounded below,
with homological differentials d_k : C_k -> C_{k-1}.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from . import linalg
from .errors import HypothesisViolation, InvalidInput

ZERO = Fraction(0)
ONE = Fraction(1)


def koszul_sign(permutation: Sequence[int], parities: Sequence[int]) -> int:
    """Sign picked up by reordering graded symbols along a permutation.

    ``permutation[i]`` is the original position of the symbol landing in slot
    ``i``.  Each transposition of two odd symbols contributes -1; pairs
    involving an even symbol commute freely.
    """
    n = len(permutation)
    if len(parities) != n:
        raise InvalidInput("permutation and parity list have different lengths")
    if sorted(permutation) != list(range(n)):
        raise InvalidInput("not a permutation of 0..n-1")
    sign = 1
    for i in range(n):
        for j in range(i + 1, n):
            if permutation[i] > permutation[j]:
                if parities[permutation[i]] % 2 and parities[permutation[j]] % 2:
                    sign = -sign
    return sign


def sort_with_koszul_sign(keys: Sequence, parities: Sequence[int]):
    """Stable-sort ``keys``, returning (sorted keys, Koszul sign of the move)."""
    order = sorted(range(len(keys)), key=lambda i: (keys[i], i))
    sign = koszul_sign(order, parities)
    return [keys[i] for i in order], sign


@dataclass(frozen=True)
class GradedSpace:
    """Explicit basis with Z/2 parities and optional filtration weights."""

    basis: Tuple[Tuple[object, int, Fraction], ...]

    def __post_init__(self):
        labels = [b[0] for b in self.basis]
        if len(set(labels)) != len(labels):
            raise InvalidInput("duplicate labels in graded basis")

    @staticmethod
    def make(entries) -> "GradedSpace":
        norm = []
        for e in entries:
            if len(e) == 2:
                label, parity = e
                weight = ZERO
            else:
                label, parity, weight = e
            weight = Fraction(weight)
            if weight < 0:
                raise InvalidInput("filtration weight must be nonnegative")
            norm.append((label, parity % 2, weight))
        return GradedSpace(tuple(norm))

    @property
    def dim(self) -> int:
        return len(self.basis)

    def labels(self):
        return [b[0] for b in self.basis]

    def parities(self):
        return [b[1] for b in self.basis]


class ChainComplex:
    """Finite chain complex over Q with explicit bases.

    ``spaces`` maps degree -> GradedSpace; ``differential`` maps degree k to
    the matrix of d_k : C_k -> C_{k-1}.  d.d = 0 is checked on construction.
    """

    def __init__(self, spaces: Dict[int, GradedSpace], differential: Dict[int, linalg.Matrix]):
        self.spaces = {k: v for k, v in spaces.items() if v.dim > 0}
        self.differential = {}
        for k, m in differential.items():
            nrows, ncols = linalg.shape(m)
            if ncols != self.dim(k) or nrows != self.dim(k - 1):
                if linalg.is_zero(m) and (self.dim(k) == 0 or self.dim(k - 1) == 0):
                    continue
                raise InvalidInput(f"differential at degree {k} has shape {(nrows, ncols)}, "
                                   f"expected {(self.dim(k - 1), self.dim(k))}")
            if not linalg.is_zero(m):
                self.differential[k] = m
        for k in list(self.differential):
            if k - 1 in self.differential:
                if not linalg.is_zero(linalg.mat_mul(self.differential[k - 1], self.differential[k])):
                    raise InvalidInput(f"d.d != 0 between degrees {k} and {k - 2}")

    @staticmethod
    def from_dims(dims: Dict[int, int], differential: Dict[int, linalg.Matrix],
                  parity_of_degree=lambda k: k % 2) -> "ChainComplex":
        spaces = {
            k: GradedSpace.make([((k, i), parity_of_degree(k)) for i in range(n)])
            for k, n in dims.items() if n > 0
        }
        return ChainComplex(spaces, differential)

    def dim(self, k: int) -> int:
        return self.spaces[k].dim if k in self.spaces else 0

    def degrees(self):
        return sorted(self.spaces)

    def d(self, k: int) -> linalg.Matrix:
        if k in self.differential:
            return self.differential[k]
        return linalg.zeros(self.dim(k - 1), self.dim(k))

    def total_dim(self) -> int:
        return sum(s.dim for s in self.spaces.values())

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * s.dim for k, s in self.spaces.items())

    def shift(self, n: int) -> "ChainComplex":
        """Degree shift C[n]_k = C_{k-n}; differential reused verbatim."""
        spaces = {k + n: v for k, v in self.spaces.items()}
        diff = {k + n: m for k, m in self.differential.items()}
        return ChainComplex(spaces, diff)

    def __eq__(self, other):
        return (isinstance(other, ChainComplex)
                and self.spaces == other.spaces
                and self.differential == other.differential)


def zero_complex() -> ChainComplex:
    return ChainComplex({}, {})


class ChainMap:
    """Degreewise matrices commuting with the differentials (checked)."""

    def __init__(self, source: ChainComplex, target: ChainComplex,
                 components: Dict[int, linalg.Matrix], check: bool = True):
        self.source = source
        self.target = target
        self.components = {}
        for k, m in components.items():
            nrows, ncols = linalg.shape(m)
            if ncols != source.dim(k) or nrows != target.dim(k):
                if linalg.is_zero(m) and (source.dim(k) == 0 or target.dim(k) == 0):
                    continue
                raise InvalidInput(f"chain map component at degree {k} has wrong shape")
            if not linalg.is_zero(m):
                self.components[k] = m
        if check:
            for k in self._active_degrees():
                lhs = linalg.mat_mul(target.d(k), self.f(k))
                rhs = linalg.mat_mul(self.f(k - 1), source.d(k))
                if not linalg.mats_equal(lhs, rhs):
                    raise InvalidInput(f"does not commute with differentials at degree {k}")

    def _active_degrees(self):
        degs = set(self.source.degrees()) | set(self.target.degrees())
        return sorted(degs | {k + 1 for k in degs})

    def f(self, k: int) -> linalg.Matrix:
        if k in self.components:
            return self.components[k]
        return linalg.zeros(self.target.dim(k), self.source.dim(k))

    @staticmethod
    def identity(c: ChainComplex) -> "ChainMap":
        return ChainMap(c, c, {k: linalg.identity(c.dim(k)) for k in c.degrees()}, check=False)

    @staticmethod
    def zero(source: ChainComplex, target: ChainComplex) -> "ChainMap":
        return ChainMap(source, target, {}, check=False)

    def compose(self, other: "ChainMap") -> "ChainMap":
        """self . other (apply other first)."""
        if other.target is not self.source and other.target.spaces != self.source.spaces:
            raise InvalidInput("composition source/target mismatch")
        degs = set(self.components) | set(other.components)
        comps = {k: linalg.mat_mul(self.f(k), other.f(k)) for k in degs}
        return ChainMap(other.source, self.target, comps, check=False)

    def is_injective(self) -> bool:
        return all(linalg.rank(self.f(k)) == self.source.dim(k)
                   for k in self.source.degrees())

    def is_surjective(self) -> bool:
        return all(linalg.rank(self.f(k)) == self.target.dim(k)
                   for k in self.target.degrees())

    def __eq__(self, other):
        if not isinstance(other, ChainMap):
            return NotImplemented
        degs = set(self.components) | set(other.components)
        return all(linalg.mats_equal(self.f(k), other.f(k)) for k in degs)


def homology_dimensions(c: ChainComplex) -> Dict[int, int]:
    """dim H_k = dim ker d_k - rank d_{k+1}, by exact elimination."""
    out = {}
    for k in c.degrees():
        n = c.dim(k)
        rk_out = linalg.rank(c.d(k)) if (n and c.dim(k - 1)) else 0
        rk_in = linalg.rank(c.d(k + 1)) if (c.dim(k + 1) and n) else 0
        h = n - rk_out - rk_in
        if h:
            out[k] = h
    return out


def mapping_cylinder(f: ChainMap):
    """Mapping cylinder of f : X -> Y.

    Returns (cyl, inclusion X -> cyl, projection cyl -> Y) with
    projection . inclusion = f and projection a surjective quasi-isomorphism.
    Cyl_k = X_k + X_{k-1} + Y_k with d(x, u, y) = (dx - u, -du, f(u) + dy).
    """
    X, Y = f.source, f.target
    degrees = sorted(set(X.degrees()) | {k + 1 for k in X.degrees()} | set(Y.degrees()))
    spaces = {}
    for k in degrees:
        entries = []
        entries += [(("x", k, i), X.spaces[k].basis[i][1], X.spaces[k].basis[i][2])
                    for i in range(X.dim(k))] if k in X.spaces else []
        entries += [(("u", k, i), (X.spaces[k - 1].basis[i][1] + 1) % 2, X.spaces[k - 1].basis[i][2])
                    for i in range(X.dim(k - 1))] if k - 1 in X.spaces else []
        entries += [(("y", k, i), Y.spaces[k].basis[i][1], Y.spaces[k].basis[i][2])
                    for i in range(Y.dim(k))] if k in Y.spaces else []
        if entries:
            spaces[k] = GradedSpace(tuple(entries))
    diff = {}
    for k in degrees:
        nx, nu, ny = X.dim(k), X.dim(k - 1), Y.dim(k)
        mx, mu, my = X.dim(k - 1), X.dim(k - 2), Y.dim(k - 1)
        ncols = nx + nu + ny
        nrows = mx + mu + my
        if ncols == 0 or nrows == 0:
            continue
        dX = X.d(k)
        dXu = X.d(k - 1)
        dY = Y.d(k)
        fu = f.f(k - 1)
        rows = []
        for i in range(nrows):
            row = [ZERO] * ncols
            if i < mx:
                for j in range(nx):
                    row[j] = dX[i][j]
                for j in range(nu):
                    row[nx + j] = -ONE if i == j else row[nx + j]
            elif i < mx + mu:
                ii = i - mx
                for j in range(nu):
                    row[nx + j] = -dXu[ii][j]
            else:
                ii = i - mx - mu
                for j in range(nu):
                    row[nx + j] = fu[ii][j]
                for j in range(ny):
                    row[nx + nu + j] = dY[ii][j]
            rows.append(tuple(row))
        diff[k] = tuple(rows)
    cyl = ChainComplex(spaces, diff)

    incl = {}
    for k in X.degrees():
        nx = X.dim(k)
        m = []
        for i in range(cyl.dim(k)):
            label = cyl.spaces[k].basis[i][0]
            row = [ZERO] * nx
            if label[0] == "x":
                row[label[2]] = ONE
            m.append(tuple(row))
        incl[k] = tuple(m)
    inclusion = ChainMap(X, cyl, incl)

    proj = {}
    for k in cyl.degrees():
        ny = Y.dim(k)
        if ny == 0:
            continue
        cols = []
        for i in range(cyl.dim(k)):
            label = cyl.spaces[k].basis[i][0]
            if label[0] == "x":
                col = tuple(f.f(k)[r][label[2]] for r in range(ny))
            elif label[0] == "y":
                col = tuple(ONE if r == label[2] else ZERO for r in range(ny))
            else:
                col = (ZERO,) * ny
            cols.append(col)
        proj[k] = linalg.column_stack(cols)
    projection = ChainMap(cyl, Y, proj)
    return cyl, inclusion, projection


def tensor_product(a: ChainComplex, b: ChainComplex):
    """Super tensor product of chain complexes.

    Returns (complex, index) where index maps ((ka, ia), (kb, ib)) to the
    position of the product basis vector in degree ka + kb.  The differential
    is d(x (x) y) = dx (x) y + (-1)^{deg x} x (x) dy.
    """
    pairs: Dict[int, List[Tuple[Tuple[int, int], Tuple[int, int]]]] = {}
    for ka in a.degrees():
        for kb in b.degrees():
            k = ka + kb
            for ia in range(a.dim(ka)):
                for ib in range(b.dim(kb)):
                    pairs.setdefault(k, []).append(((ka, ia), (kb, ib)))
    index = {}
    spaces = {}
    for k, plist in pairs.items():
        entries = []
        for pos, (pa, pb) in enumerate(plist):
            index[(pa, pb)] = (k, pos)
            la = a.spaces[pa[0]].basis[pa[1]]
            lb = b.spaces[pb[0]].basis[pb[1]]
            entries.append(((la[0], lb[0]), (la[1] + lb[1]) % 2, la[2] + lb[2]))
        spaces[k] = GradedSpace(tuple(entries))
    diff = {}
    for k, plist in pairs.items():
        if (k - 1) not in pairs and not any(True for _ in ()):
            pass
        rows = len(pairs.get(k - 1, []))
        if rows == 0:
            continue
        cols = [[ZERO] * len(plist) for _ in range(rows)]
        tgt_index = {pq: i for i, pq in enumerate(pairs[k - 1])}
        for j, ((ka, ia), (kb, ib)) in enumerate(plist):
            da = a.d(ka)
            for r in range(a.dim(ka - 1)):
                if da[r][ia]:
                    cols[tgt_index[((ka - 1, r), (kb, ib))]][j] += da[r][ia]
            db = b.d(kb)
            sign = -ONE if ka % 2 else ONE
            for r in range(b.dim(kb - 1)):
                if db[r][ib]:
                    cols[tgt_index[((ka, ia), (kb - 1, r))]][j] += sign * db[r][ib]
        diff[k] = tuple(tuple(row) for row in cols)
    return ChainComplex(spaces, diff), index


def _kernel_complex(p: ChainMap):
    """Subcomplex ker(p) with inclusion matrices per degree."""
    X = p.source
    kbases = {}
    for k in X.degrees():
        if p.target.dim(k) == 0:
            kbases[k] = [tuple(ONE if i == j else ZERO for j in range(X.dim(k)))
                         for i in range(X.dim(k))]
        else:
            kbases[k] = linalg.nullspace(p.f(k))
    spaces = {}
    incmat = {}
    for k, vecs in kbases.items():
        if not vecs:
            continue
        spaces[k] = GradedSpace.make([(("ker", k, i), k % 2) for i in range(len(vecs))])
        incmat[k] = linalg.column_stack(vecs)
    diff = {}
    for k in spaces:
        if k - 1 not in spaces:
            continue
        image = linalg.mat_mul(X.d(k), incmat[k])
        sol = linalg.solve_matrix(incmat[k - 1], image)
        if sol is None:
            raise HypothesisViolation("kernel is not a subcomplex")
        diff[k] = sol
    return ChainComplex(spaces, diff), incmat


def lift_against_acyclic_fibration(i: ChainMap, p: ChainMap,
                                   top: ChainMap, bottom: ChainMap) -> ChainMap:
    """Fill the square (i : A -> B, p : X -> Y acyclic fibration) with L : B -> X.

    Requires p.top = bottom.i, i injective, p surjective with acyclic kernel.
    The lift satisfies L.i = top and p.L = bottom; built degreewise from the
    bottom degree up by the usual chase, exactly over Q.
    """
    A, B = i.source, i.target
    X, Y = p.source, p.target
    if top.source is not A or top.target is not X:
        raise HypothesisViolation("top map must go A -> X")
    if bottom.source is not B or bottom.target is not Y:
        raise HypothesisViolation("bottom map must go B -> Y")
    if not i.is_injective():
        raise HypothesisViolation("i is not injective")
    if not p.is_surjective():
        raise HypothesisViolation("p is not surjective")
    ker, ker_inc = _kernel_complex(p)
    if homology_dimensions(ker):
        raise HypothesisViolation("kernel of p is not acyclic")
    for k in set(A.degrees()) | set(B.degrees()):
        if not linalg.mats_equal(linalg.mat_mul(p.f(k), top.f(k)),
                                 linalg.mat_mul(bottom.f(k), i.f(k))):
            raise HypothesisViolation(f"square does not commute at degree {k}")

    degrees = sorted(set(B.degrees()))
    comps: Dict[int, linalg.Matrix] = {}

    def L(k: int) -> linalg.Matrix:
        if k in comps:
            return comps[k]
        return linalg.zeros(X.dim(k), B.dim(k))

    for k in degrees:
        nb = B.dim(k)
        nx = X.dim(k)
        if nb == 0:
            continue
        # split B_k as im(i) plus standard vectors chosen greedily
        basis_cols: List[tuple] = []
        basis_src: List[tuple] = []  # ("im", a_index) or ("std", j)
        na = A.dim(k)
        for a_idx in range(na):
            basis_cols.append(tuple(i.f(k)[r][a_idx] for r in range(nb)))
            basis_src.append(("im", a_idx))
        current = linalg.column_stack(basis_cols) if basis_cols else None
        current_rank = linalg.rank(current) if basis_cols else 0
        for j in range(nb):
            if current_rank == nb:
                break
            e = tuple(ONE if t == j else ZERO for t in range(nb))
            cand = basis_cols + [e]
            m = linalg.column_stack(cand)
            if linalg.rank(m) > current_rank:
                basis_cols.append(e)
                basis_src.append(("std", j))
                current_rank += 1
        P = linalg.column_stack(basis_cols)
        dB = B.d(k)
        images = []
        for col, src in zip(basis_cols, basis_src):
            if src[0] == "im":
                a = tuple(ONE if t == src[1] else ZERO for t in range(na))
                images.append(linalg.mat_vec(top.f(k), a))
                continue
            bottom_val = linalg.mat_vec(bottom.f(k), col) if Y.dim(k) else ()
            z = linalg.mat_vec(L(k - 1), linalg.mat_vec(dB, col)) \
                if B.dim(k - 1) and X.dim(k - 1) else (ZERO,) * X.dim(k - 1)
            if Y.dim(k):
                x0 = linalg.solve(p.f(k), bottom_val)
                if x0 is None:
                    raise HypothesisViolation("p is not surjective")
            else:
                x0 = (ZERO,) * nx
            defect = tuple(a - b for a, b in
                           zip(linalg.mat_vec(X.d(k), x0), z)) if X.dim(k - 1) else ()
            if any(defect):
                # the defect is a cycle in ker p; peel it off as a boundary there
                if ker.dim(k) == 0 or ker.dim(k - 1) == 0:
                    raise HypothesisViolation("kernel of p is not acyclic")
                dk_inc = linalg.mat_mul(ker_inc[k - 1], ker.d(k))
                w = linalg.solve(dk_inc, defect)
                if w is None:
                    raise HypothesisViolation("kernel of p is not acyclic")
                corr = linalg.mat_vec(ker_inc[k], w)
                x0 = tuple(a - b for a, b in zip(x0, corr))
            images.append(tuple(x0))
        if nx:
            l_on_basis = linalg.column_stack(images)
            p_inv = linalg.solve_matrix(P, linalg.identity(nb))
            comps[k] = linalg.mat_mul(l_on_basis, p_inv)
        else:
            comps[k] = linalg.zeros(0, nb)
    lift = ChainMap(B, X, comps)
    # final verification of the two commuting triangles
    for k in degrees:
        if not linalg.mats_equal(linalg.mat_mul(lift.f(k), i.f(k)), top.f(k)):
            raise HypothesisViolation(f"lift fails L.i = top at degree {k}")
        if not linalg.mats_equal(linalg.mat_mul(p.f(k), lift.f(k)), bottom.f(k)):
            raise HypothesisViolation(f"lift fails p.L = bottom at degree {k}")
    return lift
