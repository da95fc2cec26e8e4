"""Exact dense linear algebra over the rationals.

Matrices are tuples of tuples of Fraction, indexed [row][col].  Everything
is deterministic: Gaussian elimination always takes the first nonzero pivot
in column order, never a size heuristic.
"""

from fractions import Fraction
from typing import Sequence

Matrix = tuple  # tuple of row tuples of Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


def mat(rows) -> Matrix:
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


def zeros(nrows: int, ncols: int) -> Matrix:
    row = (ZERO,) * ncols
    return tuple(row for _ in range(nrows))


def identity(n: int) -> Matrix:
    return tuple(tuple(ONE if i == j else ZERO for j in range(n)) for i in range(n))


def shape(a: Matrix):
    return (len(a), len(a[0]) if a else 0)


def is_zero(a: Matrix) -> bool:
    return all(x == 0 for row in a for x in row)


def mats_equal(a: Matrix, b: Matrix) -> bool:
    """Entrywise equality, treating all shape-degenerate zero matrices alike."""
    if a == b:
        return True
    return is_zero(a) and is_zero(b)


def mat_add(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_sub(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_scale(c, a: Matrix) -> Matrix:
    c = Fraction(c)
    return tuple(tuple(c * x for x in row) for row in a)


def mat_mul(a: Matrix, b: Matrix) -> Matrix:
    n, k = shape(a)
    k2, m = shape(b)
    if n == 0:
        return ()
    if k != k2:
        # zero-dimensional matrices are stored as empty tuples and lose
        # their shape; any such product is a zero matrix
        if k == 0 or k2 == 0:
            return zeros(n, m)
        raise ValueError(f"shape mismatch {shape(a)} x {shape(b)}")
    bt = tuple(zip(*b)) if m else ()
    out = []
    for row in a:
        out.append(tuple(sum(x * y for x, y in zip(row, col)) for col in bt))
    return tuple(out)


def mat_vec(a: Matrix, v: Sequence[Fraction]):
    return tuple(sum(x * y for x, y in zip(row, v)) for row in a)


def transpose(a: Matrix) -> Matrix:
    n, m = shape(a)
    if n == 0 or m == 0:
        return tuple(() for _ in range(m))
    return tuple(zip(*a))


def rref(a: Matrix):
    """Reduced row echelon form.  Returns (R, pivot_columns)."""
    n, m = shape(a)
    rows = [list(r) for r in a]
    pivots = []
    r = 0
    for c in range(m):
        pivot_row = None
        for i in range(r, n):
            if rows[i][c] != 0:
                pivot_row = i
                break
        if pivot_row is None:
            continue
        rows[r], rows[pivot_row] = rows[pivot_row], rows[r]
        inv = ONE / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(n):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == n:
            break
    return tuple(tuple(row) for row in rows), tuple(pivots)


def rank(a: Matrix) -> int:
    return len(rref(a)[1])


def nullspace(a: Matrix):
    """Basis of ker(a) as a list of column vectors (tuples)."""
    n, m = shape(a)
    r, pivots = rref(a)
    pivset = set(pivots)
    free = [c for c in range(m) if c not in pivset]
    basis = []
    for fc in free:
        v = [ZERO] * m
        v[fc] = ONE
        for i, pc in enumerate(pivots):
            v[pc] = -r[i][fc]
        basis.append(tuple(v))
    return basis


def solve(a: Matrix, b: Sequence[Fraction]):
    """One particular solution of a x = b, or None if inconsistent."""
    n, m = shape(a)
    aug = tuple(tuple(row) + (Fraction(b[i]),) for i, row in enumerate(a))
    r, pivots = rref(aug)
    if m in pivots:
        return None
    x = [ZERO] * m
    for i, pc in enumerate(pivots):
        x[pc] = r[i][m]
    return tuple(x)


def column_stack(cols) -> Matrix:
    cols = list(cols)
    if not cols:
        return ()
    n = len(cols[0])
    return tuple(tuple(col[i] for col in cols) for i in range(n))


def hstack(a: Matrix, b: Matrix) -> Matrix:
    na, ma = shape(a)
    nb, mb = shape(b)
    if ma == 0:
        return b
    if mb == 0:
        return a
    if na != nb:
        raise ValueError("row mismatch in hstack")
    return tuple(ra + rb for ra, rb in zip(a, b))


def solve_matrix(a: Matrix, b: Matrix):
    """Particular solution X of a X = b (columnwise), or None."""
    n, m = shape(a)
    nb, k = shape(b)
    cols = []
    for j in range(k):
        x = solve(a, tuple(b[i][j] for i in range(nb)))
        if x is None:
            return None
        cols.append(x)
    if not cols:
        return zeros(m, 0)
    return column_stack(cols)


def in_span(vectors, v) -> bool:
    """Whether v lies in the span of the given row vectors."""
    if all(x == 0 for x in v):
        return True
    if not vectors:
        return False
    a = column_stack(vectors)
    return solve(a, v) is not None
