import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from sft_chainlab import linalg
from sft_chainlab import graded_linear as gl
from sft_chainlab.errors import HypothesisViolation, InvalidInput


def compose_perms(s, t):
    # (s after t): position i receives t[s[i]]... keep one fixed convention
    return [t[s[i]] for i in range(len(s))]


class TestKoszulSign:
    def test_identity(self):
        assert gl.koszul_sign([0, 1, 2], [1, 1, 1]) == 1

    def test_odd_swap(self):
        assert gl.koszul_sign([1, 0], [1, 1]) == -1

    def test_even_factor_commutes(self):
        assert gl.koszul_sign([1, 0], [1, 0]) == 1
        assert gl.koszul_sign([1, 0], [0, 1]) == 1

    def test_length_mismatch(self):
        with pytest.raises(InvalidInput):
            gl.koszul_sign([0, 1], [1])

    def test_not_a_permutation(self):
        with pytest.raises(InvalidInput):
            gl.koszul_sign([0, 0], [1, 1])

    @given(st.data())
    @settings(max_examples=200, deadline=None)
    def test_homomorphism(self, data):
        n = data.draw(st.integers(2, 6))
        parities = data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
        base = list(range(n))
        s = data.draw(st.permutations(base))
        t = data.draw(st.permutations(base))
        st_perm = [s[t[i]] for i in range(n)]
        lhs = gl.koszul_sign(st_perm, parities)
        rhs = gl.koszul_sign(s, parities) * gl.koszul_sign(
            t, [parities[s[i]] for i in range(n)])
        assert lhs == rhs


def random_complex(rng, max_dim=3, degrees=(0, 1, 2, 3)):
    dims = {k: rng.randint(0, max_dim) for k in degrees}
    # build a valid differential degree by degree: each d_k must map into
    # the kernel of d_{k-1}
    diffs = {}
    prev = None
    for k in sorted(dims):
        if k - 1 not in dims or dims[k] == 0 or dims[k - 1] == 0:
            prev = None
            continue
        cols = []
        if prev is None:
            kernel = [tuple(Fraction(1) if i == j else Fraction(0)
                            for i in range(dims[k - 1]))
                      for j in range(dims[k - 1])]
        else:
            kernel = linalg.nullspace(prev)
        for _ in range(dims[k]):
            col = [Fraction(0)] * dims[k - 1]
            for vec in kernel:
                if rng.random() < 0.5:
                    c = Fraction(rng.randint(-2, 2))
                    col = [a + c * b for a, b in zip(col, vec)]
            cols.append(tuple(col))
        mat = linalg.column_stack(cols) if cols else ()
        if mat and not linalg.is_zero(mat):
            diffs[k] = mat
            prev = mat
        else:
            prev = None
    return gl.ChainComplex.from_dims(dims, diffs)


def rank_nullity_homology(c):
    """Independent recomputation from scratch ranks."""
    out = {}
    for k in c.degrees():
        n = c.dim(k)
        rk = linalg.rank(c.d(k))
        rk_in = linalg.rank(c.d(k + 1))
        h = n - rk - rk_in
        if h:
            out[k] = h
    return out


class TestHomology:
    def test_zero_differential(self):
        c = gl.ChainComplex.from_dims({0: 2, 1: 3}, {})
        assert gl.homology_dimensions(c) == {0: 2, 1: 3}

    def test_identity_differential(self):
        c = gl.ChainComplex.from_dims({0: 1, 1: 1}, {1: linalg.identity(1)})
        assert gl.homology_dimensions(c) == {}

    def test_random_against_oracle(self):
        rng = random.Random(7)
        for _ in range(25):
            c = random_complex(rng)
            assert gl.homology_dimensions(c) == rank_nullity_homology(c)

    def test_euler_characteristic(self):
        rng = random.Random(8)
        for _ in range(25):
            c = random_complex(rng)
            h = gl.homology_dimensions(c)
            chi_h = sum((-1) ** k * v for k, v in h.items())
            assert c.euler_characteristic() == chi_h

    def test_dd_nonzero_rejected(self):
        with pytest.raises(InvalidInput):
            gl.ChainComplex.from_dims(
                {0: 1, 1: 1, 2: 1},
                {1: linalg.identity(1), 2: linalg.identity(1)})


def random_chain_map(rng, x, y):
    """A random null-homotopic chain map x -> y: d h + h d for random h."""
    h = {}
    for k in sorted(set(x.degrees())):
        nx, ny = x.dim(k), y.dim(k + 1)
        if nx and ny:
            h[k] = tuple(tuple(Fraction(rng.randint(-2, 2)) for _ in range(nx))
                         for _ in range(ny))
    comps = {}
    for k in sorted(set(x.degrees()) | set(y.degrees())):
        nx, ny = x.dim(k), y.dim(k)
        if nx == 0 or ny == 0:
            continue
        total = linalg.zeros(ny, nx)
        if k in h:
            total = linalg.mat_add(total, linalg.mat_mul(y.d(k + 1), h[k]))
        if k - 1 in h and x.dim(k - 1):
            part = linalg.mat_mul(h[k - 1], x.d(k))
            if not linalg.is_zero(part):
                total = linalg.mat_add(total, part)
        comps[k] = total
    return gl.ChainMap(x, y, comps)


class TestMappingCylinder:
    def test_identity_cylinder(self):
        c = gl.ChainComplex.from_dims({0: 2, 1: 1},
                                      {1: linalg.mat([[1], [0]])})
        cyl, inc, proj = gl.mapping_cylinder(gl.ChainMap.identity(c))
        assert gl.homology_dimensions(cyl) == gl.homology_dimensions(c)
        assert proj.is_surjective()
        assert proj.compose(inc) == gl.ChainMap.identity(c)

    def test_zero_into_zero_complex(self):
        c = gl.ChainComplex.from_dims({0: 1, 1: 1}, {1: linalg.identity(1)})
        z = gl.zero_complex()
        cyl, inc, proj = gl.mapping_cylinder(gl.ChainMap.zero(c, z))
        # the cone of the identity is acyclic
        assert gl.homology_dimensions(cyl) == {}

    def test_random_projection_quasi_iso(self):
        rng = random.Random(21)
        for _ in range(15):
            x = random_complex(rng, max_dim=2)
            y = random_complex(rng, max_dim=2)
            f = random_chain_map(rng, x, y)
            cyl, inc, proj = gl.mapping_cylinder(f)
            assert gl.homology_dimensions(cyl) == gl.homology_dimensions(y)
            assert proj.is_surjective()
            assert proj.compose(inc) == f


class TestLifting:
    def test_iso_i(self):
        c = gl.ChainComplex.from_dims({0: 2}, {})
        i = gl.ChainMap.identity(c)
        x, xinc, p = gl.mapping_cylinder(gl.ChainMap.identity(c))
        top = xinc
        bottom = p.compose(top)
        lift = gl.lift_against_acyclic_fibration(i, p, top, bottom)
        # i is the identity, so the lift is exactly the top map
        assert lift == top

    def test_zero_target(self):
        a = gl.ChainComplex.from_dims({0: 1}, {})
        b = gl.ChainComplex.from_dims({0: 2}, {})
        i = gl.ChainMap(a, b, {0: linalg.mat([[1], [0]])})
        x = gl.ChainComplex.from_dims({0: 1, 1: 1}, {1: linalg.identity(1)})
        y = gl.zero_complex()
        p = gl.ChainMap.zero(x, y)
        top = gl.ChainMap(a, x, {0: linalg.mat([[1]])})
        bottom = gl.ChainMap.zero(b, y)
        lift = gl.lift_against_acyclic_fibration(i, p, top, bottom)
        assert lift.compose(i) == top

    def test_randomized(self):
        rng = random.Random(33)
        done = 0
        while done < 10:
            # build p as a cylinder projection: always a surjective qis
            y = random_complex(rng, max_dim=2)
            f = gl.ChainMap.identity(y)
            x, _, p = gl.mapping_cylinder(f)
            # build i as an inclusion of a subcomplex of b
            b = random_complex(rng, max_dim=2)
            keep = {k: rng.randint(0, b.dim(k)) for k in b.degrees()}
            # lower truncation is a subcomplex; use degree cut instead
            cut = rng.choice(b.degrees()) if b.degrees() else 0
            adims = {k: b.dim(k) for k in b.degrees() if k <= cut}
            adiffs = {k: b.d(k) for k in adims if k - 1 in adims}
            a = gl.ChainComplex.from_dims(adims, adiffs)
            icomp = {k: linalg.identity(a.dim(k)) for k in a.degrees()}
            i = gl.ChainMap(a, b, icomp)
            bottom = random_chain_map(rng, b, y)
            top_comp = {}
            for k in a.degrees():
                top_comp[k] = linalg.mat_mul(
                    linalg.mat_mul(p.f(k), linalg.zeros(x.dim(k), x.dim(k))),
                    linalg.zeros(x.dim(k), a.dim(k)))
            # choose top := section-free solution of p top = bottom i by lifting
            # the zero map then correcting; easiest: top = s . bottom . i where
            # s is the cylinder inclusion of y
            cylinc = None
            _, cylinc, _ = gl.mapping_cylinder(f)
            top = cylinc.compose(bottom.compose(i))
            lift = gl.lift_against_acyclic_fibration(i, p, top, bottom)
            for k in set(b.degrees()):
                assert linalg.mats_equal(
                    linalg.mat_mul(lift.f(k), i.f(k)), top.f(k))
                assert linalg.mats_equal(
                    linalg.mat_mul(p.f(k), lift.f(k)), bottom.f(k))
            done += 1

    def test_hypothesis_violation_named(self):
        a = gl.ChainComplex.from_dims({0: 1}, {})
        b = gl.ChainComplex.from_dims({0: 1}, {})
        x = gl.ChainComplex.from_dims({0: 1}, {})
        y = gl.ChainComplex.from_dims({0: 2}, {})
        i = gl.ChainMap(a, b, {0: linalg.identity(1)})
        p = gl.ChainMap(x, y, {0: linalg.mat([[1], [0]])})  # not surjective
        top = gl.ChainMap(a, x, {0: linalg.identity(1)})
        bottom = gl.ChainMap(b, y, {0: linalg.mat([[1], [0]])})
        with pytest.raises(HypothesisViolation, match="surjective"):
            gl.lift_against_acyclic_fibration(i, p, top, bottom)


class TestTensorProduct:
    def test_dd_zero_and_dims(self):
        rng = random.Random(5)
        for _ in range(10):
            a = random_complex(rng, max_dim=2, degrees=(0, 1))
            b = random_complex(rng, max_dim=2, degrees=(0, 1))
            t, _ = gl.tensor_product(a, b)  # constructor checks d.d = 0
            assert t.total_dim() == a.total_dim() * b.total_dim()
            ha = gl.homology_dimensions(a)
            hb = gl.homology_dimensions(b)
            ht = gl.homology_dimensions(t)
            kunneth = {}
            for i, x in ha.items():
                for j, y in hb.items():
                    kunneth[i + j] = kunneth.get(i + j, 0) + x * y
            assert ht == {k: v for k, v in kunneth.items() if v}
