import json
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from spectra_rrqr import (
    SketchConfig,
    SketchOperator,
    apply,
    cos_angle,
    cos_angle_subspace,
    embedding_distortion,
    fwht,
    haar_orthogonal,
    materialize,
    next_pow2,
    ose_dim,
    pad_rows_pow2,
    singular_values,
)
from spectra_rrqr.sketch import _gaussian_block


def rng(seed=0):
    return np.random.default_rng(seed)


class TestFwht:
    def test_pair(self):
        assert np.allclose(fwht([1.0, 1.0]), [2.0, 0.0])

    def test_unit_vector(self):
        assert np.allclose(fwht([1.0, 0.0, 0.0, 0.0]), [1.0, 1.0, 1.0, 1.0])

    def test_dense_hadamard_oracle(self):
        v = rng(1).standard_normal(16)
        assert np.allclose(fwht(v), scipy.linalg.hadamard(16) @ v, atol=1e-12)

    def test_matrix_columns(self):
        m = rng(2).standard_normal((8, 3))
        h = scipy.linalg.hadamard(8)
        assert np.allclose(fwht(m), h @ m, atol=1e-12)

    @settings(deadline=None, max_examples=30)
    @given(st.integers(0, 6), st.integers(0, 2**32 - 1))
    def test_involution(self, log_m, seed):
        m = 2**log_m
        v = rng(seed).standard_normal(m)
        back = fwht(fwht(v))
        assert np.allclose(back, m * v, rtol=1e-12, atol=1e-12)

    def test_non_power_of_two(self):
        with pytest.raises(ValueError, match="power of two"):
            fwht(np.ones(6))


class TestPadding:
    def test_next_pow2(self):
        assert [next_pow2(x) for x in (1, 2, 3, 8, 9)] == [1, 2, 4, 8, 16]

    def test_pad_rows(self):
        m = np.ones((6, 2))
        p = pad_rows_pow2(m)
        assert p.shape == (8, 2)
        assert np.allclose(p[:6], 1.0) and np.allclose(p[6:], 0.0)

    def test_pad_noop(self):
        m = np.ones((8, 2))
        assert pad_rows_pow2(m).shape == (8, 2)


class TestOperator:
    def test_same_seed_identical(self):
        a = materialize(SketchOperator("srht", d=8, m=32, seed=9))
        b = materialize(SketchOperator("srht", d=8, m=32, seed=9))
        assert np.array_equal(a, b)
        g1 = materialize(SketchOperator("gaussian", d=5, m=20, seed=9))
        g2 = materialize(SketchOperator("gaussian", d=5, m=20, seed=9))
        assert np.array_equal(g1, g2)

    def test_srht_needs_pow2(self):
        with pytest.raises(ValueError, match="power-of-two"):
            SketchOperator("srht", d=4, m=12, seed=0)

    def test_d_cannot_exceed_m(self):
        with pytest.raises(ValueError, match="exceeds"):
            SketchOperator("gaussian", d=10, m=5, seed=0)

    def test_identity_requires_square(self):
        with pytest.raises(ValueError, match="d == m"):
            SketchOperator("identity", d=3, m=4, seed=0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown sketch kind"):
            SketchOperator("fourier", d=2, m=4, seed=0)

    def test_json_roundtrip_rederives(self):
        op = SketchOperator("srht", d=8, m=64, seed=1234)
        clone = SketchOperator.from_json(op.to_json())
        assert json.loads(op.to_json()) == {
            "kind": "srht",
            "d": 8,
            "m": 64,
            "seed": 1234,
        }
        assert np.array_equal(op.signs, clone.signs)
        assert np.array_equal(op.sample_idx, clone.sample_idx)
        assert np.array_equal(materialize(op), materialize(clone))


class TestApply:
    def test_gaussian_zero_matrix(self):
        op = SketchOperator("gaussian", d=6, m=50, seed=3)
        assert np.max(np.abs(apply(op, np.zeros((50, 4))))) == 0.0

    def test_srht_unit_vector_against_dense_oracle(self):
        op = SketchOperator("srht", d=8, m=32, seed=7)
        dense = (
            scipy.linalg.hadamard(32)[op.sample_idx, :]
            * op.signs[None, :]
            / math.sqrt(8)
        )
        e1 = np.zeros((32, 1))
        e1[0, 0] = 1.0
        assert np.allclose(apply(op, e1), dense @ e1, atol=1e-12)
        m = rng(4).standard_normal((32, 5))
        assert np.allclose(apply(op, m), dense @ m, atol=1e-12)

    def test_linearity(self):
        for kind in ("srht", "gaussian"):
            op = SketchOperator(kind, d=16, m=64, seed=5)
            g = rng(6)
            x, y = g.standard_normal((64, 3)), g.standard_normal((64, 3))
            lhs = apply(op, 2.5 * x - 1.5 * y)
            rhs = 2.5 * apply(op, x) - 1.5 * apply(op, y)
            assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))

    def test_dimension_mismatch(self):
        op = SketchOperator("srht", d=4, m=16, seed=0)
        with pytest.raises(ValueError, match="rows"):
            apply(op, np.ones((8, 2)))

    def test_gaussian_blocking_invariant(self):
        # counter-based generation: splitting the column range anywhere
        # yields the same operator entries
        full = _gaussian_block(11, 7, 0, 60)
        split = np.hstack(
            [_gaussian_block(11, 7, 0, 13), _gaussian_block(11, 7, 13, 60)]
        )
        assert np.array_equal(full, split)

    def test_measured_norm_distortion_is_moderate(self):
        # 1024x20 orthonormal columns, d=256: deviations of sketched squared
        # norms over 1000 random unit vectors stay well inside 0.6
        g = rng(7)
        m = haar_orthogonal(g, 1024, 20)
        op = SketchOperator("srht", d=256, m=1024, seed=11)
        sm = apply(op, m)
        coeffs = g.standard_normal((20, 1000))
        coeffs /= np.linalg.norm(coeffs, axis=0)
        devs = np.abs(np.linalg.norm(sm @ coeffs, axis=0) ** 2 - 1.0)
        assert float(np.max(devs)) < 0.6


class TestDistortion:
    def test_identity_stub_is_exact(self):
        op = SketchOperator("identity", d=16, m=16, seed=0)
        assert embedding_distortion(op, np.eye(16)[:, :5]) == 0.0

    def test_undersized_sketch_reports_one(self):
        op = SketchOperator("gaussian", d=3, m=64, seed=0)
        basis = haar_orthogonal(rng(0), 64, 5)
        assert embedding_distortion(op, basis) == 1.0

    def test_requires_orthonormal_basis(self):
        op = SketchOperator("gaussian", d=8, m=16, seed=0)
        with pytest.raises(ValueError, match="orthonormal"):
            embedding_distortion(op, np.ones((16, 2)))

    def test_certifies_every_vector_in_span(self):
        op = SketchOperator("srht", d=64, m=256, seed=3)
        basis = haar_orthogonal(rng(5), 256, 6)
        eps = embedding_distortion(op, basis)
        g = rng(6)
        for _ in range(200):
            c = g.standard_normal(6)
            c /= np.linalg.norm(c)
            x = basis @ c
            dev = abs(np.linalg.norm(apply(op, x[:, None])) ** 2 - 1.0)
            assert dev <= eps * (1 + 1e-10)

    def test_distortion_shrinks_with_sketch_size(self):
        # at d ~ 10n every seed embeds with distortion below 1; quadrupling
        # d from 4n visibly helps (the 4n regime does not reach 0.5)
        eps_small, eps_big = [], []
        for seed in range(100):
            basis = haar_orthogonal(rng(1000 + seed), 1024, 25)
            for d, out in ((100, eps_small), (256, eps_big)):
                op = SketchOperator("srht", d=d, m=1024, seed=seed)
                out.append(embedding_distortion(op, basis))
        assert sum(e < 1.0 for e in eps_big) >= 95
        assert np.median(eps_big) < np.median(eps_small)


class TestOseDim:
    def test_benchmark_default_value(self):
        # floor(3*500*log(8192)/log(500)) evaluates to 2174 (ratio 2174.94)
        assert ose_dim(0.25, 0.1, 500, 8192) == 2174

    def test_clamp_to_m(self):
        assert ose_dim(0.25, 0.1, 64, 64) == 64

    def test_floor_guard(self):
        assert ose_dim(0.25, 0.1, 1, 2) == 2

    def test_theory_policies(self):
        g = ose_dim(0.5, 0.1, 20, 4096, kind="gaussian", policy="theory")
        s = ose_dim(0.5, 0.1, 20, 4096, kind="srht", policy="theory")
        assert g >= 21 and s >= 21
        assert (
            ose_dim(0.5, 0.1, 20, 4096, kind="srht", policy="theory", constant=2.0)
            >= s
        )

    def test_unknown_policy(self):
        with pytest.raises(ValueError, match="policy"):
            ose_dim(0.25, 0.1, 8, 64, policy="magic")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SketchConfig(epsilon=1.5, delta=0.1, subspace_dim=4, d=16)
        with pytest.raises(ValueError):
            SketchConfig(epsilon=0.5, delta=0.0, subspace_dim=4, d=16)


class TestSandwiches:
    """Measured-distortion transfer bounds on small instances."""

    def test_singular_value_sandwich(self):
        m = rng(20).standard_normal((256, 12))
        basis = np.linalg.qr(m)[0]
        for seed in range(5):
            op = SketchOperator("srht", d=128, m=256, seed=seed)
            eps = embedding_distortion(op, basis)
            assert eps < 1.0
            quot = singular_values(apply(op, m)) / singular_values(m)
            assert np.all(quot <= math.sqrt(1 + eps) * (1 + 1e-12))
            assert np.all(quot >= math.sqrt(1 - eps) * (1 - 1e-12))

    def test_residual_sandwich(self):
        g = rng(21)
        a = g.standard_normal((64, 6))
        b = g.standard_normal(64)
        basis = np.linalg.qr(np.hstack([a, b[:, None]]))[0]
        op = SketchOperator("srht", d=64, m=64, seed=4)
        eps = embedding_distortion(op, basis)
        assert eps < 1.0
        a_sk, b_sk = apply(op, a), apply(op, b[:, None])[:, 0]
        x_hat = np.linalg.lstsq(a_sk, b_sk, rcond=None)[0]
        sk_resid = np.linalg.norm(a_sk @ x_hat - b_sk)
        true_min = np.linalg.norm(a @ np.linalg.lstsq(a, b, rcond=None)[0] - b)
        assert sk_resid / math.sqrt(1 + eps) <= true_min * (1 + 1e-12)
        assert true_min <= sk_resid / math.sqrt(1 - eps) * (1 + 1e-12)

    def test_angle_sandwich_vectors(self):
        g = rng(22)
        basis = haar_orthogonal(g, 256, 8)
        op = SketchOperator("srht", d=128, m=256, seed=6)
        eps = embedding_distortion(op, basis)
        for _ in range(20):
            v1 = basis @ g.standard_normal(8)
            v2 = basis @ g.standard_normal(8)
            c = cos_angle(v1, v2)
            c_sk = cos_angle(
                apply(op, v1[:, None])[:, 0], apply(op, v2[:, None])[:, 0]
            )
            assert (c - eps) / (1 + eps) - 1e-12 <= c_sk
            assert c_sk <= (c + eps) / (1 - eps) + 1e-12

    def test_angle_sandwich_vector_subspace(self):
        g = rng(23)
        basis = haar_orthogonal(g, 256, 8)
        op = SketchOperator("srht", d=128, m=256, seed=8)
        eps = embedding_distortion(op, basis)
        sub = basis[:, :3]
        for _ in range(20):
            v = basis @ g.standard_normal(8)
            c = cos_angle_subspace(v, sub)
            c_sk = cos_angle_subspace(apply(op, v[:, None])[:, 0], apply(op, sub))
            assert (c - eps) / (1 + eps) - 1e-12 <= c_sk
            assert c_sk <= (c + eps) / (1 - eps) + 1e-12
