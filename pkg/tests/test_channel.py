import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfdfe.channel import (ChannelMatrix, SystemConfig, derive_rng, eig_basis, fix_column_phases,
                           generate_channel)
from lfdfe.errors import DomainError, RankDeficient

from conftest import haar_unitary, make_channel


def charpoly_faddeev(a):
    """Characteristic polynomial coefficients (highest degree first) by Faddeev-LeVerrier."""
    n = a.shape[0]
    coeffs = [1.0 + 0j]
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(a @ m) / k)
    return np.array(coeffs)


class TestSystemConfig:
    def test_valid(self):
        cfg = SystemConfig(4, 3, 2, p_total=2.0, sigma2_n=0.1)
        assert cfg.k == 2 and cfg.p_total == 2.0

    @pytest.mark.parametrize("kwargs", [
        dict(nt=2, nr=4, k=3),
        dict(nt=4, nr=2, k=3),
        dict(nt=0, nr=2, k=1),
        dict(nt=2, nr=2, k=0),
        dict(nt=2, nr=2, k=1, p_total=0.0),
        dict(nt=2, nr=2, k=1, sigma2_n=-1.0),
        dict(nt=2, nr=2, k=1, p_total=float("inf")),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            SystemConfig(**kwargs)

    def test_dict_roundtrip(self, tmp_path):
        cfg = SystemConfig(5, 4, 4, p_total=4.0, sigma2_n=0.25)
        assert SystemConfig.from_dict(cfg.to_dict()) == cfg
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert SystemConfig.from_json(path) == cfg

    def test_unknown_key(self):
        with pytest.raises(DomainError):
            SystemConfig.from_dict({"nt": 2, "nr": 2, "k": 1, "snr": 3})


class TestGeneration:
    def test_shape_and_determinism(self):
        cfg = SystemConfig(4, 3, 2)
        a = generate_channel(cfg, 1234)
        b = generate_channel(cfg, 1234)
        assert a.h.shape == (3, 4)
        assert np.array_equal(a.h, b.h)
        assert not np.array_equal(a.h, generate_channel(cfg, 1235).h)

    def test_indexed_draws_differ(self):
        cfg = SystemConfig(2, 2, 1)
        draws = [generate_channel(cfg, 5, i).h for i in range(4)]
        assert len({d.tobytes() for d in draws}) == 4
        assert np.array_equal(draws[2], generate_channel(cfg, 5, 2).h)

    def test_rng_streams_independent_of_order(self):
        fwd = [derive_rng(9, i).standard_normal() for i in range(5)]
        rev = [derive_rng(9, i).standard_normal() for i in reversed(range(5))][::-1]
        assert fwd == rev

    def test_moments(self):
        cfg = SystemConfig(10, 10, 1)
        h = np.stack([generate_channel(cfg, 77, i).h for i in range(1000)]).ravel()
        assert h.size == 10 ** 5
        assert abs(np.mean(np.abs(h) ** 2) - 1.0) < 0.02
        assert abs(h.real.mean()) < 0.02 and abs(h.imag.mean()) < 0.02
        assert abs(h.real.var() - 0.5) < 0.01 and abs(h.imag.var() - 0.5) < 0.01

    def test_channel_validation(self):
        cfg = SystemConfig(2, 2, 1)
        with pytest.raises(DomainError):
            ChannelMatrix(np.ones((3, 2)), cfg)
        with pytest.raises(DomainError):
            ChannelMatrix(np.array([[1, np.nan], [0, 1]]), cfg)

    def test_channel_immutable(self):
        ch = generate_channel(SystemConfig(2, 2, 1), 0)
        with pytest.raises(ValueError):
            ch.h[0, 0] = 0


class TestEigBasis:
    def test_diagonal(self):
        b = eig_basis(make_channel(np.diag([2.0, 1.0]), k=1), 1)
        assert np.allclose(b.lambda1, [4.0])
        assert np.allclose(b.u1[:, 0], [1.0, 0.0])

    def test_identity(self):
        b = eig_basis(make_channel(np.eye(3)), 3)
        assert np.allclose(b.lambda1, 1.0)
        assert np.allclose(b.u1.conj().T @ b.u1, np.eye(3))

    def test_against_characteristic_polynomial(self, rng):
        cfg = SystemConfig(3, 4, 2)
        for i in range(20):
            ch = generate_channel(cfg, 3, i)
            b = eig_basis(ch, 2)
            roots = np.sort(np.real(np.roots(charpoly_faddeev(ch.gram))))[::-1]
            assert np.allclose(b.lambda1, roots[:2], rtol=1e-8)
            assert np.allclose(ch.gram @ b.u1, b.u1 * b.lambda1, atol=1e-10 * roots[0])

    def test_invariants_random(self):
        cfg = SystemConfig(4, 4, 3)
        for i in range(50):
            ch = generate_channel(cfg, 11, i)
            b = eig_basis(ch)
            scale = np.linalg.norm(ch.h, 2) ** 2
            assert np.allclose(b.u1.conj().T @ b.u1, np.eye(3), atol=1e-10)
            assert np.all(np.diff(b.lambda1) <= 0) and np.all(b.lambda1 >= 0)
            assert np.abs(ch.gram @ b.u1 - b.u1 * b.lambda1).max() <= 1e-9 * scale

    def test_phase_convention(self):
        ch = generate_channel(SystemConfig(4, 4, 4), 2)
        u = eig_basis(ch).u1
        idx = np.argmax(np.abs(u), axis=0)
        pivots = u[idx, np.arange(4)]
        assert np.allclose(pivots.imag, 0.0, atol=1e-14) and np.all(pivots.real > 0)
        assert np.allclose(fix_column_phases(u), u)

    def test_rank_deficient(self):
        h = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(RankDeficient):
            eig_basis(make_channel(h), 2)
        with pytest.raises(RankDeficient):
            eig_basis(make_channel(np.zeros((2, 2))), 1)

    def test_k_out_of_range(self):
        with pytest.raises(DomainError):
            eig_basis(make_channel(np.eye(2)), 3)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_right_unitary_equivariance(self, seed):
        rng = np.random.default_rng(seed)
        ch = generate_channel(SystemConfig(4, 3, 3), seed)
        z = haar_unitary(rng, 4)
        rotated = ChannelMatrix(ch.h @ z, ch.config)
        a, b = eig_basis(ch).lambda1, eig_basis(rotated).lambda1
        assert np.allclose(a, b, rtol=1e-10, atol=1e-10 * a[0])
