import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lfdfe.channel import ChannelMatrix, SystemConfig, eig_basis, generate_channel
from lfdfe.codebook import random_stiefel
from lfdfe.errors import DomainError, RankDeficient
from lfdfe.objectives import eval_objective, majorizes
from lfdfe.zfdfe import (Precoder, batch_log_mse, design_receiver, linear_receiver,
                         linear_zf_analysis, mse_analysis, optimal_linear_precoder,
                         optimal_normalized_precoder, optimal_precoder)

from conftest import crandn, haar_unitary, make_channel


def cholesky_oracle(a):
    """Element-wise Cholesky (Cholesky-Banachiewicz) of a Hermitian PD matrix."""
    n = a.shape[0]
    l = np.zeros_like(a, dtype=complex)
    for i in range(n):
        for j in range(i + 1):
            acc = sum(l[i, m] * np.conj(l[j, m]) for m in range(j))
            if i == j:
                l[i, i] = np.sqrt((a[i, i] - acc).real)
            else:
                l[i, j] = (a[i, j] - acc) / l[j, j]
    return l


class TestMseAnalysis:
    def test_identity(self):
        a = mse_analysis(make_channel(np.eye(2), sigma2_n=0.5), Precoder(np.eye(2)))
        assert np.allclose(a.n, 0.5 * np.eye(2))
        assert np.allclose(a.log_mse, np.log([0.5, 0.5]))
        assert np.allclose(a.snr, [2.0, 2.0])

    def test_diagonal(self):
        a = mse_analysis(make_channel(np.diag([2.0, 1.0])), Precoder(np.eye(2)))
        assert np.allclose(a.n, np.diag([0.25, 1.0]))
        assert np.allclose(a.l_chol, np.diag([0.5, 1.0]))
        assert np.allclose(a.snr, [4.0, 1.0])

    def test_random_against_oracles(self, rng):
        h = crandn(rng, 3, 3)
        p = crandn(rng, 3, 3)
        sigma2 = 0.3
        ch = make_channel(h, sigma2_n=sigma2, p_total=100.0)
        a = mse_analysis(ch, Precoder(p))
        hp = h @ p
        n_direct = sigma2 * np.linalg.inv(hp.conj().T @ hp)
        assert np.allclose(a.n, n_direct, rtol=1e-10)
        l = cholesky_oracle(n_direct)
        assert np.allclose(a.l_chol, l, rtol=1e-9, atol=1e-12)
        assert np.allclose(a.log_mse, 2 * np.log(np.real(np.diag(l))))
        # MSE matrix evaluated from its defining expression with the designed G and C
        d = design_receiver(ch, Precoder(p))
        g, c = d.g, d.c
        e = (c @ c.conj().T - c @ hp.conj().T @ g.conj().T - g @ hp @ c.conj().T
             + g @ (hp @ hp.conj().T + sigma2 * np.eye(3)) @ g.conj().T)
        assert np.allclose(e, np.diag(np.exp(a.log_mse)), atol=1e-10)

    def test_invariants(self):
        cfg = SystemConfig(4, 4, 3, p_total=3.0, sigma2_n=0.2)
        rng = np.random.default_rng(1)
        for i in range(100):
            ch = generate_channel(cfg, 4, i)
            a = mse_analysis(ch, Precoder(random_stiefel(rng, 4, 3), normalized=True))
            assert np.allclose(a.l_chol @ a.l_chol.conj().T, a.n, rtol=1e-9)
            assert np.allclose(a.snr, np.exp(-a.log_mse))
            assert a.log_mse.sum() == pytest.approx(np.log(np.linalg.det(a.n).real), abs=1e-9)
            assert np.all(np.diff(a.eigs_n) <= 0)
            mean = np.full(3, a.log_mse.mean())
            assert majorizes(mean, a.log_mse)
            assert majorizes(a.log_mse, np.log(a.eigs_n))

    def test_rank_deficient(self):
        ch = make_channel(np.eye(3))
        p = np.zeros((3, 2), dtype=complex)
        p[0, 0] = p[0, 1] = 1.0
        with pytest.raises(RankDeficient):
            mse_analysis(ch, Precoder(p))
        with pytest.raises(RankDeficient):
            design_receiver(ch, Precoder(p))

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            mse_analysis(make_channel(np.eye(3)), Precoder(np.eye(2)))


class TestReceiver:
    def test_identity_channel(self):
        d = design_receiver(make_channel(np.eye(2)), Precoder(np.eye(2)))
        assert np.allclose(d.c, np.eye(2)) and np.allclose(d.b, 0) and np.allclose(d.g, np.eye(2))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
    def test_structure(self, seed, k):
        ch = generate_channel(SystemConfig(4, 4, k, p_total=float(k), sigma2_n=0.7), seed)
        rng = np.random.default_rng(seed)
        d = design_receiver(ch, Precoder(random_stiefel(rng, 4, k), normalized=True))
        hp = ch.h @ d.precoder.p
        assert np.array_equal(d.c, np.eye(k) + d.b)
        assert np.all(np.diag(d.c) == 1.0)
        assert np.allclose(np.triu(d.b), 0)
        assert np.linalg.norm(d.g @ hp - d.b - np.eye(k)) <= 1e-9
        e = d.c @ d.analysis.n @ d.c.conj().T
        assert np.allclose(e, np.diag(np.exp(d.analysis.log_mse)), rtol=1e-8, atol=1e-12)

    def test_monte_carlo_error_covariance(self):
        rng = np.random.default_rng(5)
        ch = make_channel(crandn(rng, 4, 3), sigma2_n=0.5, p_total=3.0)
        d = design_receiver(ch, Precoder(haar_unitary(rng, 3), normalized=True))
        s = (rng.integers(0, 2, (3, 100_000)) * 2 - 1).astype(complex)
        noise = np.sqrt(0.25) * (rng.standard_normal((4, 100_000)) + 1j * rng.standard_normal((4, 100_000)))
        y = ch.h @ d.precoder.p @ s + noise
        e = d.g @ y - d.b @ s - s  # correct previous decisions
        cov = e @ e.conj().T / s.shape[1]
        target = np.diag(np.exp(d.analysis.log_mse))
        assert np.allclose(cov, target, atol=0.02 * target.max())

    def test_linear_receiver(self):
        rng = np.random.default_rng(3)
        ch = make_channel(crandn(rng, 4, 4), p_total=2.0, k=2)
        p = Precoder(random_stiefel(rng, 4, 2), normalized=True)
        d = linear_receiver(ch, p)
        hp = ch.h @ d.precoder.p
        assert np.allclose(d.g @ hp, np.eye(2))
        assert np.allclose(d.b, 0)
        assert np.allclose(d.analysis.log_mse, np.log(np.real(np.diag(d.analysis.n))))


class TestOptimalPrecoder:
    def test_identity(self):
        ch = make_channel(np.eye(2), p_total=2.0)
        p = optimal_precoder(ch)
        a = mse_analysis(ch, p)
        assert np.allclose(a.mse, 1.0) and np.allclose(a.snr, 1.0)
        assert p.power() == pytest.approx(2.0)

    def test_det_identity(self):
        ch = make_channel(np.diag([2.0, 1.0]), p_total=2.0)
        a = mse_analysis(ch, optimal_precoder(ch))
        lam = np.array([4.0, 1.0])
        det_n = 1.0 * (2 / 2.0) ** 2 / lam.prod()
        assert np.linalg.det(a.n).real == pytest.approx(det_n)
        assert np.allclose(a.mse, det_n ** 0.5) and np.allclose(a.snr, 2.0)

    def test_equalization_and_det(self):
        for k in (2, 3, 4):
            cfg = SystemConfig(4, 4, k, p_total=1.5, sigma2_n=0.3)
            for i in range(100):
                ch = generate_channel(cfg, 8, i)
                p = optimal_precoder(ch)
                assert p.power() == pytest.approx(1.5)
                a = mse_analysis(ch, p)
                assert a.log_mse.max() - a.log_mse.min() <= 1e-8
                lam = eig_basis(ch).lambda1
                log_det = k * np.log(0.3) + k * np.log(k / 1.5) - np.log(lam).sum()
                assert np.allclose(a.log_mse, log_det / k, atol=1e-9)

    def test_right_unitary_invariance(self, rng):
        ch = generate_channel(SystemConfig(4, 3, 3), 17)
        z = haar_unitary(rng, 4)
        a = mse_analysis(ch, optimal_precoder(ch)).log_mse
        rot = ChannelMatrix(ch.h @ z, ch.config)
        b = mse_analysis(rot, optimal_precoder(rot)).log_mse
        assert np.allclose(a, b, atol=1e-10)

    def test_normalized(self):
        ch = generate_channel(SystemConfig(5, 4, 3), 2)
        pbar = optimal_normalized_precoder(ch)
        assert pbar.normalized
        assert np.allclose(pbar.p.conj().T @ pbar.p, np.eye(3), atol=1e-10)
        assert np.allclose(pbar.scaled(3.0).p, optimal_precoder(ch.__class__(ch.h, ch.config.replace(p_total=3.0))).p)

    def test_optimality_spot_check(self):
        """Optimal precoder beats random unitary competitors of equal power."""
        rng = np.random.default_rng(21)
        cfg = SystemConfig(4, 4, 2, p_total=2.0, sigma2_n=0.1)
        for i in range(200):
            ch = generate_channel(cfg, 31, i)
            opt = mse_analysis(ch, optimal_precoder(ch)).log_mse
            comps = np.stack([random_stiefel(rng, 4, 2) for _ in range(200)])
            logs = batch_log_mse(ch.h, comps, cfg.p_total, cfg.sigma2_n)
            for kind in ("sum-mse", "max-mse", "avg-ber", "mutual-info"):
                assert eval_objective(kind, opt) <= eval_objective(kind, logs).min() + 1e-9

    def test_not_optimal_for_mutual_info(self):
        """Equal MSEs are the worst rotation for the (Schur-concave) rate objective."""
        cfg = SystemConfig(4, 4, 2, p_total=2.0, sigma2_n=1.0)
        for i in range(50):
            ch = generate_channel(cfg, 31, i)
            opt = mse_analysis(ch, optimal_precoder(ch)).log_mse
            eig = mse_analysis(ch, Precoder(eig_basis(ch).u1, normalized=True)).log_mse
            assert eval_objective("prod-mse", opt) == pytest.approx(eval_objective("prod-mse", eig))
            assert eval_objective("mutual-info", eig) < eval_objective("mutual-info", opt)

    def test_prod_mse_matches_linear(self):
        """Product of MSEs: the optimal DFE and the best linear design tie."""
        cfg = SystemConfig(4, 4, 3, p_total=3.0, sigma2_n=0.5)
        for i in range(50):
            ch = generate_channel(cfg, 12, i)
            dfe = mse_analysis(ch, optimal_precoder(ch)).log_mse
            basis = eig_basis(ch)
            lin = linear_zf_analysis(ch, Precoder(basis.u1, normalized=True)).log_mse
            assert eval_objective("prod-mse", dfe) == pytest.approx(eval_objective("prod-mse", lin), abs=1e-8)


class TestLinear:
    def test_diagonal(self):
        a = linear_zf_analysis(make_channel(np.diag([2.0, 1.0])), Precoder(np.eye(2)))
        assert np.allclose(a.log_mse, np.log([0.25, 1.0]))

    def test_identity_matches_dfe(self):
        ch = make_channel(np.eye(2))
        assert np.allclose(linear_zf_analysis(ch, Precoder(np.eye(2))).log_mse,
                           mse_analysis(ch, Precoder(np.eye(2))).log_mse)

    def test_dfe_never_worse_pointwise(self):
        rng = np.random.default_rng(8)
        cfg = SystemConfig(4, 4, 3, p_total=3.0, sigma2_n=0.4)
        for i in range(100):
            ch = generate_channel(cfg, 99, i)
            p = Precoder(random_stiefel(rng, 4, 3), normalized=True)
            dfe = mse_analysis(ch, p)
            lin = linear_zf_analysis(ch, p)
            for kind in ("sum-mse", "max-mse", "avg-ber", "mutual-info", "prod-mse"):
                assert eval_objective(kind, dfe.log_mse) <= eval_objective(kind, lin.log_mse) + 1e-12
            assert majorizes(dfe.log_mse, np.log(lin.eigs_n))

    @pytest.mark.parametrize("objective", ["sum-mse", "max-mse", "avg-ber", "prod-mse"])
    def test_optimal_linear_designs(self, objective):
        cfg = SystemConfig(4, 4, 3, p_total=3.0, sigma2_n=0.2)
        rng = np.random.default_rng(4)
        for i in range(30):
            ch = generate_channel(cfg, 6, i)
            p = optimal_linear_precoder(ch, objective)
            assert p.power() == pytest.approx(3.0)
            best = eval_objective(objective, linear_zf_analysis(ch, p).log_mse)
            # random competitors with the same total power and linear ZF receiver
            for _ in range(20):
                w = rng.dirichlet(np.ones(3)) * 3.0
                q = Precoder(random_stiefel(rng, 4, 3) * np.sqrt(w))
                assert best <= eval_objective(objective, linear_zf_analysis(ch, q).log_mse) + 1e-9
        if objective == "max-mse":
            a = linear_zf_analysis(ch, optimal_linear_precoder(ch, objective))
            assert np.ptp(a.log_mse) < 1e-9

    def test_unsupported_linear_design(self):
        with pytest.raises(DomainError):
            optimal_linear_precoder(make_channel(np.eye(2)), "mutual-info")


class TestBatch:
    def test_matches_single(self):
        rng = np.random.default_rng(2)
        cfg = SystemConfig(5, 4, 3, p_total=3.0, sigma2_n=0.2)
        ch = generate_channel(cfg, 3)
        entries = np.stack([random_stiefel(rng, 5, 3) for _ in range(10)])
        for receiver, fn in (("dfe", mse_analysis), ("linear", linear_zf_analysis)):
            logs = batch_log_mse(ch.h, entries, 3.0, 0.2, receiver)
            for e, row in zip(entries, logs):
                assert np.allclose(row, fn(ch, Precoder(e, normalized=True)).log_mse, atol=1e-10)

    def test_rank_deficient_rows(self):
        h = np.eye(3, dtype=complex)
        good = np.eye(3)[:, :2]
        bad = np.zeros((3, 2))
        bad[0, 0] = bad[0, 1] = 2 ** -0.5
        logs = batch_log_mse(h, np.stack([good, bad]), 2.0, 1.0)
        assert np.all(np.isfinite(logs[0])) and np.all(np.isinf(logs[1]))

    def test_unknown_receiver(self):
        with pytest.raises(DomainError):
            batch_log_mse(np.eye(2), np.eye(2)[None], 1.0, 1.0, "mmse")


class TestPrecoderType:
    def test_normalize_and_scale(self):
        p = Precoder(np.array([[2.0, 0], [0, 3.0], [0, 0]]))
        n = p.normalize()
        assert n.normalized and np.allclose(n.p.conj().T @ n.p, np.eye(2))
        assert n.scaled(4.0).power() == pytest.approx(4.0)
        assert Precoder(np.ones(3)).k == 1
