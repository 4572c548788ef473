import numpy as np
import pytest

from tnjet.mps import MpsModel, build_mps
from tnjet.qmi import QmiError, qmi_matrix, reduced_density, von_neumann_entropy
from tnjet.tensor import Tensor
from tnjet.ttn import build_ttn

from oracles import entropy_of, mixed_density, partial_trace


def bell_pair_model():
    """Two-site chain holding (|00> + |11>)/sqrt(2), singleton class axis."""
    a0 = np.zeros((1, 2, 1, 2))
    a0[0, 0, 0, 0] = 1.0
    a0[0, 1, 0, 1] = 1.0
    a1 = np.zeros((2, 2, 1))
    a1[0, 0, 0] = 1.0 / np.sqrt(2.0)
    a1[1, 1, 0] = 1.0 / np.sqrt(2.0)
    return MpsModel(
        n_sites=2, phys_dim=2, bond_cap=2, n_classes=1, label_site=0,
        tensors=(Tensor(a0), Tensor(a1)),
    )


class TestReducedDensity:
    def test_product_state_has_rank_one_marginals(self):
        m = build_mps(4, 2, 1, n_classes=1, seed=1)  # bond 1: a product state
        for k in range(4):
            rho = reduced_density(m, (k,)).array
            lam = np.linalg.eigvalsh(rho)
            assert lam[-1] == pytest.approx(1.0, abs=1e-10)
            assert np.all(lam[:-1] < 1e-10)

    def test_bell_pair_marginal_is_maximally_mixed(self):
        rho = reduced_density(bell_pair_model(), (0,)).array
        assert np.allclose(rho, np.eye(2) / 2.0, atol=1e-12)

    @pytest.mark.parametrize("sites", [(0,), (2,), (0, 1), (1, 3), (0, 3)])
    def test_mps_matches_dense_partial_trace(self, rng, sites):
        m = build_mps(4, 2, 3, n_classes=5, seed=2)
        got = reduced_density(m, sites).array
        want = partial_trace(mixed_density(m), sites, [2, 2, 2, 2])
        assert np.max(np.abs(got - want)) < 1e-10

    @pytest.mark.parametrize("sites", [(0,), (3,), (0, 1), (0, 2), (2, 3), (1, 3)])
    def test_ttn_matches_dense_partial_trace(self, rng, sites):
        m = build_ttn(4, 2, 3, n_classes=5, seed=3)
        got = reduced_density(m, sites).array
        want = partial_trace(mixed_density(m), sites, [2, 2, 2, 2])
        assert np.max(np.abs(got - want)) < 1e-10

    def test_properties_hermitian_unit_trace_psd(self, rng):
        m = build_mps(4, 3, 4, seed=4)
        rho = reduced_density(m, (1, 2)).array
        assert np.allclose(rho, rho.T, atol=1e-12)
        assert np.trace(rho) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(rho).min() > -1e-10

    def test_zero_model_rejected(self):
        m = build_mps(4, 2, 2)
        m = m.with_arrays([np.zeros_like(a) for a in m.arrays()])
        with pytest.raises(QmiError, match="zero norm"):
            reduced_density(m, (0,))

    def test_site_count_validation(self):
        m = build_mps(4, 2, 2)
        with pytest.raises(ValueError, match="1 or 2"):
            reduced_density(m, (0, 1, 2))
        with pytest.raises(ValueError, match="out of range"):
            reduced_density(m, (9,))


class TestVonNeumannEntropy:
    def test_pure_state(self):
        rho = np.zeros((3, 3))
        rho[0, 0] = 1.0
        assert von_neumann_entropy(rho) == 0.0

    def test_maximally_mixed_qubit(self):
        assert von_neumann_entropy(np.eye(2) / 2.0) == pytest.approx(np.log(2.0))

    def test_matches_eigendecomposition_oracle(self, rng):
        lam = rng.dirichlet(np.ones(3))
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        rho = q @ np.diag(lam) @ q.T
        want = float(-(lam * np.log(lam)).sum())
        assert von_neumann_entropy(rho) == pytest.approx(want, abs=1e-10)

    def test_trace_validation(self):
        with pytest.raises(QmiError, match="trace"):
            von_neumann_entropy(np.eye(2))

    def test_negative_eigenvalue_rejected(self):
        rho = np.diag([1.5, -0.5])
        with pytest.raises(QmiError, match="negative eigenvalue"):
            von_neumann_entropy(rho)

    def test_asymmetric_rejected(self):
        rho = np.array([[0.5, 0.4], [0.0, 0.5]])
        with pytest.raises(QmiError, match="symmetric"):
            von_neumann_entropy(rho)


class TestQmiMatrix:
    def test_product_state_has_no_correlations(self):
        m = build_mps(4, 2, 1, n_classes=1, seed=5)
        q = qmi_matrix(m)
        off = q.values[~np.eye(4, dtype=bool)]
        assert np.all(np.abs(off) < 1e-8)

    def test_bell_pair_reaches_two_log_two(self):
        q = qmi_matrix(bell_pair_model())
        assert q.values[0, 1] == pytest.approx(2.0 * np.log(2.0), abs=1e-10)

    def test_matches_dense_oracle(self, rng):
        m = build_mps(4, 2, 3, seed=6)
        got = qmi_matrix(m).values
        rho = mixed_density(m)
        dims = [2, 2, 2, 2]
        singles = [entropy_of(partial_trace(rho, (k,), dims)) for k in range(4)]
        for a in range(4):
            for b in range(a + 1, 4):
                joint = entropy_of(partial_trace(rho, (a, b), dims))
                want = singles[a] + singles[b] - joint
                assert got[a, b] == pytest.approx(want, abs=1e-8)

    def test_ttn_matches_dense_oracle(self, rng):
        m = build_ttn(4, 2, 2, seed=7)
        got = qmi_matrix(m).values
        rho = mixed_density(m)
        dims = [2, 2, 2, 2]
        singles = [entropy_of(partial_trace(rho, (k,), dims)) for k in range(4)]
        for a in range(4):
            for b in range(a + 1, 4):
                joint = entropy_of(partial_trace(rho, (a, b), dims))
                assert got[a, b] == pytest.approx(
                    singles[a] + singles[b] - joint, abs=1e-8
                )

    def test_symmetric_zero_diagonal_nonnegative(self, rng):
        q = qmi_matrix(build_mps(5, 2, 4, seed=8))
        assert np.array_equal(q.values, q.values.T)
        assert np.all(np.diag(q.values) == 0.0)
        assert np.all(q.values > -1e-10)

    def test_information_bounds_and_subadditivity(self, rng):
        m = build_mps(4, 2, 4, seed=9)
        values = qmi_matrix(m).values
        singles = [
            von_neumann_entropy(reduced_density(m, (k,))) for k in range(4)
        ]
        for a in range(4):
            for b in range(a + 1, 4):
                bound = 2.0 * min(singles[a], singles[b]) + 1e-8
                assert 0.0 <= values[a, b] + 1e-10 <= bound + 1e-10
                joint = von_neumann_entropy(reduced_density(m, (a, b)))
                assert joint <= singles[a] + singles[b] + 1e-8

    def test_relabeled_under_chain_reversal(self, rng):
        m = build_mps(4, 2, 3, seed=10)
        reversed_tensors = []
        for k in range(3, -1, -1):
            a = m.tensors[k].array
            axes = (3, 1, 2, 0) if a.ndim == 4 else (2, 1, 0)
            reversed_tensors.append(Tensor(np.transpose(a, axes)))
        rev = MpsModel(
            n_sites=4, phys_dim=2, bond_cap=3, n_classes=m.n_classes,
            label_site=3 - m.label_site, tensors=tuple(reversed_tensors),
        )
        base = qmi_matrix(m).values
        flipped = qmi_matrix(rev).values
        assert np.allclose(flipped, base[::-1, ::-1], atol=1e-9)

    def test_custom_labels(self):
        q = qmi_matrix(build_mps(2, 2, 2, seed=11), site_labels=("a", "b"))
        assert q.site_labels == ("a", "b")
        with pytest.raises(ValueError, match="labels"):
            qmi_matrix(build_mps(2, 2, 2), site_labels=("only",))
