import string

import numpy as np
import pytest

from tpgn.tensor import ContractViolation
from tpgn.tpr import (FillerTable, RoleBasis, bind, decode_string, dual_basis,
                      encode_string, superpose, unbind)

rng0 = np.random.default_rng


def random_basis(rng, d_r, n_roles):
    """Well-conditioned random roles (random orthogonal times mild scaling)."""
    q, _ = np.linalg.qr(rng.normal(size=(d_r, d_r)))
    scales = rng.uniform(0.5, 2.0, size=n_roles)
    return q[:, :n_roles] * scales


class TestDualBasis:
    def test_identity(self):
        U, exact = dual_basis(np.eye(3))
        assert exact
        assert np.allclose(U, np.eye(3), atol=0)

    def test_scaling(self):
        U, _ = dual_basis(2.0 * np.eye(2))
        assert np.allclose(U, 0.5 * np.eye(2), atol=1e-15)

    def test_multiply_back_seed11(self):
        R = random_basis(rng0(11), 4, 4)
        U, exact = dual_basis(R)
        assert exact
        assert np.max(np.abs(U @ R - np.eye(4))) < 1e-9

    def test_rank_deficient_square_falls_to_pseudo(self):
        R = np.zeros((3, 3))
        R[:, 0] = [1.0, 0.0, 0.0]
        R[:, 1] = [1.0, 0.0, 0.0]
        R[:, 2] = [0.0, 1.0, 0.0]
        U, exact = dual_basis(R)
        assert not exact  # flagged pseudo-inverse path
        assert np.all(np.isfinite(U))

    def test_pseudo_matches_inverse_when_both_exist(self):
        rng = rng0(12)
        for _ in range(20):
            R = random_basis(rng, 5, 5)
            U_auto, exact = dual_basis(R)
            U_pinv, _ = dual_basis(R, method="pinv")
            assert exact
            assert np.max(np.abs(U_auto - U_pinv)) < 1e-8

    def test_rectangular_minimizes_frobenius(self):
        rng = rng0(13)
        R = rng.normal(size=(5, 3))  # 3 roles in 5 dims: exact duals exist
        U, exact = dual_basis(R)
        assert not exact
        assert np.max(np.abs(U @ R - np.eye(3))) < 1e-9

    def test_bad_shape(self):
        with pytest.raises(ContractViolation):
            dual_basis(np.zeros(3))


class TestBind:
    def test_unit_binding(self):
        e1 = np.array([1.0, 0.0])
        S = bind(e1, e1)
        assert np.array_equal(S, np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_roundtrip_seed5(self):
        rng = rng0(5)
        for _ in range(20):
            f = rng.normal(size=4)
            r = rng.normal(size=3)
            while np.linalg.norm(r) < 1e-3:
                r = rng.normal(size=3)
            u = r / float(r @ r)  # dual of a single role
            got = unbind(bind(f, r), u)
            assert np.max(np.abs(got - f)) < 1e-10

    def test_zero_filler(self):
        S = bind(np.zeros(3), np.ones(2))
        assert np.array_equal(S, np.zeros((3, 2)))


class TestSuperpose:
    def make_fixture(self, seed=0, d_f=5, n_sym=4, d_r=4, n_roles=4):
        rng = rng0(seed)
        fillers = FillerTable.random(d_f, string.ascii_lowercase[:n_sym],
                                     seed=seed)
        roles = RoleBasis.from_roles(random_basis(rng, d_r, n_roles))
        return fillers, roles

    def test_string_abc_matches_sum_of_outers(self):
        fillers, roles = self.make_fixture()
        S = superpose([("a", 0), ("b", 1), ("c", 2)], fillers, roles)
        expect = (np.outer(fillers.filler("b"), roles.R[:, 1])
                  + np.outer(fillers.filler("a"), roles.R[:, 0])
                  + np.outer(fillers.filler("c"), roles.R[:, 2]))
        assert np.max(np.abs(S - expect)) < 1e-12 * 3

    def test_empty_bindings(self):
        fillers, roles = self.make_fixture()
        S = superpose([], fillers, roles)
        assert np.array_equal(S, np.zeros_like(S))

    def test_permutation_invariance_bit_exact(self):
        fillers, roles = self.make_fixture(seed=2)
        b1 = [("a", 0), ("b", 1), ("c", 2)]
        b2 = [("c", 2), ("a", 0), ("b", 1)]
        assert np.array_equal(superpose(b1, fillers, roles),
                              superpose(b2, fillers, roles))

    def test_duplicate_role_rejected(self):
        fillers, roles = self.make_fixture()
        with pytest.raises(ContractViolation):
            superpose([("a", 1), ("b", 1)], fillers, roles)

    def test_role_out_of_range(self):
        fillers, roles = self.make_fixture()
        with pytest.raises(ContractViolation):
            superpose([("a", 9)], fillers, roles)


class TestUnbind:
    def test_identity_role_basis_reads_positions(self):
        fillers = FillerTable.random(4, "abc", seed=1)
        roles = RoleBasis.from_roles(np.eye(3))
        S = superpose([("a", 0), ("b", 1), ("c", 2)], fillers, roles)
        e2 = np.zeros(3)
        e2[1] = 1.0
        assert np.max(np.abs(unbind(S, e2) - fillers.filler("b"))) < 1e-12

    def test_zero_tpr(self):
        assert np.array_equal(unbind(np.zeros((3, 2)), np.ones(2)),
                              np.zeros(3))

    def test_linearity(self):
        rng = rng0(6)
        S1, S2 = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
        u = rng.normal(size=4)
        lhs = unbind(S1 + S2, u)
        rhs = unbind(S1, u) + unbind(S2, u)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            unbind(np.zeros((3, 2)), np.zeros(3))


class TestDecodeString:
    def alphabet(self):
        return string.ascii_lowercase[:8]

    def test_decode_abc(self):
        rng = rng0(3)
        fillers = FillerTable.random(6, self.alphabet(), seed=3)
        roles = RoleBasis.from_roles(random_basis(rng, 5, 4))
        S = encode_string("abc", fillers, roles)
        assert decode_string(S, roles, fillers, 3) == "abc"

    def test_single_binding_degenerate_positions(self):
        # positions with a zero filler decode to the lowest-index symbol
        fillers = FillerTable.random(4, "abc", seed=4)
        roles = RoleBasis.from_roles(np.eye(3))
        S = superpose([("b", 1)], fillers, roles)
        got = decode_string(S, roles, fillers, 3)
        assert got[1] == "b"
        assert got[0] == "a" and got[2] == "a"

    def test_roundtrip_200_random_instances(self):
        rng = rng0(100)
        for trial in range(200):
            n_sym = int(rng.integers(2, 9))
            d_r = int(rng.integers(2, 9))
            n_roles = int(rng.integers(1, d_r + 1))
            d_f = int(rng.integers(n_sym, n_sym + 5))
            fillers = FillerTable.random(d_f, self.alphabet()[:n_sym],
                                         seed=trial)
            roles = RoleBasis.from_roles(random_basis(rng, d_r, n_roles))
            length = int(rng.integers(1, n_roles + 1))
            s = "".join(self.alphabet()[int(rng.integers(n_sym))]
                        for _ in range(length))
            S = encode_string(s, fillers, roles)
            assert decode_string(S, roles, fillers, length) == s

    def test_near_dependent_roles_pseudo_path(self):
        rng = rng0(7)
        base = random_basis(rng, 4, 3)
        # fourth role nearly dependent on the first: condition number > 1e6
        R = np.concatenate([base, (base[:, :1] + 1e-8 *
                                   rng.normal(size=(4, 1)))], axis=1)
        assert np.linalg.cond(R) > 1e6
        fillers = FillerTable.random(5, "abcd", seed=8)
        roles_pinv = RoleBasis.from_roles(R, method="pinv")
        S = encode_string("ab", fillers, roles_pinv)
        assert decode_string(S, roles_pinv, fillers, 2) == "ab"

    def test_length_exceeding_roles(self):
        fillers = FillerTable.random(3, "ab", seed=0)
        roles = RoleBasis.from_roles(np.eye(2))
        with pytest.raises(ContractViolation):
            decode_string(np.zeros((3, 2)), roles, fillers, 3)
