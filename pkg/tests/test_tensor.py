import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tpgn import tensor as tg
from tpgn.tensor import ContractViolation, Tape, Var

from helpers import contract3_loops, contract4_loops

rng0 = np.random.default_rng


class TestContract3:
    def test_zero_tensor(self):
        T = np.zeros((2, 2, 2))
        v = np.array([1.0, 1.0])
        assert np.array_equal(tg.contract3(T, v), np.zeros((2, 2)))

    def test_diagonal_selector(self):
        T = np.zeros((3, 3, 3))
        for i in range(3):
            T[i, i, i] = 1.0
        v = np.array([5.0, 7.0, 9.0])
        assert np.array_equal(tg.contract3(T, v), np.diag([5.0, 7.0, 9.0]))

    def test_matches_loop_reference_seed42(self):
        rng = rng0(42)
        T = rng.normal(size=(3, 3, 3))
        v = rng.normal(size=3)
        assert np.array_equal(tg.contract3(T, v), contract3_loops(T, v))

    def test_dim_mismatch(self):
        with pytest.raises(ContractViolation):
            tg.contract3(np.zeros((2, 2, 3)), np.zeros(2))

    def test_linearity(self):
        rng = rng0(0)
        T = rng.normal(size=(4, 4, 4))
        x, y = rng.normal(size=4), rng.normal(size=4)
        a, b = 0.3, -1.7
        lhs = tg.contract3(T, a * x + b * y)
        rhs = a * tg.contract3(T, x) + b * tg.contract3(T, y)
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1, np.max(np.abs(rhs)))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_loop_agreement_property(self, seed):
        rng = rng0(seed)
        d = int(rng.integers(2, 5))
        m = int(rng.integers(1, 7))
        T = rng.normal(size=(d, d, m))
        v = rng.normal(size=m)
        assert np.array_equal(tg.contract3(T, v), contract3_loops(T, v))


class TestContract4:
    def test_zeros(self):
        U = np.zeros((2, 2, 2, 2))
        M = rng0(1).normal(size=(2, 2))
        assert np.array_equal(tg.contract4(U, M), np.zeros((2, 2)))

    def test_identity_4tensor(self):
        d = 3
        U = np.zeros((d, d, d, d))
        for i in range(d):
            for j in range(d):
                U[i, j, i, j] = 1.0
        M = rng0(2).normal(size=(d, d))
        assert np.array_equal(tg.contract4(U, M), M)

    def test_matches_loop_reference_seed7(self):
        rng = rng0(7)
        U = rng.normal(size=(2, 2, 2, 2))
        M = rng.normal(size=(2, 2))
        assert np.array_equal(tg.contract4(U, M), contract4_loops(U, M))

    def test_dim_mismatch(self):
        with pytest.raises(ContractViolation):
            tg.contract4(np.zeros((2, 2, 2, 2)), np.zeros((3, 3)))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_loop_agreement_property(self, seed):
        rng = rng0(seed)
        d = int(rng.integers(2, 5))
        U = rng.normal(size=(d, d, d, d))
        M = rng.normal(size=(d, d))
        assert np.array_equal(tg.contract4(U, M), contract4_loops(U, M))


class TestOuter:
    def test_unit_vectors(self):
        assert np.array_equal(tg.outer(np.array([1.0, 0.0]),
                                       np.array([0.0, 1.0])),
                              np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_hand_case(self):
        got = tg.outer(np.array([2.0, 3.0]), np.array([4.0, 5.0]))
        assert np.array_equal(got, np.array([[8.0, 10.0], [12.0, 15.0]]))

    def test_associativity_with_matvec_seed3(self):
        rng = rng0(3)
        f, r, u = rng.normal(size=3), rng.normal(size=4), rng.normal(size=4)
        lhs = tg.outer(f, r) @ u
        rhs = f * float(r @ u)
        assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestElementwise:
    def test_logistic_zero(self):
        assert tg.logistic(np.zeros(3))[0] == 0.5

    def test_tanh_zero(self):
        assert tg.tanh(np.zeros(2))[1] == 0.0

    def test_hadamard_hand(self):
        got = tg.elementwise("hadamard", np.array([1.0, 2.0]),
                             np.array([3.0, 4.0]))
        assert np.array_equal(got, np.array([3.0, 8.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            tg.add(np.zeros(2), np.zeros(3))

    def test_unknown_kind(self):
        with pytest.raises(ContractViolation):
            tg.elementwise("power", np.zeros(2))

    def test_logistic_bounds(self):
        x = rng0(4).normal(size=100) * 10
        y = tg.logistic(x)
        assert np.all(y > 0) and np.all(y < 1)


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(tg.softmax(np.zeros(2)), [0.5, 0.5], atol=0)

    def test_shift_invariance_no_overflow(self):
        got = tg.softmax(np.array([1000.0, 1000.0]))
        assert np.array_equal(got, np.array([0.5, 0.5]))

    def test_closed_form(self):
        z = np.log(np.array([1.0, 2.0, 3.0]))
        got = tg.softmax(z)
        assert np.max(np.abs(got - np.array([1, 2, 3]) / 6.0)) < 1e-15

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_sums_to_one_and_permutation_equivariant(self, seed):
        rng = rng0(seed)
        z = rng.normal(size=int(rng.integers(1, 9))) * 5
        p = tg.softmax(z)
        assert abs(p.sum() - 1.0) <= 1e-12
        perm = rng.permutation(len(z))
        assert np.max(np.abs(tg.softmax(z[perm]) - p[perm])) < 1e-15


class TestBackward:
    def test_sum_of_squares(self):
        tape = Tape()
        x = Var(np.array([1.0, 2.0, 3.0]), tape)
        loss = tg.dot(x, x)
        grads = tg.backward(tape, loss)
        assert np.array_equal(tg.grad_for(grads, x), np.array([2.0, 4.0, 6.0]))

    def test_softmax_cross_entropy_closed_form(self):
        tape = Tape()
        z = Var(np.array([0.2, -1.0, 0.7]), tape)
        loss = tg.cross_entropy_logits(z, 2)
        grads = tg.backward(tape, loss)
        expect = tg.softmax(np.array([0.2, -1.0, 0.7]))
        expect[2] -= 1.0
        assert np.max(np.abs(tg.grad_for(grads, z) - expect)) < 1e-12

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        x = Var(np.ones(3), tape)
        y = tg.add(x, x)
        with pytest.raises(ContractViolation):
            tg.backward(tape, y)

    def test_loss_from_other_tape_rejected(self):
        tape = Tape()
        x = Var(np.ones(2), tape)
        loss = tg.dot(x, x)
        with pytest.raises(ContractViolation):
            tg.backward(Tape(), loss)

    def test_mixed_tapes_rejected(self):
        t1, t2 = Tape(), Tape()
        with pytest.raises(ContractViolation):
            tg.add(Var(np.ones(2), t1), Var(np.ones(2), t2))

    def test_block_unbind_gradient_vs_fd(self):
        rng = rng0(11)
        S = rng.normal(size=(3, 3))
        u = rng.normal(size=9)
        w = rng.normal(size=9)
        tape = Tape()
        Sv, uv = Var(S, tape), Var(u, tape)
        loss = tg.dot(tg.block_unbind(Sv, uv), w)
        grads = tg.backward(tape, loss)
        from helpers import central_diff, fd_compare
        for var, arr in ((Sv, S), (uv, u)):
            fd = central_diff(
                lambda: float(tg.block_unbind(S, u) @ w), arr)
            assert fd_compare(tg.grad_for(grads, var), fd) < 1e-6

    def test_untraced_ops_return_arrays(self):
        out = tg.add(np.ones(2), np.ones(2))
        assert isinstance(out, np.ndarray)

    def test_replay_reproduces_outputs(self):
        rng = rng0(9)
        tape = Tape()
        A = Var(rng.normal(size=(3, 3)), tape)
        x = Var(rng.normal(size=3), tape)
        h = tg.tanh(tg.matvec(A, x))
        loss = tg.cross_entropy_logits(h, 1)
        tg.backward(tape, loss)
        assert tg.replay_check(tape)


class TestSignedSum:
    def test_matches_manual_combination(self):
        rng = rng0(5)
        a, b, c, d = (rng.normal(size=(2, 2)) for _ in range(4))
        got = tg.signed_sum((a, b, c, d), (1, -1, 1, 1))
        assert np.array_equal(got, a - b + c + d)

    def test_gradient_signs(self):
        tape = Tape()
        a = Var(np.ones(2), tape)
        b = Var(np.ones(2), tape)
        s = tg.signed_sum((a, b), (1, -1))
        loss = tg.dot(s, s)
        grads = tg.backward(tape, loss)
        ga, gb = tg.grad_for(grads, a), tg.grad_for(grads, b)
        assert np.array_equal(ga, -gb)
