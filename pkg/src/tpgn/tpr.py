"""Filler/role tensor-product algebra.

A symbol structure is embedded as a superposition of rank-one bindings
S = sum_i f_i r_i^T.  When the role vectors are linearly independent the
rows of the dual basis U (U R = I) recover each filler exactly via the
matrix-vector product S u_k; otherwise a least-squares pseudo-inverse
gives approximate unbinding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ContractViolation

__all__ = [
    "RoleBasis",
    "FillerTable",
    "dual_basis",
    "bind",
    "unbind",
    "superpose",
    "decode_string",
    "encode_string",
]


def dual_basis(R: np.ndarray, method: str = "auto") -> tuple[np.ndarray, bool]:
    """Rows of the returned U are unbinding vectors dual to R's columns.

    For square invertible R this is the exact inverse (U R = I); for
    rank-deficient or rectangular R it falls through to the least-squares
    solution of R^T x = e_k per row, minimizing ||U R - I||_F.

    Returns (U, exact) where ``exact`` is False on the pseudo-inverse path.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] < 1 or R.shape[1] < 1:
        raise ContractViolation(f"role matrix must be 2-d, got {R.shape}")
    d_r, n = R.shape
    if method not in ("auto", "pinv"):
        raise ContractViolation(f"unknown dual_basis method {method!r}")
    if method == "auto" and n == d_r:
        try:
            U = np.linalg.solve(R, np.eye(n))
            if np.all(np.isfinite(U)):
                return U, True
        except np.linalg.LinAlgError:
            pass
    # least-squares solve of R^T x = e_k for every dual row at once
    X, *_ = np.linalg.lstsq(R.T, np.eye(n), rcond=None)
    return X.T, False


@dataclass
class RoleBasis:
    """Role vectors (columns of R) with their unbinding duals (rows of U)."""

    R: np.ndarray
    U: np.ndarray
    exact_dual: bool

    @classmethod
    def from_roles(cls, R: np.ndarray, method: str = "auto") -> "RoleBasis":
        R = np.asarray(R, dtype=float)
        U, exact = dual_basis(R, method=method)
        return cls(R=R, U=U, exact_dual=exact)

    @property
    def n_roles(self) -> int:
        return self.R.shape[1]

    @property
    def d_r(self) -> int:
        return self.R.shape[0]

    def unbinding_vector(self, k: int) -> np.ndarray:
        return self.U[k]


@dataclass
class FillerTable:
    """One filler column per alphabet symbol; decode is nearest-cosine."""

    F: np.ndarray
    symbols: tuple[str, ...]

    def __post_init__(self):
        if self.F.shape[1] != len(self.symbols):
            raise ContractViolation("one column per symbol required")

    @classmethod
    def random(cls, d_f: int, symbols, seed: int = 0) -> "FillerTable":
        rng = np.random.default_rng(seed)
        F = rng.normal(size=(d_f, len(symbols)))
        return cls(F=F, symbols=tuple(symbols))

    def filler(self, symbol: str) -> np.ndarray:
        return self.F[:, self.symbols.index(symbol)]

    def nearest(self, f: np.ndarray) -> str:
        """Argmax-cosine symbol; ties (and a zero filler) resolve to the
        lowest symbol index."""
        norms = np.linalg.norm(self.F, axis=0)
        fn = np.linalg.norm(f)
        denom = np.maximum(norms * fn, 1e-300)
        sims = (self.F.T @ f) / denom
        return self.symbols[int(np.argmax(sims))]


def bind(f: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Bind one filler to one role: the rank-one matrix f r^T."""
    f = np.asarray(f, dtype=float)
    r = np.asarray(r, dtype=float)
    if f.ndim != 1 or r.ndim != 1:
        raise ContractViolation("bind expects two vectors")
    return np.outer(f, r)


def unbind(S: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Recover the filler bound to u's role: S u."""
    S = np.asarray(S, dtype=float)
    u = np.asarray(u, dtype=float)
    if S.ndim != 2 or u.ndim != 1 or S.shape[1] != u.shape[0]:
        raise ContractViolation(f"unbind shape mismatch: {S.shape} . {u.shape}")
    return S @ u


def superpose(bindings, fillers: FillerTable, roles: RoleBasis) -> np.ndarray:
    """Sum of outer(f_symbol, r_role) over a set of (symbol, role_index).

    The binding list has set semantics: the sum is taken in canonical role
    order, so permutations of the input produce bit-identical matrices.
    A role may bind at most one filler.
    """
    seen = set()
    for sym, k in bindings:
        if k in seen:
            raise ContractViolation(f"role {k} bound twice")
        if not 0 <= k < roles.n_roles:
            raise ContractViolation(f"role index {k} outside basis")
        seen.add(k)
    S = np.zeros((fillers.F.shape[0], roles.d_r))
    for sym, k in sorted(bindings, key=lambda b: b[1]):
        S += np.outer(fillers.filler(sym), roles.R[:, k])
    return S


def encode_string(s: str, fillers: FillerTable, roles: RoleBasis) -> np.ndarray:
    """Positional-role encoding: symbol at position k binds role k."""
    if len(s) > roles.n_roles:
        raise ContractViolation(
            f"string length {len(s)} exceeds {roles.n_roles} roles")
    return superpose([(ch, k) for k, ch in enumerate(s)], fillers, roles)


def decode_string(S: np.ndarray, roles: RoleBasis, fillers: FillerTable,
                  length: int) -> str:
    """Serial readout: position k is the nearest-cosine symbol of S u_k."""
    if length > roles.n_roles:
        raise ContractViolation("length exceeds role count")
    return "".join(
        fillers.nearest(unbind(S, roles.unbinding_vector(k)))
        for k in range(length))
