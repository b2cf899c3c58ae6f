"""Dense small-tensor kernels with a reverse-mode gradient tape.

All values are float64 numpy arrays (scalars are Python floats).  Ops
take either raw arrays or `Var` wrappers; when any input is a `Var`
bound to a `Tape`, the op records itself on that tape and returns a
`Var`, otherwise it returns a plain array.  `backward` walks a tape in
reverse and accumulates vector-Jacobian products into every leaf.

The primitive set is deliberately coarse (whole contractions, whole
gate nonlinearities) rather than per-scalar: the model built on top
composes few distinct kinds of operation.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ContractViolation",
    "Tape",
    "Var",
    "value_of",
    "contract3",
    "contract4",
    "outer",
    "matvec",
    "mat_t_vec",
    "column",
    "logistic",
    "tanh",
    "hadamard",
    "add",
    "sub",
    "elementwise",
    "signed_sum",
    "softmax",
    "reshape",
    "block_unbind",
    "dot",
    "scale",
    "mean_scalars",
    "cross_entropy_logits",
    "backward",
    "replay_check",
]


class ContractViolation(ValueError):
    """An operation was called outside its declared contract."""


class Tape:
    """Append-only record of primitive ops, in evaluation order.

    Single-writer: one tape per training step, never shared across
    concurrent steps.
    """

    __slots__ = ("entries",)

    def __init__(self):
        # entry = (op name, output Var, input tuple, aux)
        self.entries: list = []


class Var:
    """A value participating in gradient recording.

    ``tape=None`` marks a constant / untraced leaf; ops touching only
    those return plain arrays.
    """

    __slots__ = ("value", "tape")

    def __init__(self, value, tape: Tape | None = None):
        self.value = value
        self.tape = tape

    def __repr__(self):
        return f"Var({self.value!r}, traced={self.tape is not None})"


def value_of(x):
    """Unwrap a Var (or pass a raw value through)."""
    return x.value if type(x) is Var else x


_val = value_of


def _tape_of(*xs) -> Tape | None:
    t = None
    for x in xs:
        if type(x) is Var and x.tape is not None:
            if t is None:
                t = x.tape
            elif t is not x.tape:
                raise ContractViolation("inputs recorded on different tapes")
    return t


def _emit(name, out_val, ins, aux):
    t = _tape_of(*ins)
    if t is None:
        return out_val
    out = Var(out_val, t)
    t.entries.append((name, out, ins, aux))
    return out


# ---------------------------------------------------------------------------
# contractions


def _axpy_contract(flat_t, v):
    """Sequential accumulation over the contracted axis.

    flat_t has shape (m, N): one contiguous slice per contracted index.
    The per-entry rounding sequence (multiply, then add, no FMA) is
    bit-identical to the naive ``acc += t[..., k] * v[k]`` loops, which is
    what the reference oracles compute.
    """
    out = flat_t[0] * v[0]
    tmp = np.empty_like(out)
    for k in range(1, v.shape[0]):
        np.multiply(flat_t[k], v[k], out=tmp)
        out += tmp
    return out


def contract3(T, v):
    """result[i,j] = sum_k T[i,j,k] * v[k] for a (a,b,m) tensor and m-vector."""
    Tv, vv = _val(T), _val(v)
    if Tv.ndim != 3 or vv.ndim != 1 or Tv.shape[2] != vv.shape[0]:
        raise ContractViolation(
            f"contract3 shape mismatch: {Tv.shape} . {vv.shape}")
    d1, d2, m = Tv.shape
    flat = np.ascontiguousarray(Tv.reshape(d1 * d2, m).T)
    out = _axpy_contract(flat, vv).reshape(d1, d2)
    return _emit("contract3", out, (T, v), None)


def _bw_contract3(g, ins, out_val, aux):
    Tv, vv = _val(ins[0]), _val(ins[1])
    gT = g[:, :, None] * vv
    gv = Tv.reshape(-1, vv.shape[0]).T @ g.ravel()
    return gT, gv


def contract4(U, M):
    """result[i,j] = sum_{k,l} U[i,j,k,l] * M[k,l], (k,l) in row-major order."""
    Uv, Mv = _val(U), _val(M)
    if Uv.ndim != 4 or Mv.ndim != 2 or Uv.shape[2:] != Mv.shape:
        raise ContractViolation(
            f"contract4 shape mismatch: {Uv.shape} . {Mv.shape}")
    d1, d2 = Uv.shape[:2]
    n = Mv.size
    flat = np.ascontiguousarray(Uv.reshape(d1 * d2, n).T)
    out = _axpy_contract(flat, Mv.ravel()).reshape(d1, d2)
    return _emit("contract4", out, (U, M), None)


def _bw_contract4(g, ins, out_val, aux):
    Uv, Mv = _val(ins[0]), _val(ins[1])
    gU = g[:, :, None, None] * Mv
    gM = (Uv.reshape(-1, Mv.size).T @ g.ravel()).reshape(Mv.shape)
    return gU, gM


def outer(f, r):
    """Rank-one binding matrix f r^T."""
    fv, rv = _val(f), _val(r)
    if fv.ndim != 1 or rv.ndim != 1:
        raise ContractViolation("outer expects two vectors")
    return _emit("outer", np.outer(fv, rv), (f, r), None)


def _bw_outer(g, ins, out_val, aux):
    fv, rv = _val(ins[0]), _val(ins[1])
    return g @ rv, g.T @ fv


def matvec(A, x):
    Av, xv = _val(A), _val(x)
    if Av.ndim != 2 or xv.ndim != 1 or Av.shape[1] != xv.shape[0]:
        raise ContractViolation(
            f"matvec shape mismatch: {Av.shape} . {xv.shape}")
    return _emit("matvec", Av @ xv, (A, x), None)


def _bw_matvec(g, ins, out_val, aux):
    Av, xv = _val(ins[0]), _val(ins[1])
    return np.outer(g, xv), Av.T @ g


def mat_t_vec(A, x):
    """A^T x without materializing the transpose."""
    Av, xv = _val(A), _val(x)
    if Av.ndim != 2 or xv.ndim != 1 or Av.shape[0] != xv.shape[0]:
        raise ContractViolation(
            f"mat_t_vec shape mismatch: {Av.shape}^T . {xv.shape}")
    return _emit("mat_t_vec", Av.T @ xv, (A, x), None)


def _bw_mat_t_vec(g, ins, out_val, aux):
    Av, xv = _val(ins[0]), _val(ins[1])
    return np.outer(xv, g), Av @ g


def column(A, j):
    """Column j of a matrix (embedding lookup)."""
    Av = _val(A)
    if Av.ndim != 2 or not 0 <= j < Av.shape[1]:
        raise ContractViolation(f"column {j} out of range for {Av.shape}")
    return _emit("column", Av[:, j].copy(), (A,), j)


def _bw_column(g, ins, out_val, aux):
    Av = _val(ins[0])
    gA = np.zeros_like(Av)
    gA[:, aux] = g
    return (gA,)


# ---------------------------------------------------------------------------
# elementwise


def logistic(x):
    """1 / (1 + e^-x), stable at large |x| (saturates in float64)."""
    xv = _val(x)
    z = np.exp(-np.abs(xv))
    out = np.where(xv >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return _emit("logistic", out, (x,), None)


def _bw_logistic(g, ins, out_val, aux):
    return (g * out_val * (1.0 - out_val),)


def tanh(x):
    return _emit("tanh", np.tanh(_val(x)), (x,), None)


def _bw_tanh(g, ins, out_val, aux):
    return (g * (1.0 - out_val * out_val),)


def _check_same_shape(a, b, kind):
    if np.shape(a) != np.shape(b):
        raise ContractViolation(
            f"{kind} shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def hadamard(a, b):
    av, bv = _val(a), _val(b)
    _check_same_shape(av, bv, "hadamard")
    return _emit("hadamard", av * bv, (a, b), None)


def _bw_hadamard(g, ins, out_val, aux):
    return g * _val(ins[1]), g * _val(ins[0])


def add(a, b):
    av, bv = _val(a), _val(b)
    _check_same_shape(av, bv, "add")
    return _emit("add", av + bv, (a, b), None)


def _bw_add(g, ins, out_val, aux):
    return g, g


def sub(a, b):
    av, bv = _val(a), _val(b)
    _check_same_shape(av, bv, "sub")
    return _emit("sub", av - bv, (a, b), None)


def _bw_sub(g, ins, out_val, aux):
    return g, -g


_ELEMENTWISE = {
    "logistic": (logistic, 1),
    "tanh": (tanh, 1),
    "hadamard": (hadamard, 2),
    "add": (add, 2),
    "sub": (sub, 2),
}


def elementwise(kind, *args):
    """Dispatch by kind: logistic | tanh | hadamard | add | sub."""
    if kind not in _ELEMENTWISE:
        raise ContractViolation(f"unknown elementwise kind {kind!r}")
    fn, arity = _ELEMENTWISE[kind]
    if len(args) != arity:
        raise ContractViolation(f"{kind} takes {arity} operand(s)")
    return fn(*args)


def signed_sum(terms, signs):
    """sum_i signs[i] * terms[i] over same-shape operands, one tape entry."""
    if len(terms) != len(signs) or not terms:
        raise ContractViolation("signed_sum needs matching terms/signs")
    vals = [_val(t) for t in terms]
    out = signs[0] * vals[0]
    for s, v in zip(signs[1:], vals[1:]):
        _check_same_shape(vals[0], v, "signed_sum")
        out = out + s * v if s != 1 else out + v
    return _emit("signed_sum", out, tuple(terms), tuple(signs))


def _bw_signed_sum(g, ins, out_val, aux):
    return tuple(g if s == 1 else s * g for s in aux)


# ---------------------------------------------------------------------------
# softmax / losses


def softmax(z):
    """Softmax with max-subtraction; output sums to 1 and is shift-invariant."""
    zv = _val(z)
    if zv.ndim != 1 or zv.shape[0] < 1:
        raise ContractViolation("softmax expects a nonempty vector")
    e = np.exp(zv - zv.max())
    out = e / e.sum()
    return _emit("softmax", out, (z,), None)


def _bw_softmax(g, ins, out_val, aux):
    p = out_val
    return (p * (g - p @ g),)


def cross_entropy_logits(logits, target):
    """-log softmax(logits)[target]; gradient is softmax(logits) - onehot."""
    lv = _val(logits)
    if lv.ndim != 1 or not 0 <= target < lv.shape[0]:
        raise ContractViolation(f"target {target} out of range for {lv.shape}")
    m = lv.max()
    lse = m + np.log(np.exp(lv - m).sum())
    return _emit("xent", float(lse - lv[target]), (logits,), target)


def _bw_xent(g, ins, out_val, aux):
    lv = _val(ins[0])
    m = lv.max()
    e = np.exp(lv - m)
    p = e / e.sum()
    p[aux] -= 1.0
    return (p * g,)


def dot(x, y):
    xv, yv = _val(x), _val(y)
    _check_same_shape(xv, yv, "dot")
    return _emit("dot", float(xv.ravel() @ yv.ravel()), (x, y), None)


def _bw_dot(g, ins, out_val, aux):
    return g * _val(ins[1]), g * _val(ins[0])


def scale(x, c):
    return _emit("scale", _val(x) * c, (x,), c)


def _bw_scale(g, ins, out_val, aux):
    return (g * aux,)


def mean_scalars(losses):
    """Mean of scalar terms (fixed summation order)."""
    if not losses:
        raise ContractViolation("mean over empty loss list")
    total = 0.0
    for item in losses:
        total += _val(item)
    return _emit("mean_scalars", total / len(losses), tuple(losses), None)


def _bw_mean_scalars(g, ins, out_val, aux):
    gi = g / len(ins)
    return tuple(gi for _ in ins)


# ---------------------------------------------------------------------------
# structure ops


def reshape(x, shape):
    xv = _val(x)
    return _emit("reshape", xv.reshape(shape), (x,), xv.shape)


def _bw_reshape(g, ins, out_val, aux):
    return (g.reshape(aux),)


def block_unbind(S, u):
    """Apply d copies of the d x d matrix S along the diagonal to u in R^{d^2}.

    Chunk k of the result (length d) is S @ u[k*d:(k+1)*d]; the d^2 x d^2
    block-diagonal operator is never materialized.
    """
    Sv, uv = _val(S), _val(u)
    d = Sv.shape[0]
    if Sv.ndim != 2 or Sv.shape[1] != d or uv.shape != (d * d,):
        raise ContractViolation(
            f"block_unbind shape mismatch: {Sv.shape} . {uv.shape}")
    out = (uv.reshape(d, d) @ Sv.T).ravel()
    return _emit("block_unbind", out, (S, u), d)


def _bw_block_unbind(g, ins, out_val, aux):
    Sv, uv = _val(ins[0]), _val(ins[1])
    d = aux
    G = g.reshape(d, d)
    gS = G.T @ uv.reshape(d, d)
    gu = (G @ Sv).ravel()
    return gS, gu


# ---------------------------------------------------------------------------
# reverse pass

_BACKWARD = {
    "contract3": _bw_contract3,
    "contract4": _bw_contract4,
    "outer": _bw_outer,
    "matvec": _bw_matvec,
    "mat_t_vec": _bw_mat_t_vec,
    "column": _bw_column,
    "logistic": _bw_logistic,
    "tanh": _bw_tanh,
    "hadamard": _bw_hadamard,
    "add": _bw_add,
    "sub": _bw_sub,
    "signed_sum": _bw_signed_sum,
    "softmax": _bw_softmax,
    "xent": _bw_xent,
    "dot": _bw_dot,
    "scale": _bw_scale,
    "mean_scalars": _bw_mean_scalars,
    "reshape": _bw_reshape,
    "block_unbind": _bw_block_unbind,
}

_FORWARD = {
    "contract3": lambda ins, aux: _val(contract3(_val(ins[0]), _val(ins[1]))),
    "contract4": lambda ins, aux: _val(contract4(_val(ins[0]), _val(ins[1]))),
    "outer": lambda ins, aux: np.outer(_val(ins[0]), _val(ins[1])),
    "matvec": lambda ins, aux: _val(ins[0]) @ _val(ins[1]),
    "mat_t_vec": lambda ins, aux: _val(ins[0]).T @ _val(ins[1]),
    "column": lambda ins, aux: _val(ins[0])[:, aux].copy(),
    "logistic": lambda ins, aux: logistic(_val(ins[0])),
    "tanh": lambda ins, aux: np.tanh(_val(ins[0])),
    "hadamard": lambda ins, aux: _val(ins[0]) * _val(ins[1]),
    "add": lambda ins, aux: _val(ins[0]) + _val(ins[1]),
    "sub": lambda ins, aux: _val(ins[0]) - _val(ins[1]),
    "signed_sum": lambda ins, aux: signed_sum([_val(i) for i in ins], aux),
    "softmax": lambda ins, aux: softmax(_val(ins[0])),
    "xent": lambda ins, aux: cross_entropy_logits(_val(ins[0]), aux),
    "dot": lambda ins, aux: float(_val(ins[0]).ravel() @ _val(ins[1]).ravel()),
    "scale": lambda ins, aux: _val(ins[0]) * aux,
    "block_unbind": lambda ins, aux: block_unbind(_val(ins[0]), _val(ins[1])),
}


def backward(tape: Tape, loss):
    """Accumulate d(loss)/d(leaf) for every traced leaf reachable from loss.

    Returns a dict keyed by id(Var) -> gradient with the leaf's shape.
    """
    if type(loss) is not Var or loss.tape is not tape:
        raise ContractViolation("loss was not recorded on this tape")
    if np.ndim(loss.value) != 0:
        raise ContractViolation("loss must be a scalar")
    grads: dict[int, object] = {id(loss): 1.0}
    for name, out, ins, aux in reversed(tape.entries):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for x, gx in zip(ins, _BACKWARD[name](g, ins, out.value, aux)):
            if type(x) is not Var or gx is None:
                continue
            k = id(x)
            cur = grads.get(k)
            grads[k] = gx if cur is None else cur + gx
    return grads


def grad_for(grads: dict, var: Var):
    """Gradient accumulated for a leaf Var, or None."""
    return grads.get(id(var))


def replay_check(tape: Tape) -> bool:
    """Recompute every recorded op from its inputs; True iff all outputs
    reproduce bit-identically (within one run / one platform)."""
    for name, out, ins, aux in tape.entries:
        if name == "reshape":
            redo = _val(ins[0]).reshape(np.shape(out.value))
        elif name == "mean_scalars":
            redo = sum(_val(i) for i in ins) / len(ins)
        else:
            redo = _FORWARD[name](ins, aux)
        redo = _val(redo)
        same = (redo == out.value) if np.ndim(redo) == 0 else np.array_equal(
            redo, out.value)
        if not same:
            return False
    return True
