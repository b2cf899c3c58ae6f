"""The caption generator: two coupled matrix-state recurrent subnets.

The sentence-encoding subnet holds a d x d state S_hat (treated as an
approximate tensor-product representation of the caption still to be
emitted); the unbinding subnet produces, step by step, the vector u_t
that reads the next word's filler out of S_hat.  A tied linear + softmax
layer decodes each filler into a vocabulary distribution.

Gate pre-activations keep the sign pattern  W-term - D-term + U-term + bias
of the defining update equations; the minus sign is not folded into D.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from . import tensor as tg
from .tensor import ContractViolation, Tape, Var, value_of

__all__ = [
    "GATES",
    "TpgnConfig",
    "TpgnParams",
    "EncoderState",
    "UnbinderState",
    "TraceStep",
    "DecodeTrace",
    "init_sentence_state",
    "encoder_step",
    "unbinder_step",
    "unbinding_vector",
    "unbind_filler",
    "decode_word",
    "generate_caption",
]

GATES = ("f", "i", "o", "c")


@dataclass(frozen=True)
class TpgnConfig:
    """Dimensions and special token ids for one model instance."""

    d: int = 6
    V: int = 35
    d_v: int = 96
    T_max: int = 16
    start_id: int = 0
    end_id: int = 1

    def __post_init__(self):
        if self.d < 2:
            raise ContractViolation("d must be >= 2")
        if self.V < 4:
            raise ContractViolation("V must be >= 4")
        if self.T_max < 1:
            raise ContractViolation("T_max must be >= 1")
        if self.start_id == self.end_id:
            raise ContractViolation("start and end ids must differ")
        for tok in (self.start_id, self.end_id):
            if not 0 <= tok < self.V:
                raise ContractViolation("special token id outside vocabulary")

    def to_dict(self) -> dict:
        return {
            "d": self.d, "V": self.V, "d_v": self.d_v, "T_max": self.T_max,
            "start_id": self.start_id, "end_id": self.end_id,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TpgnConfig":
        return cls(**{k: int(doc[k]) for k in
                      ("d", "V", "d_v", "T_max", "start_id", "end_id")})


def param_shapes(cfg: TpgnConfig) -> dict[str, tuple[int, ...]]:
    """Every learnable tensor, by name."""
    d, V, d_v = cfg.d, cfg.V, cfg.d_v
    shapes: dict[str, tuple[int, ...]] = {}
    for g in GATES:
        shapes[f"W1_{g}"] = (d, d, d)
        shapes[f"D1_{g}"] = (d, d, d)
        shapes[f"U1_{g}"] = (d, d, d, d)
        shapes[f"b1_{g}"] = (d, d)
        shapes[f"w2_{g}"] = (d,)
        shapes[f"D2_{g}"] = (d, d)
        shapes[f"U2_{g}"] = (d, d)
        shapes[f"b2_{g}"] = (d,)
    shapes["C_s"] = (d, d, d_v)
    shapes["W_u"] = (d * d, d)
    shapes["b_u"] = (d * d,)
    shapes["E_gate"] = (d, V)
    shapes["E_out"] = (d * d, V)
    return shapes


def _init_scale(name: str, shape: tuple[int, ...]) -> float:
    if name.startswith("b"):
        return 0.0
    if name.startswith("E"):
        return 0.1
    # fan-in = size of the contracted input block
    fan_in = shape[-1] if len(shape) < 4 else shape[2] * shape[3]
    return 0.1 / np.sqrt(fan_in)


class TpgnParams:
    """All learnable tensors, as plain float64 arrays attached by name.

    The output weight matrix of the lexical decoder is never stored: it is
    the transpose of ``E_out`` (weight tying).  ``E_gate`` and ``E_out``
    start with zero-mean columns over the vocabulary.
    """

    def __init__(self, config: TpgnConfig, seed: int,
                 arrays: dict[str, np.ndarray]):
        self.config = config
        self.seed = seed
        self.names = tuple(sorted(arrays))
        expected = param_shapes(config)
        if set(arrays) != set(expected):
            raise ContractViolation("parameter set does not match config")
        for name in self.names:
            a = np.asarray(arrays[name], dtype=float)
            if a.shape != expected[name]:
                raise ContractViolation(
                    f"{name} has shape {a.shape}, expected {expected[name]}")
            if not np.all(np.isfinite(a)):
                raise ContractViolation(f"{name} has non-finite entries")
            setattr(self, name, a)

    @classmethod
    def init_random(cls, config: TpgnConfig, seed: int = 0) -> "TpgnParams":
        rng = np.random.default_rng(seed)
        arrays = {}
        for name, shape in param_shapes(config).items():
            s = _init_scale(name, shape)
            arrays[name] = (rng.normal(size=shape) * s if s else
                            np.zeros(shape))
        for name in ("E_gate", "E_out"):
            arrays[name] -= arrays[name].mean(axis=1, keepdims=True)
        return cls(config, seed, arrays)

    @classmethod
    def zeros(cls, config: TpgnConfig) -> "TpgnParams":
        return cls(config, 0, {n: np.zeros(s)
                               for n, s in param_shapes(config).items()})

    def items(self):
        return [(n, getattr(self, n)) for n in self.names]

    def copy(self) -> "TpgnParams":
        return TpgnParams(self.config, self.seed,
                          {n: getattr(self, n).copy() for n in self.names})

    def traced(self, tape: Tape) -> SimpleNamespace:
        """Leaf Vars over the same arrays, recording onto ``tape``."""
        ns = SimpleNamespace(config=self.config)
        for n in self.names:
            setattr(ns, n, Var(getattr(self, n), tape))
        ns.names = self.names
        return ns


@dataclass
class EncoderState:
    S_hat: object  # (d, d)
    c1: object     # (d, d)


@dataclass
class UnbinderState:
    p: object   # (d,)
    c2: object  # (d,)


def initial_unbinder_state(d: int) -> UnbinderState:
    return UnbinderState(p=np.zeros(d), c2=np.zeros(d))


def init_sentence_state(params, v: np.ndarray, v_bar: np.ndarray
                        ) -> EncoderState:
    """S_hat_0 from the centered scene feature vector; cell starts at zero."""
    v = np.asarray(v, dtype=float)
    v_bar = np.asarray(v_bar, dtype=float)
    C_s = params.C_s
    d_v = value_of(C_s).shape[2]
    if v.shape != (d_v,) or v_bar.shape != (d_v,):
        raise ContractViolation(
            f"feature vector must have length {d_v}")
    S0 = tg.contract3(C_s, v - v_bar)
    d = value_of(S0).shape[0]
    return EncoderState(S_hat=S0, c1=np.zeros((d, d)))


def _check_word_id(params, x_prev: int) -> None:
    V = value_of(params.E_gate).shape[1]
    if not 0 <= x_prev < V:
        raise ContractViolation(f"word id {x_prev} outside vocabulary [0,{V})")


def encoder_step(params, prev: EncoderState, p_prev, x_prev: int
                 ) -> EncoderState:
    """One update of the matrix-state subnet.

    Each gate pre-activation is
    contract3(W1, p_prev) - contract3(D1, e_prev) + contract4(U1, S_hat_prev)
    + bias, with e_prev the embedding of the previous word.
    """
    _check_word_id(params, x_prev)
    e_prev = tg.column(params.E_gate, x_prev)
    signs = (1, -1, 1, 1)

    def pre(g):
        return tg.signed_sum(
            (tg.contract3(getattr(params, f"W1_{g}"), p_prev),
             tg.contract3(getattr(params, f"D1_{g}"), e_prev),
             tg.contract4(getattr(params, f"U1_{g}"), prev.S_hat),
             getattr(params, f"b1_{g}")), signs)

    f1 = tg.logistic(pre("f"))
    i1 = tg.logistic(pre("i"))
    o1 = tg.logistic(pre("o"))
    g1 = tg.tanh(pre("c"))
    c1 = tg.add(tg.hadamard(f1, prev.c1), tg.hadamard(i1, g1))
    S_hat = tg.hadamard(o1, tg.tanh(c1))
    return EncoderState(S_hat=S_hat, c1=c1)


def unbinder_step(params, prev: UnbinderState, S_hat_prev, x_prev: int
                  ) -> UnbinderState:
    """One update of the vector-state subnet that will emit u_t.

    Gate pre-activations are
    S_hat_prev @ w2 - D2 @ e_prev + U2 @ p_prev + bias.
    """
    _check_word_id(params, x_prev)
    e_prev = tg.column(params.E_gate, x_prev)
    signs = (1, -1, 1, 1)

    def pre(g):
        return tg.signed_sum(
            (tg.matvec(S_hat_prev, getattr(params, f"w2_{g}")),
             tg.matvec(getattr(params, f"D2_{g}"), e_prev),
             tg.matvec(getattr(params, f"U2_{g}"), prev.p),
             getattr(params, f"b2_{g}")), signs)

    f2 = tg.logistic(pre("f"))
    i2 = tg.logistic(pre("i"))
    o2 = tg.logistic(pre("o"))
    g2 = tg.tanh(pre("c"))
    c2 = tg.add(tg.hadamard(f2, prev.c2), tg.hadamard(i2, g2))
    p = tg.hadamard(o2, tg.tanh(c2))
    return UnbinderState(p=p, c2=c2)


def unbinding_vector(params, p):
    """u = tanh(W_u p + b_u), entries in (-1, 1)."""
    return tg.tanh(tg.signed_sum(
        (tg.matvec(params.W_u, p), params.b_u), (1, 1)))


def unbind_filler(S_hat, u):
    """f = S u with S the block-diagonal lift of S_hat (computed chunk-wise)."""
    return tg.block_unbind(S_hat, u)


def decode_word(params, f):
    """Tied linear decoder: logits = E_out^T f, probs = softmax(logits)."""
    logits = tg.mat_t_vec(params.E_out, f)
    probs = tg.softmax(logits)
    return logits, probs


@dataclass
class TraceStep:
    """Everything the generator computed at one timestep."""

    S_hat: np.ndarray
    p: np.ndarray
    u: np.ndarray
    f: np.ndarray
    logits: np.ndarray
    word_id: int


@dataclass
class DecodeTrace:
    steps: list[TraceStep] = field(default_factory=list)
    ended: bool = False

    @property
    def word_ids(self) -> list[int]:
        return [s.word_id for s in self.steps]

    def __len__(self):
        return len(self.steps)


def generate_caption(params: TpgnParams, v: np.ndarray, v_bar: np.ndarray,
                     mode: str = "greedy") -> DecodeTrace:
    """Roll the generator forward, emitting the argmax word each step.

    Argmax ties resolve to the lowest word id.  Stops after emitting the
    end token or after T_max steps, whichever comes first.
    """
    if mode != "greedy":
        raise ContractViolation(f"unsupported decode mode {mode!r}")
    cfg = params.config
    enc = init_sentence_state(params, v, v_bar)
    unb = initial_unbinder_state(cfg.d)
    x = cfg.start_id
    trace = DecodeTrace()
    for _ in range(cfg.T_max):
        new_enc = encoder_step(params, enc, unb.p, x)
        new_unb = unbinder_step(params, unb, enc.S_hat, x)
        u = unbinding_vector(params, new_unb.p)
        f = unbind_filler(new_enc.S_hat, u)
        logits, _ = decode_word(params, f)
        w = int(np.argmax(logits))
        trace.steps.append(TraceStep(
            S_hat=value_of(new_enc.S_hat), p=value_of(new_unb.p),
            u=value_of(u), f=value_of(f), logits=value_of(logits), word_id=w))
        enc, unb, x = new_enc, new_unb, w
        if w == cfg.end_id:
            trace.ended = True
            break
    return trace
