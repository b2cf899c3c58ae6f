"""Teacher-forced training, plain SGD with global-norm clipping, and the
sentence-autoencoding warm start.

The warm start trains a gated recurrent encoder (hidden width d^2) that
compresses a sentence into a vector z; z is reshaped into the d x d
initial state of the generator, which then reconstructs the sentence.
Afterwards z is dropped and the generator trains on scene features,
starting from the warmed parameters.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from . import tensor as tg
from .model import (EncoderState, TpgnConfig, TpgnParams, encoder_step,
                    init_sentence_state, initial_unbinder_state,
                    unbind_filler, unbinder_step, unbinding_vector)
from .tensor import ContractViolation, Tape, Var, value_of

__all__ = [
    "TrainConfig",
    "CorpusStats",
    "PretrainEncoderParams",
    "caption_loss",
    "caption_loss_value",
    "train_epoch",
    "fit",
    "pretrain",
    "pretrain_loss",
    "encode_sentence",
    "clip_gradients",
    "global_norm",
]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.3
    epochs: int = 20
    batch_size: int = 1
    seed: int = 0
    clip: float = 5.0
    phase: str = "main"  # or "pretrain"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ContractViolation("learning rate must be >= 0")
        if self.clip <= 0:
            raise ContractViolation("clip threshold must be > 0")
        if self.phase not in ("main", "pretrain"):
            raise ContractViolation(f"unknown phase {self.phase!r}")


@dataclass
class CorpusStats:
    """Mean of all training feature vectors."""

    v_bar: np.ndarray

    @classmethod
    def from_features(cls, features) -> "CorpusStats":
        stack = np.asarray(list(features), dtype=float)
        if stack.ndim != 2 or stack.shape[0] == 0:
            raise ContractViolation("need at least one feature vector")
        return cls(v_bar=stack.mean(axis=0))


# ---------------------------------------------------------------------------
# teacher-forced caption loss


def _teacher_forced_loss(params, enc0: EncoderState, target) -> object:
    """Mean over timesteps of -log p(target word); inputs are gold words."""
    cfg = params.config
    unb = initial_unbinder_state(cfg.d)
    enc = enc0
    x_prev = cfg.start_id
    losses = []
    for tgt in target:
        new_enc = encoder_step(params, enc, unb.p, x_prev)
        new_unb = unbinder_step(params, unb, enc.S_hat, x_prev)
        u = unbinding_vector(params, new_unb.p)
        f = unbind_filler(new_enc.S_hat, u)
        logits = tg.mat_t_vec(params.E_out, f)
        losses.append(tg.cross_entropy_logits(logits, int(tgt)))
        enc, unb, x_prev = new_enc, new_unb, int(tgt)
    return tg.mean_scalars(losses)


def _check_target(cfg: TpgnConfig, target) -> list[int]:
    target = [int(t) for t in target]
    if not target:
        raise ContractViolation("empty target caption")
    if target[-1] != cfg.end_id:
        raise ContractViolation("target must end with the end token")
    if len(target) > cfg.T_max:
        raise ContractViolation(
            f"target length {len(target)} exceeds T_max {cfg.T_max}")
    return target


def caption_loss(params: TpgnParams, v, v_bar, target):
    """Recorded scalar loss for one (scene features, caption) pair.

    Returns (loss Var, tape, traced params namespace).
    """
    target = _check_target(params.config, target)
    tape = Tape()
    traced = params.traced(tape)
    enc0 = init_sentence_state(traced, v, v_bar)
    loss = _teacher_forced_loss(traced, enc0, target)
    return loss, tape, traced


def caption_loss_value(params: TpgnParams, v, v_bar, target) -> float:
    """Same loss without recording (used by evaluation and by finite
    differences, which must not touch the gradient path)."""
    target = _check_target(params.config, target)
    enc0 = init_sentence_state(params, v, v_bar)
    return float(value_of(_teacher_forced_loss(params, enc0, target)))


# ---------------------------------------------------------------------------
# SGD


def global_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g)))
    return float(np.sqrt(total))


def clip_gradients(grads: dict[str, np.ndarray], clip: float
                   ) -> dict[str, np.ndarray]:
    """Scale all gradients so the global norm is at most ``clip``."""
    norm = global_norm(grads)
    if norm > clip:
        s = clip / norm
        return {n: g * s for n, g in grads.items()}
    return grads


def _grads_by_name(traced: SimpleNamespace, raw_grads: dict
                   ) -> dict[str, np.ndarray]:
    out = {}
    for n in traced.names:
        g = tg.grad_for(raw_grads, getattr(traced, n))
        if g is not None:
            out[n] = g
    return out


def _example_grads(params, v, v_bar, target):
    loss, tape, traced = caption_loss(params, v, v_bar, target)
    raw = tg.backward(tape, loss)
    return float(value_of(loss)), _grads_by_name(traced, raw)


def _apply_sgd(params, grads: dict[str, np.ndarray], lr: float) -> None:
    for n, g in grads.items():
        getattr(params, n)[...] -= lr * g


def train_epoch(params: TpgnParams, examples, cfg: TrainConfig,
                rng: np.random.Generator | None = None):
    """One pass of SGD over (features, v_bar, target) examples.

    Deterministic given the generator state: the shuffle order is drawn
    from ``rng`` (seeded from cfg.seed when not supplied).  Aborts with a
    diagnostic naming the offending example on a non-finite loss.
    """
    if not examples:
        raise ContractViolation("empty corpus")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(examples))
    total = 0.0
    batch: dict[str, np.ndarray] = {}
    pending = 0
    for pos, idx in enumerate(order):
        v, v_bar, target = examples[idx]
        loss, grads = _example_grads(params, v, v_bar, target)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"non-finite loss {loss!r} on example {idx}")
        total += loss
        for n, g in grads.items():
            if n in batch:
                batch[n] += g
            else:
                batch[n] = g.copy()
        pending += 1
        if pending == cfg.batch_size or pos == len(order) - 1:
            for n in batch:
                batch[n] /= pending
            batch = clip_gradients(batch, cfg.clip)
            _apply_sgd(params, batch, cfg.learning_rate)
            batch = {}
            pending = 0
    return params, total / len(examples)


def fit(params: TpgnParams, examples, cfg: TrainConfig, log_path=None,
        eval_fn=None, stop_threshold=None):
    """Run cfg.epochs epochs; optional early stop when eval_fn(params)
    reaches stop_threshold.  Writes one tab-separated line per epoch:
    epoch, mean loss, wall seconds."""
    rng = np.random.default_rng(cfg.seed)
    history = []
    log = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            _, mean_loss = train_epoch(params, examples, cfg, rng=rng)
            dt = time.perf_counter() - t0
            history.append(mean_loss)
            if log:
                log.write(f"{epoch}\t{mean_loss:.6f}\t{dt:.3f}\n")
                log.flush()
            if eval_fn is not None and stop_threshold is not None:
                if eval_fn(params) >= stop_threshold:
                    break
    finally:
        if log:
            log.close()
    return params, history


# ---------------------------------------------------------------------------
# sentence-autoencoding warm start


def _encoder_shapes(cfg: TpgnConfig) -> dict[str, tuple[int, ...]]:
    d, V = cfg.d, cfg.V
    h = d * d
    shapes: dict[str, tuple[int, ...]] = {"E_enc": (d, V)}
    for g in ("r", "z", "h"):
        shapes[f"Wg_{g}"] = (h, d)
        shapes[f"Ug_{g}"] = (h, h)
        shapes[f"bg_{g}"] = (h,)
    return shapes


class PretrainEncoderParams:
    """Single-layer gated recurrent sentence encoder, hidden width d^2."""

    def __init__(self, config: TpgnConfig, seed: int,
                 arrays: dict[str, np.ndarray]):
        self.config = config
        self.seed = seed
        self.names = tuple(sorted(arrays))
        expected = _encoder_shapes(config)
        if set(arrays) != set(expected):
            raise ContractViolation("encoder parameter set mismatch")
        for n in self.names:
            a = np.asarray(arrays[n], dtype=float)
            if a.shape != expected[n]:
                raise ContractViolation(f"{n}: {a.shape} != {expected[n]}")
            setattr(self, n, a)

    @classmethod
    def init_random(cls, config: TpgnConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        arrays = {}
        for n, shape in _encoder_shapes(config).items():
            if n.startswith("b"):
                arrays[n] = np.zeros(shape)
            elif n == "E_enc":
                arrays[n] = rng.normal(size=shape) * 0.1
            else:
                arrays[n] = rng.normal(size=shape) * (0.1 / np.sqrt(shape[-1]))
        return cls(config, seed, arrays)

    def items(self):
        return [(n, getattr(self, n)) for n in self.names]

    def copy(self):
        return PretrainEncoderParams(
            self.config, self.seed,
            {n: getattr(self, n).copy() for n in self.names})

    def traced(self, tape: Tape) -> SimpleNamespace:
        ns = SimpleNamespace(config=self.config)
        for n in self.names:
            setattr(ns, n, Var(getattr(self, n), tape))
        ns.names = self.names
        return ns


def encode_sentence(enc, token_ids) -> object:
    """Gated recurrent pass over the word ids; returns z in R^{d^2}."""
    cfg = enc.config
    h = np.zeros(cfg.d * cfg.d)
    for w in token_ids:
        e = tg.column(enc.E_enc, int(w))
        r = tg.logistic(tg.signed_sum(
            (tg.matvec(enc.Wg_r, e), tg.matvec(enc.Ug_r, h), enc.bg_r),
            (1, 1, 1)))
        zgate = tg.logistic(tg.signed_sum(
            (tg.matvec(enc.Wg_z, e), tg.matvec(enc.Ug_z, h), enc.bg_z),
            (1, 1, 1)))
        cand = tg.tanh(tg.signed_sum(
            (tg.matvec(enc.Wg_h, e), tg.matvec(enc.Ug_h, tg.hadamard(r, h)),
             enc.bg_h), (1, 1, 1)))
        # h' = (1 - zgate) * h + zgate * cand
        h = tg.add(tg.sub(h, tg.hadamard(zgate, h)), tg.hadamard(zgate, cand))
    return h


def pretrain_loss(params: TpgnParams, enc: PretrainEncoderParams, target):
    """Reconstruction loss: sentence -> z -> generator -> same sentence.

    The encoder reads the caption words (end token excluded); z replaces
    the scene-feature initial state.  Returns (loss, tape, traced params,
    traced encoder)."""
    cfg = params.config
    target = _check_target(cfg, target)
    tape = Tape()
    traced_p = params.traced(tape)
    traced_e = enc.traced(tape)
    z = encode_sentence(traced_e, target[:-1])
    S0 = tg.reshape(z, (cfg.d, cfg.d))
    enc0 = EncoderState(S_hat=S0, c1=np.zeros((cfg.d, cfg.d)))
    loss = _teacher_forced_loss(traced_p, enc0, target)
    return loss, tape, traced_p, traced_e


def pretrain(params: TpgnParams, enc: PretrainEncoderParams, sentences,
             cfg: TrainConfig, log_path=None):
    """Phase-1 training: no scene input, the generator reconstructs each
    sentence from the encoder's z.  All parameters (generator and encoder)
    update jointly.  Returns (params, enc, history)."""
    if not sentences:
        raise ContractViolation("empty sentence list")
    rng = np.random.default_rng(cfg.seed)
    history = []
    log = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(sentences))
            total = 0.0
            for idx in order:
                target = sentences[idx]
                loss, tape, tp, te = pretrain_loss(params, enc, target)
                lv = float(value_of(loss))
                if not np.isfinite(lv):
                    raise FloatingPointError(
                        f"non-finite loss {lv!r} on sentence {idx}")
                total += lv
                raw = tg.backward(tape, loss)
                gp = _grads_by_name(tp, raw)
                ge = _grads_by_name(te, raw)
                merged = {("p:" + n): g for n, g in gp.items()}
                merged.update({("e:" + n): g for n, g in ge.items()})
                merged = clip_gradients(merged, cfg.clip)
                for n, g in merged.items():
                    owner = params if n.startswith("p:") else enc
                    getattr(owner, n[2:])[...] -= cfg.learning_rate * g
            mean_loss = total / len(sentences)
            history.append(mean_loss)
            dt = time.perf_counter() - t0
            if log:
                log.write(f"{epoch}\t{mean_loss:.6f}\t{dt:.3f}\n")
                log.flush()
    finally:
        if log:
            log.close()
    return params, enc, history
