"""Challenge-response protocol built on captioning difficulty.

Pool construction: scenes the trained model captions poorly (tuple
F-score below gamma1) become challenges.  Grading: an answer whose tuple
F-score against the scene's gold tuples exceeds gamma2 (strictly) is
deemed human, otherwise computer.  Sessions are single-use nonces with a
TTL; the clock is injected so expiry is testable.
"""

from __future__ import annotations

import json
import secrets
import threading
import time
from dataclasses import dataclass

import numpy as np

from .corpus import GrammarSpec, Scene, default_grammar, render_svg
from .metrics import parse_caption_tuples, spice_lite
from .model import TpgnParams, generate_caption
from .tensor import ContractViolation

__all__ = [
    "CaptchaConfig",
    "PoolEntry",
    "ChallengePool",
    "PoolTooSmallError",
    "EmptyPoolError",
    "UnknownSessionError",
    "SessionExpiredError",
    "SessionReplayError",
    "Verdict",
    "CaptchaService",
    "build_pool",
    "audit_pool",
    "caption_text",
    "decide",
]

MAX_ANSWER_CHARS = 500


class PoolTooSmallError(RuntimeError):
    pass


class EmptyPoolError(RuntimeError):
    pass


class UnknownSessionError(KeyError):
    pass


class SessionExpiredError(RuntimeError):
    pass


class SessionReplayError(RuntimeError):
    pass


@dataclass(frozen=True)
class CaptchaConfig:
    gamma1: float = 0.04
    gamma2: float = 0.3
    session_ttl: float = 120.0
    pool_min_size: int = 3

    def __post_init__(self):
        if not 0.0 <= self.gamma1 < self.gamma2 <= 1.0:
            raise ContractViolation("need 0 <= gamma1 < gamma2 <= 1")
        if self.session_ttl <= 0:
            raise ContractViolation("session_ttl must be positive")
        if self.pool_min_size < 1:
            raise ContractViolation("pool_min_size must be >= 1")


@dataclass
class PoolEntry:
    scene: Scene
    gold_tuples: frozenset
    model_caption: str
    model_score: float


@dataclass
class ChallengePool:
    entries: list[PoolEntry]
    checkpoint_id: str
    gamma1: float

    def to_json(self) -> str:
        return json.dumps({
            "checkpoint_id": self.checkpoint_id,
            "gamma1": self.gamma1,
            "entries": [{
                "scene": e.scene.to_dict(),
                "gold_tuples": sorted(list(t) for t in e.gold_tuples),
                "model_caption": e.model_caption,
                "model_score": e.model_score,
            } for e in self.entries],
        }, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ChallengePool":
        doc = json.loads(text)
        return cls(
            entries=[PoolEntry(
                scene=Scene.from_dict(e["scene"]),
                gold_tuples=frozenset(tuple(t) for t in e["gold_tuples"]),
                model_caption=e["model_caption"],
                model_score=float(e["model_score"]),
            ) for e in doc["entries"]],
            checkpoint_id=doc["checkpoint_id"],
            gamma1=float(doc["gamma1"]))


def caption_text(params: TpgnParams, v, v_bar, grammar: GrammarSpec) -> str:
    """Greedy caption for one scene, end token stripped."""
    trace = generate_caption(params, v, v_bar)
    ids = [w for w in trace.word_ids if w != params.config.end_id]
    return " ".join(grammar.decode(ids))


def _model_score(params, scene, gold, v_bar, grammar, d_v) -> tuple[str, float]:
    from .corpus import scene_features
    v = scene_features(scene, d_v, grammar)
    text = caption_text(params, v, v_bar, grammar)
    parsed = parse_caption_tuples(text, grammar)
    return text, spice_lite(parsed.tuples, gold).f1


def build_pool(params: TpgnParams, scenes_with_gold, config: CaptchaConfig,
               v_bar: np.ndarray, checkpoint_id: str = "",
               grammar: GrammarSpec | None = None) -> ChallengePool:
    """Admit every candidate the model scores below gamma1 on.

    ``scenes_with_gold`` yields (scene, gold tuple set) pairs.  Raises
    PoolTooSmallError when fewer than pool_min_size candidates qualify.
    """
    g = grammar or default_grammar()
    d_v = params.config.d_v
    entries = []
    for scene, gold in scenes_with_gold:
        text, score = _model_score(params, scene, gold, v_bar, g, d_v)
        if score < config.gamma1:
            entries.append(PoolEntry(scene=scene, gold_tuples=frozenset(gold),
                                     model_caption=text, model_score=score))
    if len(entries) < config.pool_min_size:
        raise PoolTooSmallError(
            f"only {len(entries)} of the candidates scored below "
            f"gamma1={config.gamma1}; widen the candidate seed range "
            f"(need at least {config.pool_min_size})")
    return ChallengePool(entries=entries, checkpoint_id=checkpoint_id,
                         gamma1=config.gamma1)


def audit_pool(pool: ChallengePool, params: TpgnParams, v_bar,
               grammar: GrammarSpec | None = None) -> list[float]:
    """Re-score every entry from scratch; all must fall below gamma1."""
    g = grammar or default_grammar()
    scores = []
    for e in pool.entries:
        _, score = _model_score(params, e.scene, e.gold_tuples, v_bar, g,
                                params.config.d_v)
        scores.append(score)
    return scores


def decide(score: float, gamma2: float) -> str:
    """Strict inequality: a score exactly at the threshold is a computer."""
    return "human" if score > gamma2 else "computer"


@dataclass(frozen=True)
class Verdict:
    score: float
    decision: str
    threshold: float


@dataclass
class _Session:
    entry_index: int
    issued_at: float
    state: str = "open"  # open | graded | expired


class CaptchaService:
    """Thread-safe session handling over an immutable challenge pool."""

    def __init__(self, pool: ChallengePool, config: CaptchaConfig,
                 clock=time.time, rng=None,
                 grammar: GrammarSpec | None = None):
        self.pool = pool
        self.config = config
        self.clock = clock
        self.rng = rng or secrets.SystemRandom()
        self.grammar = grammar or default_grammar()
        self._sessions: dict[str, _Session] = {}
        self._lock = threading.Lock()

    @property
    def pool_size(self) -> int:
        return len(self.pool.entries)

    def issue(self) -> tuple[str, str, float]:
        """Uniformly random challenge; returns (session_id, svg, expires_at)."""
        if not self.pool.entries:
            raise EmptyPoolError("challenge pool is empty")
        idx = self.rng.randrange(len(self.pool.entries))
        now = float(self.clock())
        with self._lock:
            while True:
                sid = secrets.token_hex(16)  # 128-bit nonce
                if sid not in self._sessions:
                    break
            self._sessions[sid] = _Session(entry_index=idx, issued_at=now)
        svg = render_svg(self.pool.entries[idx].scene)
        return sid, svg, now + self.config.session_ttl

    def grade(self, session_id: str, answer: str) -> Verdict:
        """Atomically check-and-transition the session, then score.

        Raises UnknownSessionError / SessionExpiredError /
        SessionReplayError for the protocol error paths; none of those is
        a computer verdict.
        """
        now = float(self.clock())
        with self._lock:
            sess = self._sessions.get(session_id)
            if sess is None:
                raise UnknownSessionError(session_id)
            if sess.state == "open" and \
                    now > sess.issued_at + self.config.session_ttl:
                sess.state = "expired"
            if sess.state == "expired":
                raise SessionExpiredError(session_id)
            if sess.state == "graded":
                raise SessionReplayError(session_id)
            sess.state = "graded"
            entry = self.pool.entries[sess.entry_index]
        parsed = parse_caption_tuples(answer, self.grammar)
        score = spice_lite(parsed.tuples, entry.gold_tuples).f1
        return Verdict(score=score, decision=decide(score, self.config.gamma2),
                       threshold=self.config.gamma2)
