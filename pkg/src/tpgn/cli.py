"""Operator entry point: every pipeline stage as a subcommand.

    gen-corpus    write train/val/test corpus JSON files
    pretrain      phase-1 sentence-autoencoding warm start
    train         teacher-forced training on scene features
    caption       caption one scene (by seed or split index)
    eval          BLEU-1..4 + tuple-F1 table for a split
    cluster-roles k-means over unbinding vectors vs POS tags
    build-pool    collect hard scenes into a challenge pool
    serve         run the challenge HTTP service

Config precedence: command-line flags > --config JSON file > defaults.
Every command that writes outputs drops a ``<name>.manifest.json`` with
the resolved config, seed and sha256 of each output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import random
import sys
from pathlib import Path

import numpy as np

from .captcha import (CaptchaConfig, CaptchaService, ChallengePool,
                      PoolTooSmallError, build_pool, caption_text)
from .checkpoint import checkpoint_id, load_checkpoint, save_checkpoint
from .clustering import cluster_unbinding_vectors
from .corpus import (DEFAULT_SPLITS, CorpusSplit, build_split,
                     default_grammar, feature_size, render_svg,
                     sample_scene, scene_features, scene_tuples)
from .evaluation import (caption_targets, eval_report_tsv, evaluate_split,
                         training_examples)
from .model import TpgnConfig, TpgnParams, generate_caption
from .train import (CorpusStats, PretrainEncoderParams, TrainConfig, fit,
                    pretrain)

__all__ = ["main"]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, seed: int,
                    inputs: list, outputs: list[Path]) -> None:
    doc = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    name = f"{command.replace('-', '_')}.manifest.json"
    with open(out_dir / name, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=1)


def _load_config_file(path) -> dict:
    if not path:
        return {}
    with open(path) as f:
        return json.load(f)


def _resolve(args, file_cfg: dict, key: str, default):
    """flags > config file > default (flags use None as 'unset')."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in file_cfg:
        return file_cfg[key]
    return default


def _model_config(args, file_cfg: dict) -> TpgnConfig:
    g = default_grammar()
    return TpgnConfig(
        d=int(_resolve(args, file_cfg, "d", 6)),
        V=len(g.vocab),
        d_v=int(_resolve(args, file_cfg, "d_v", feature_size(g))),
        T_max=int(_resolve(args, file_cfg, "T_max", 16)),
        start_id=g.start_id,
        end_id=g.end_id,
    )


def _train_config(args, file_cfg: dict, phase: str) -> TrainConfig:
    return TrainConfig(
        learning_rate=float(_resolve(args, file_cfg, "learning_rate", 0.5)),
        epochs=int(_resolve(args, file_cfg, "epochs",
                            8 if phase == "pretrain" else 30)),
        batch_size=int(_resolve(args, file_cfg, "batch_size", 1)),
        seed=int(_resolve(args, file_cfg, "seed", 0)),
        clip=float(_resolve(args, file_cfg, "clip", 5.0)),
        phase=phase,
    )


def _load_split(corpus_dir, name: str) -> CorpusSplit:
    path = Path(corpus_dir) / f"{name}.json"
    if not path.is_file():
        raise SystemExit(f"error: corpus split not found: {path} "
                         f"(run gen-corpus first)")
    return CorpusSplit.from_json(path.read_text())


def _load_params(path):
    if not Path(path).is_file():
        raise SystemExit(f"error: checkpoint not found: {path}")
    return load_checkpoint(path)


def _v_bar(train_split: CorpusSplit) -> np.ndarray:
    return CorpusStats.from_features(train_split.features).v_bar


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_corpus(args):
    file_cfg = _load_config_file(args.config)
    d_v = int(_resolve(args, file_cfg, "d_v", feature_size()))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    ranges = {}
    for name, default_range in DEFAULT_SPLITS.items():
        lo, hi = _resolve(args, file_cfg, f"{name}_range",
                          f"{default_range[0]}:{default_range[1]}").split(":")
        ranges[name] = (int(lo), int(hi))
    for name, (lo, hi) in ranges.items():
        split = build_split(name, lo, hi, d_v=d_v)
        path = out_dir / f"{name}.json"
        path.write_text(split.to_json())
        outputs.append(path)
        print(f"wrote {path} ({hi - lo} scenes)")
    _write_manifest(out_dir, "gen-corpus",
                    {"d_v": d_v, "ranges": {k: list(v)
                                            for k, v in ranges.items()}},
                    seed=0, inputs=[], outputs=outputs)
    return 0


def cmd_pretrain(args):
    file_cfg = _load_config_file(args.config)
    cfg = _model_config(args, file_cfg)
    tc = _train_config(args, file_cfg, "pretrain")
    g = default_grammar()
    train = _load_split(args.corpus, "train")
    sentences = caption_targets(train, g)
    params = TpgnParams.init_random(cfg, seed=tc.seed)
    encoder = PretrainEncoderParams.init_random(cfg, seed=tc.seed + 1)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = out.with_suffix(".log.tsv")
    params, encoder, history = pretrain(params, encoder, sentences, tc,
                                        log_path=log_path)
    save_checkpoint(out, params, encoder=encoder)
    print(f"pretrain final loss {history[-1]:.4f} -> {out}")
    _write_manifest(out.parent, "pretrain",
                    {**cfg.to_dict(), "epochs": tc.epochs,
                     "learning_rate": tc.learning_rate, "clip": tc.clip},
                    seed=tc.seed, inputs=[args.corpus],
                    outputs=[out, log_path])
    return 0


def cmd_train(args):
    file_cfg = _load_config_file(args.config)
    tc = _train_config(args, file_cfg, "main")
    g = default_grammar()
    train = _load_split(args.corpus, "train")
    val = _load_split(args.corpus, "val")
    v_bar = _v_bar(train)
    if args.init:
        params = _load_params(args.init)
        cfg = params.config
    else:
        cfg = _model_config(args, file_cfg)
        params = TpgnParams.init_random(cfg, seed=tc.seed)
    if cfg.d_v != train.d_v:
        raise SystemExit(f"error: corpus d_v={train.d_v} does not match "
                         f"model d_v={cfg.d_v}")
    examples = training_examples(train, v_bar, g)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = out.with_suffix(".log.tsv")
    stop = float(_resolve(args, file_cfg, "early_stop_f1", 0.0))

    eval_fn = None
    if stop > 0:
        def eval_fn(p):
            return evaluate_split(p, val, v_bar, g)["spice_lite"]

    params, history = fit(params, examples, tc, log_path=log_path,
                          eval_fn=eval_fn, stop_threshold=stop or None)
    save_checkpoint(out, params)
    print(f"train final loss {history[-1]:.4f} after {len(history)} "
          f"epochs -> {out}")
    _write_manifest(out.parent, "train",
                    {**cfg.to_dict(), "epochs": tc.epochs,
                     "learning_rate": tc.learning_rate, "clip": tc.clip,
                     "batch_size": tc.batch_size, "early_stop_f1": stop},
                    seed=tc.seed, inputs=[args.corpus], outputs=[out, log_path])
    return 0


def cmd_caption(args):
    params = _load_params(args.checkpoint)
    g = default_grammar()
    train = _load_split(args.corpus, "train")
    v_bar = _v_bar(train)
    if args.seed is not None:
        scene = sample_scene(args.seed)
        v = scene_features(scene, params.config.d_v, g)
    else:
        split = _load_split(args.corpus, args.split)
        if not 0 <= args.index < len(split.scenes):
            raise SystemExit(f"error: index {args.index} outside split")
        scene = split.scenes[args.index]
        v = split.features[args.index]
    text = caption_text(params, v, v_bar, g)
    print(text)
    if args.show_tuples:
        print("gold:", sorted(scene_tuples(scene).tuples))
    if args.svg_out:
        Path(args.svg_out).write_text(render_svg(scene))
        print(f"svg -> {args.svg_out}")
    return 0


def cmd_eval(args):
    params = _load_params(args.checkpoint)
    g = default_grammar()
    train = _load_split(args.corpus, "train")
    v_bar = _v_bar(train)
    rows = {}
    for name in args.splits.split(","):
        split = _load_split(args.corpus, name.strip())
        rows[name.strip()] = evaluate_split(params, split, v_bar, g)
    report = eval_report_tsv(rows)
    sys.stdout.write(report)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report)
        _write_manifest(out.parent, "eval", {"splits": args.splits},
                        seed=0, inputs=[args.corpus, args.checkpoint],
                        outputs=[out])
    return 0


def cmd_cluster_roles(args):
    params = _load_params(args.checkpoint)
    g = default_grammar()
    train = _load_split(args.corpus, "train")
    split = _load_split(args.corpus, args.split)
    v_bar = _v_bar(train)
    n = min(args.n, len(split.scenes))
    traces = [generate_caption(params, split.features[i], v_bar)
              for i in range(n)]
    k = args.k or len(g.pos_tags)
    report = cluster_unbinding_vectors(
        traces, k, tag_of_word=lambda w: g.pos_of(g.vocab[w]),
        seed=args.seed, end_id=g.end_id)
    doc = report.to_dict()
    print(json.dumps(doc, indent=1, sort_keys=True))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(doc, indent=1, sort_keys=True))
        _write_manifest(out.parent, "cluster-roles",
                        {"k": k, "split": args.split, "n": n},
                        seed=args.seed,
                        inputs=[args.corpus, args.checkpoint], outputs=[out])
    return 0


def cmd_build_pool(args):
    file_cfg = _load_config_file(args.config)
    params = _load_params(args.checkpoint)
    g = default_grammar()
    train = _load_split(args.corpus, "train")
    v_bar = _v_bar(train)
    cc = CaptchaConfig(
        gamma1=float(_resolve(args, file_cfg, "gamma1", 0.04)),
        gamma2=float(_resolve(args, file_cfg, "gamma2", 0.3)),
        pool_min_size=int(_resolve(args, file_cfg, "pool_min_size", 3)),
    )
    split = _load_split(args.corpus, args.split)
    candidates = list(zip(split.scenes, split.tuples))
    if args.extra_range:
        lo, hi = (int(x) for x in args.extra_range.split(":"))
        for seed in range(lo, hi):
            scene = sample_scene(seed)
            candidates.append((scene, scene_tuples(scene).tuples))
    try:
        pool = build_pool(params, candidates, cc, v_bar,
                          checkpoint_id=checkpoint_id(args.checkpoint), grammar=g)
    except PoolTooSmallError as e:
        raise SystemExit(f"error: {e} (try --extra-range)")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(pool.to_json())
    print(f"pool size {len(pool.entries)} / {len(candidates)} candidates "
          f"-> {out}")
    _write_manifest(out.parent, "build-pool",
                    {"gamma1": cc.gamma1, "split": args.split,
                     "extra_range": args.extra_range or ""},
                    seed=0, inputs=[args.corpus, args.checkpoint],
                    outputs=[out])
    return 0


def cmd_serve(args):
    from .server import serve_forever
    file_cfg = _load_config_file(args.config)
    pool_path = Path(args.pool)
    if not pool_path.is_file():
        raise SystemExit(f"error: pool file not found: {pool_path}")
    pool = ChallengePool.from_json(pool_path.read_text())
    cc = CaptchaConfig(
        gamma1=pool.gamma1,
        gamma2=float(_resolve(args, file_cfg, "gamma2", 0.3)),
        session_ttl=float(_resolve(args, file_cfg, "ttl", 120.0)),
        pool_min_size=1,
    )
    service = CaptchaService(pool, cc, rng=random.Random(args.seed)
                             if args.seed is not None else None)
    serve_forever(service, args.host, args.port, static_root=args.static)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tpgn", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("gen-corpus", help="write corpus JSON files")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--d-v", dest="d_v", type=int, default=None)
    for name in DEFAULT_SPLITS:
        p.add_argument(f"--{name}-range", dest=f"{name}_range", default=None,
                       help="lo:hi seed range")
    p.set_defaults(fn=cmd_gen_corpus)

    p = sub.add_parser("pretrain", help="sentence-autoencoding warm start")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float,
                   default=None)
    p.add_argument("--clip", type=float, default=None)
    p.add_argument("--d", type=int, default=None)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("train", help="train on scene features")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", help="checkpoint to start from")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float,
                   default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--clip", type=float, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--early-stop-f1", dest="early_stop_f1", type=float,
                   default=None, help="stop when val tuple-F1 reaches this")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("caption", help="caption one scene")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--show-tuples", action="store_true")
    p.add_argument("--svg-out", dest="svg_out",
                   help="also write the scene SVG here")
    p.set_defaults(fn=cmd_caption)

    p = sub.add_parser("eval", help="metric table for splits")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--splits", default="test")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("cluster-roles", help="cluster unbinding vectors")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--n", type=int, default=200, help="trace count")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_cluster_roles, seed=0)

    p = sub.add_parser("build-pool", help="collect hard scenes")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--gamma1", type=float, default=None)
    p.add_argument("--pool-min-size", dest="pool_min_size", type=int,
                   default=None)
    p.add_argument("--extra-range", dest="extra_range", default=None,
                   help="lo:hi extra candidate seeds")
    p.set_defaults(fn=cmd_build_pool)

    p = sub.add_parser("serve", help="run the challenge HTTP service")
    add_common(p)
    p.add_argument("--pool", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--gamma2", type=float, default=None)
    p.add_argument("--ttl", type=float, default=None)
    p.add_argument("--static", help="directory served at /")
    p.set_defaults(fn=cmd_serve)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
