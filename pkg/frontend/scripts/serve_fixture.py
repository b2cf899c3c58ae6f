"""Start a disposable challenge service for frontend end-to-end tests.

Builds a one-entry pool from an untrained model (which captions nothing
correctly, so the entry qualifies), writes a meta JSON with the bound
port and the entry's gold caption, then serves until killed.

usage: python3 serve_fixture.py META_PATH
"""

import json
import random
import sys
import threading

import numpy as np

from tpgn.captcha import CaptchaConfig, CaptchaService, build_pool
from tpgn.corpus import (default_grammar, feature_size, gold_captions,
                         sample_scene, scene_tuples)
from tpgn.model import TpgnConfig, TpgnParams
from tpgn.server import make_server


def main() -> int:
    meta_path = sys.argv[1]
    g = default_grammar()
    cfg = TpgnConfig(d=2, V=len(g.vocab), d_v=feature_size(g), T_max=4)
    params = TpgnParams.zeros(cfg)
    scene = sample_scene(7)
    pool = build_pool(params, [(scene, scene_tuples(scene).tuples)],
                      CaptchaConfig(pool_min_size=1),
                      v_bar=np.zeros(cfg.d_v), checkpoint_id="fixture",
                      grammar=g)
    service = CaptchaService(pool, CaptchaConfig(session_ttl=300.0),
                             rng=random.Random(0), grammar=g)
    server = make_server(service, port=0)
    port = server.server_address[1]
    with open(meta_path, "w") as f:
        json.dump({"port": port,
                   "gold_caption": gold_captions(scene, g)[0],
                   "model_caption": pool.entries[0].model_caption}, f)
    print(f"fixture service on port {port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
