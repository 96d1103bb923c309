import json
import subprocess
import sys

import numpy as np
import pytest

from sifigan_bridge import GeneratorConfig, Utterance, save_config

# the engine is driven strictly through its public CLI
ENGINE = [sys.executable, "-m", "sifigan.cli"]

SMALL = GeneratorConfig(
    filter_channels=(32, 16, 8, 4, 2),
    source_channels=(16, 8, 4, 2, 1),
    cond_streams=(("mgc", 10), ("bap", 3)),
)


def run_engine(*args, expect_ok=True):
    proc = subprocess.run(
        [*ENGINE, *map(str, args)], capture_output=True, text=True
    )
    if expect_ok:
        assert proc.returncode == 0, f"engine failed:\n{proc.stderr}\n{proc.stdout}"
    return json.loads(proc.stdout), proc.returncode


@pytest.fixture
def engine():
    return run_engine


def make_utterance(frames, cfg=SMALL, seed=0, f0=None, all_voiced=False):
    rng = np.random.default_rng(seed)
    dims = dict(cfg.cond_streams)
    cf0 = (
        np.full(frames, float(f0), np.float32)
        if f0 is not None
        else rng.uniform(150, 260, frames).astype(np.float32)
    )
    vuv = (
        np.ones(frames, np.float32)
        if all_voiced
        else (rng.random(frames) > 0.3).astype(np.float32)
    )
    return Utterance(
        cf0=cf0,
        vuv=vuv,
        mgc=rng.normal(size=(frames, dims["mgc"])).astype(np.float32),
        bap=rng.normal(size=(frames, dims["bap"])).astype(np.float32),
    )


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "config.json"
    save_config(SMALL, path)
    return SMALL, path
