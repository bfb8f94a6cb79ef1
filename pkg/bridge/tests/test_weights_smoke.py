"""Smoke test against real model weights, gated behind MEVG_BRIDGE_WEIGHTS.

Point MEVG_BRIDGE_WEIGHTS at a locally downloaded diffusers text-to-video
pipeline directory (and optionally MEVG_BRIDGE_DEVICE at a torch device) to
run it; everything here is skipped when the variable is unset, since the
weights are multi-gigabyte downloads that cannot ship with the repository.
"""

import json
import os

import numpy as np
import pytest

pytestmark = pytest.mark.skipif(
    not os.environ.get("MEVG_BRIDGE_WEIGHTS"),
    reason="set MEVG_BRIDGE_WEIGHTS to a local text-to-video pipeline directory",
)

PROMPTS = [
    "a corgi runs across a sunny meadow",
    "the corgi stops and looks around",
    "the corgi lies down in the grass",
]


@pytest.fixture(scope="module")
def server():
    from mevg_bridge.backends import WeightsBackend
    from mevg_bridge.server import BridgeServer

    backend = WeightsBackend(
        os.environ["MEVG_BRIDGE_WEIGHTS"],
        device=os.environ.get("MEVG_BRIDGE_DEVICE", "cpu"),
        frames=16,
    )
    backend.capabilities()  # load weights before accepting the engine
    with BridgeServer(backend) as srv:
        yield srv


def test_three_prompt_run_scores_above_its_shuffled_self(server, tmp_path):
    from mevg.bridge import BridgePredictor
    from mevg.cli import main as mevg_main
    from mevg.latent_io import load_latent

    addr = "%s:%d" % server.address
    cfg = {
        "scenario": {"prompts": PROMPTS},
        "frames": 16,
        "delta_lfai": 1000.0,
        "delta_sgs": 7.0,
        "seed": 0,
        "predictor": "bridge",
        "bridge_addr": addr,
        "out": str(tmp_path / "run"),
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    assert mevg_main(["--config", str(path)]) == 0

    clips = [load_latent(tmp_path / "run" / f"clip_{i:03d}.lat") for i in range(3)]
    pred = BridgePredictor.connect(addr, timeout=3600.0)
    try:
        assert pred.capabilities["image_size"][-1] == 256
        video = np.concatenate([pred.decode(clip) for clip in clips], axis=0)
        assert video.shape[0] == 48 and video.shape[1] == 3
        ordered = pred.clip_image(video)
        rng = np.random.default_rng(0)
        perm = rng.permutation(video.shape[0])
        while np.array_equal(perm, np.arange(video.shape[0])):
            perm = rng.permutation(video.shape[0])
        shuffled = pred.clip_image(video[perm])
        print(f"clip_image ordered {ordered:.4f} vs shuffled {shuffled:.4f}")
        assert ordered > shuffled
    finally:
        pred.close()
