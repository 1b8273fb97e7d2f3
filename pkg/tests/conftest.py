import numpy as np
import pytest
import torch

from gvc.video import Frame, VideoSequence, synth_dataset

# desk-scale training recipe shared by the learning-effect checks
DESK_TRAIN = dict(num_videos=1000, length=12, size=16, epochs=20, seed=0, data_seed=1)


def make_frame(arr) -> Frame:
    a = np.asarray(arr, dtype=np.uint8)
    if a.ndim == 2:
        a = a[None]
    return Frame(a)


def textured_video(length=6, h=16, w=16, seed=0, drift=1) -> VideoSequence:
    """Smooth gradient texture translating by ``drift`` pixels per frame."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w + drift * length]
    base = 128 + 60 * np.sin(xx / 3.0 + rng.uniform(0, 6)) + 40 * np.cos(yy / 4.0 + rng.uniform(0, 6))
    frames = [base[:, k * drift:k * drift + w] for k in range(length)]
    return VideoSequence.from_array(np.clip(np.rint(frames), 0, 255).astype(np.uint8)[:, None])


@pytest.fixture(scope="session")
def trained_predictor():
    """Train the desk-scale predictor once per session (about 6-7 CPU-minutes)."""
    import time

    from gvc.diffusion.sampling import DiffusionPredictor, TorchEpsModel
    from gvc.diffusion.training import PredictorConfig, train_predictor

    torch.set_num_threads(1)
    cfg = PredictorConfig()
    data = synth_dataset(DESK_TRAIN["num_videos"], DESK_TRAIN["length"], DESK_TRAIN["size"],
                         DESK_TRAIN["size"], seed=DESK_TRAIN["data_seed"])
    t0 = time.process_time()
    res = train_predictor(data, cfg, DESK_TRAIN["epochs"], seed=DESK_TRAIN["seed"])
    cpu_s = time.process_time() - t0
    pred = DiffusionPredictor(TorchEpsModel(res.model), cfg.schedule())
    return pred, res, cpu_s


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
