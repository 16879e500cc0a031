import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hankel_doa.array_signal import ArrayConfig, random_sla  # noqa: E402
from hankel_doa.hankel_ops import build_index_map  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_config():
    return ArrayConfig(m=5, omega=(1, 2, 4, 5))


@pytest.fixture
def small_map(small_config):
    return build_index_map(small_config)


@pytest.fixture(scope="session")
def sla18():
    return random_sla(21, 18, seed=0)


@pytest.fixture(scope="session")
def sla18_map(sla18):
    return build_index_map(sla18)


@pytest.fixture(scope="session")
def sla10():
    return random_sla(21, 10, seed=0)


def random_phase_dict(n_enc, n_dec, rng, k, scale=0.3):
    def block(n):
        ws = [np.eye(n) + rng.uniform(-scale, scale, (n, n)) for _ in range(3)]
        bs = [rng.uniform(-0.1, 0.1, n) for _ in range(3)]
        return ws, bs

    enc_w, enc_b = block(n_enc)
    dec_w, dec_b = block(n_dec)
    return {
        "enc_w": enc_w,
        "enc_b": enc_b,
        "dec_w": dec_w,
        "dec_b": dec_b,
        "beta": 0.9 if k == 0 else float(rng.uniform(0.2, 0.8)),
        "gamma": 0.0 if k == 0 else float(rng.uniform(-0.3, 0.3)),
    }


def random_phases(hmap, k_phases, seed=7):
    rng = np.random.default_rng(seed)
    return [random_phase_dict(len(hmap.phi), 2 * hmap.hankel_size, rng, k) for k in range(k_phases + 1)]


def params_from_dicts(phases, residual_mode="masked"):
    from hankel_doa.net import NetParams, PhaseParams

    return NetParams(
        [
            PhaseParams(
                [w.copy() for w in p["enc_w"]],
                [b.copy() for b in p["enc_b"]],
                [w.copy() for w in p["dec_w"]],
                [b.copy() for b in p["dec_b"]],
                p["beta"],
                p["gamma"],
            )
            for p in phases
        ],
        residual_mode,
    )


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
