"""Regenerate the frozen fixtures in tests/data.

Oracle-derived files come from tests/oracles.py only. Files marked
"regression" record the package's own output so later changes are caught.

    python tests/make_golden.py
"""

import csv
import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

import oracles  # noqa: E402

DATA = HERE / "data"

SYNTH_ANGLES = (-10.3, 24.7)
SYNTH_SEED = 2024


def synth_fixture():
    rng = np.random.default_rng(SYNTH_SEED)
    amps = rng.uniform(0.5, 1.0, 2)
    phases = rng.uniform(0, 2 * np.pi, 2)
    x = oracles.synth(21, 0.5, SYNTH_ANGLES, amps, phases)
    return amps, phases, x


def main():
    from hankel_doa.array_signal import Snapshot, add_noise, random_sla
    from hankel_doa.hankel_ops import build_index_map
    from hankel_doa.solvers import SolverConfig, fiht_solve

    DATA.mkdir(exist_ok=True)
    amps, phases, x = synth_fixture()
    np.savez(DATA / "synth_m21.npz", angles=np.array(SYNTH_ANGLES), amps=amps, phases=phases, x=x)

    # spectral init and one IHT step on the 18-element SLA (oracle)
    sla = random_sla(21, 18, seed=0)
    omega = set(sla.omega)
    mask = np.array([(t + 1) in omega for t in range(21)])
    x_s = np.where(mask, x, 0)
    init = oracles.unlift(oracles.rank_r_by_eig(oracles.lift(x_s), 2))
    step = oracles.iht_step(np.zeros(21, complex), x_s, mask, 1.0, 2)
    np.savez(DATA / "sla18_oracle.npz", omega=np.array(sla.omega), x_s=x_s, spectral_init=init, iht_step_zero=step)

    # 20 dB two-source full-array spectrum (noise draw is regression, spectrum is oracle)
    noisy = add_noise(Snapshot(x), 20.0, seed=99).values
    grid = np.linspace(-60, 60, 1201)
    power = oracles.beamform(noisy, 0.5, grid)
    np.savez(DATA / "spectrum_2src_20db.npz", noisy=noisy, grid=grid, power=power)
    with open(DATA / "spectrum_2src_20db.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_deg", "power"])
        for a, p in zip(grid, power):
            w.writerow([f"{a:.4f}", repr(float(p))])

    # FIHT trace on the 10-element SLA at 30 dB (regression)
    sla10 = random_sla(21, 10, seed=0)
    hmap10 = build_index_map(sla10)
    noisy30 = add_noise(Snapshot(x), 30.0, seed=5).values
    x_s10 = np.where(sla10.mask, noisy30, 0)
    trace = fiht_solve(x_s10, SolverConfig(rank_r=2), hmap10)
    np.savez(
        DATA / "fiht_sla10_30db.npz",
        omega=np.array(sla10.omega),
        x_s=x_s10,
        residuals=np.array(trace.residuals),
        changes=np.array(trace.changes),
        reconstruction=trace.reconstruction.values,
    )
    print("wrote", sorted(p.name for p in DATA.iterdir()))


if __name__ == "__main__":
    main()
