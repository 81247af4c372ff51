#!/usr/bin/env python3
"""Smoke test for the lvdc_py bindings.

Builds nothing itself: run `cargo build -p lvdc-py` (or --release) first.
The script copies the produced cdylib next to a temp directory under the
importable name, loads it, and runs a midpoint fault end to end.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_lvdc_py():
    candidates = [
        REPO / "target" / "release" / "liblvdc_py.so",
        REPO / "target" / "debug" / "liblvdc_py.so",
        REPO / "target" / "release" / "liblvdc_py.dylib",
        REPO / "target" / "debug" / "liblvdc_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("build the bindings first: cargo build -p lvdc-py")
    stage = Path(tempfile.mkdtemp(prefix="lvdc_py_"))
    suffix = ".so" if built.suffix == ".so" else ".so"  # CPython loads .so on mac too
    shutil.copy2(built, stage / f"lvdc_py{suffix}")
    sys.path.insert(0, str(stage))
    import lvdc_py

    return lvdc_py


def main():
    lvdc = import_lvdc_py()

    topo = lvdc.Topology.defaults("point_to_point")
    assert topo.line_length_km == 2.0
    assert topo.initial_voltage == 760.0

    # closed-form checks
    g = lvdc.gamma_at_inception(0.35e-3, 2.0, 1e-3)
    assert abs(g - 0.4118) < 5e-4, g
    assert lvdc.remote_gain_ptp(1.0, 2.0) == 1.0
    assert abs(lvdc.remote_gain_ptg(0.5, 2.0, 0.25, 0.1, 0.1) - 0.225 / 0.475) < 1e-12
    assert abs(lvdc.remote_gain_multiterminal(1.0, [2.0] * 6 + [0.0]) - 1 / 7) < 1e-12

    # simulate a midpoint pole-to-pole fault and locate it
    wave = lvdc.simulate_fault(topo, "ptp", 1.0, 1e-3, post_fault=30e-5)
    assert set(wave.channel_names()) >= {"v1", "v_dc1", "u1", "i_dc1"}
    assert len(wave) == len(wave.channel("u1"))

    outcome = lvdc.locate_fault(wave, topo, "ptp")
    err = outcome.percent_error(1.0)
    assert err < 2.0, f"location error {err}% of line length"
    assert outcome.plateau_duration_s >= 2e-6

    # a noisy run still locates with a wider plateau band at 1 MS/s
    noisy = lvdc.simulate_fault(
        topo, "ptp", 1.0, 0.1, post_fault=40e-5, sample_rate=1e6, snr_db=40.0, seed=7
    )
    noisy_outcome = lvdc.locate_fault(
        noisy, topo, "ptp", plateau_tolerance=0.05, trigger_threshold=38.0,
        analysis_span=3.8e-4,
    )
    noisy_err = noisy_outcome.percent_error(1.0)
    assert noisy_err < 5.0, f"noisy location error {noisy_err}%"
    assert not math.isnan(noisy_outcome.estimate_km)

    print(
        "smoke test PASS: clean estimate "
        f"{outcome.estimate_km:.4f} km ({err:.2e}% error), "
        f"noisy estimate {noisy_outcome.estimate_km:.4f} km ({noisy_err:.2f}% error)"
    )


if __name__ == "__main__":
    main()
