#!/usr/bin/env python3
"""Smoke test for the _ambc extension module.

Builds nothing itself: expects `cargo build --release -p ambc-py` (or a
debug build) to have produced the cdylib already. The library is copied
next to a temp dir under the importable name and exercised end to end.
"""

import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_cdylib() -> Path:
    candidates = []
    for profile in ("release", "debug"):
        for stem in ("lib_ambc.so", "lib_ambc.dylib", "_ambc.dll"):
            candidates.append(REPO / "target" / profile / stem)
    for path in candidates:
        if path.exists():
            return path
    sys.exit(
        "extension not built - run `cargo build --release -p ambc-py` first\n"
        f"  (looked for {', '.join(str(c) for c in candidates)})"
    )


def main() -> None:
    cdylib = locate_cdylib()
    staging = Path(tempfile.mkdtemp(prefix="ambc_py_"))
    suffix = ".pyd" if cdylib.suffix == ".dll" else ".so"
    shutil.copy2(cdylib, staging / f"_ambc{suffix}")
    sys.path.insert(0, str(staging))

    import _ambc

    # bit-domain primitives
    sync = _ambc.default_sync_sequence()
    assert len(sync) == 63 and sync.ones() == 32, "preamble balance"
    assert str(sync) == str(_ambc.generate_m_sequence()), "default generator"

    payload = _ambc.default_payload()
    frame = _ambc.build_frame(payload)
    assert len(frame) == 120, "frame length"
    assert _ambc.agreement_correlation(sync, sync) == 1.0
    assert _ambc.hamming_errors(payload, payload) == 0

    round_trip = _ambc.BitSequence(str(payload))
    assert round_trip == payload, "ASCII round trip"

    # reflection waveform: one frame lasts 4.8 s at 2 kHz
    wave = _ambc.modulate_frame(frame)
    assert len(wave) == 9600, "4.8 s at 2 kHz"
    assert set(wave) == {0.0, 1.0}, "on-off reflection states"

    # a short noiseless end-to-end run
    config = "\n".join(
        [
            "duration_s = 9.6",
            "seed = 7",
        ]
    )
    report = _ambc.run_point(config)
    assert report["transmitted_frames"] == 2
    assert report["detected_frames"] == 2
    assert report["mean_data_ber"] == 0.0
    assert all(f["correlation"] == 1.0 for f in report["frames"])

    # sweep + CSV emission
    sweep_config = config + "\n[sweep]\nsnr_db = [0.0, 10.0]\n"
    reports = _ambc.run_sweep(sweep_config)
    assert len(reports) == 2
    assert reports[0]["snr_db"] == 0.0

    out_dir = staging / "out"
    paths = _ambc.run_sweep_to_csv(sweep_config, str(out_dir))
    assert len(paths) == 3
    for p in paths:
        assert Path(p).stat().st_size > 0, f"empty report {p}"

    print("python bindings smoke test: OK")
    print(f"  preamble     {sync}")
    print(f"  payload      {payload}")
    print(
        "  9.6 s run    {}/{} frames, BER {}".format(
            report["detected_frames"],
            report["transmitted_frames"],
            report["mean_data_ber"],
        )
    )
    print(f"  reports      {', '.join(Path(p).name for p in paths)}")


if __name__ == "__main__":
    main()
