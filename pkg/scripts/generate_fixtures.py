from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from models import GraphKind, QuboInstance  # noqa: E402
from services.qubo import brute_force_spectrum, save_instance, spectrum_to_json  # noqa: E402


OUTPUT = Path("tests/fixtures")

# Hand-picked instances with spectra small enough to check by hand.
INSTANCES = {
    # E0 = -14 at x = 1011 (pattern 13), E1 = -10 at pattern 5, d_H = 1/4.
    "qubo_n4": QuboInstance(
        n=4,
        graph_kind=GraphKind.UNIFORM_RANDOM,
        seed=4,
        edges=[(0, 1, 3), (0, 2, -5), (1, 3, 7), (2, 3, -2)],
    ),
    # E0 = -10 at 11, E1 = 0 on {00, 01, 10}, d_H = 1/2.
    "qubo_n2": QuboInstance(
        n=2,
        graph_kind=GraphKind.UNIFORM_RANDOM,
        seed=2,
        edges=[(0, 1, -5)],
    ),
}


def build_fixtures() -> None:
    OUTPUT.mkdir(parents=True, exist_ok=True)
    for name, inst in INSTANCES.items():
        save_instance(inst, OUTPUT / f"{name}.json")
        report = brute_force_spectrum(inst)
        (OUTPUT / f"{name}.spectrum.json").write_text(spectrum_to_json(report), encoding="utf-8")
        print(f"Created: {OUTPUT / name}.json (d_H={report.min_hamming_distance:g})")


if __name__ == "__main__":
    build_fixtures()
