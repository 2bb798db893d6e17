import csv
import io
import json
from pathlib import Path

import pytest

import main
from models import QuboInstance
from services.qubo import save_instance

FIXTURES = Path(__file__).parent / "fixtures"

TINY_SPEC = """
name = "tiny"
n_qubits = [4]
edge_counts = [3]
n_instances = 3
entanglements = ["linear"]
layers = [0, 1]
rho = [0.1]
master_seed = 5

[[optimizers]]
kind = "quasi-newton"
max_iterations = 20
"""


def _run(capsys, *argv: str):
    code = main.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _solve_line(out: str, label: str) -> str:
    return next(line for line in out.splitlines() if line.startswith(label))


# --- gen -------------------------------------------------------------------------

def test_gen_writes_instances_and_manifest(tmp_path, capsys) -> None:
    code, out, _ = _run(capsys, "gen", "--n", "12", "--edges", "17", "--count", "5", "--seed", "7", "--out", str(tmp_path))

    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == [f"instance_{k:03d}.json" for k in range(5)] + ["manifest.json"]
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert [m["file"] for m in manifest] == [f"instance_{k:03d}.json" for k in range(5)]
    assert all(m["density"] == pytest.approx(17 / 66) for m in manifest)
    assert len({m["seed"] for m in manifest}) == 5


def test_gen_is_byte_identical_on_rerun(tmp_path, capsys) -> None:
    for name in ("a", "b"):
        _run(capsys, "gen", "--n", "8", "--edges", "10", "--count", "3", "--seed", "7", "--out", str(tmp_path / name))

    for path in (tmp_path / "a").iterdir():
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()


def test_gen_reports_density_rounding(tmp_path, capsys) -> None:
    code, out, _ = _run(capsys, "gen", "--density", "0.258", "--out", str(tmp_path))

    assert code == 0
    assert "17 edges" in out


def test_gen_infeasible_regular_graph(tmp_path, capsys) -> None:
    code, _, err = _run(capsys, "gen", "--kind", "regular", "--edges", "17", "--out", str(tmp_path))

    assert code == 1
    assert "InfeasibleGraphError" in err


# --- solve -----------------------------------------------------------------------

def test_solve_plain_vqe_on_two_variables(capsys) -> None:
    code, out, _ = _run(capsys, "solve", str(FIXTURES / "qubo_n2.json"), "--rho", "1.0")

    assert code == 0
    assert _solve_line(out, "algorithm").endswith("VQE (rho=1.0)")
    overlap = float(_solve_line(out, "overlap").split(":")[1].split()[0])
    assert overlap >= 0.99
    assert _solve_line(out, "best bitstrings").split(":")[1].strip() == "11"


def test_solve_cvar_label(capsys) -> None:
    code, out, _ = _run(capsys, "solve", str(FIXTURES / "qubo_n2.json"), "--rho", "0.1")

    assert code == 0
    assert "CVaR-VQE" in _solve_line(out, "algorithm")


def test_solve_rejects_constant_instance(tmp_path, capsys) -> None:
    path = save_instance(QuboInstance(n=2, graph_kind="uniform-random", seed=0, edges=[]), tmp_path / "flat.json")
    code, _, err = _run(capsys, "solve", str(path))

    assert code == 1
    assert "DegenerateSpectrumError" in err


def test_solve_writes_trace_and_state(tmp_path, capsys) -> None:
    trace_path = tmp_path / "trace.json"
    state_path = tmp_path / "psi.bin"
    code, _, _ = _run(
        capsys, "solve", str(FIXTURES / "qubo_n2.json"), "--rho", "1.0",
        "--trace", str(trace_path), "--dump-state", str(state_path),
    )

    assert code == 0
    trace = json.loads(trace_path.read_text(encoding="utf-8"))
    assert trace["config"]["kind"] == "quasi-newton"
    assert trace["evaluations"] > 0
    assert state_path.stat().st_size == 4 * 8


# --- hardness --------------------------------------------------------------------

def test_hardness_table_for_fixture(capsys) -> None:
    code, out, _ = _run(capsys, "hardness", str(FIXTURES / "qubo_n2.json"))
    rows = list(csv.DictReader(io.StringIO(out)))

    assert code == 0
    assert len(rows) == 1
    assert float(rows[0]["d_h"]) == 0.5
    assert int(rows[0]["ground_energy"]) == -10


def test_hardness_filter_and_file_output(tmp_path, capsys) -> None:
    out_path = tmp_path / "hardness.csv"
    code, _, _ = _run(
        capsys, "hardness", str(FIXTURES / "qubo_n2.json"), str(FIXTURES / "qubo_n4.json"),
        "--dh-min", "0.4", "--out", str(out_path),
    )

    assert code == 0
    with out_path.open(encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert [int(r["n"]) for r in rows] == [2]


# --- bench and report --------------------------------------------------------------

def test_bench_then_report(tmp_path, capsys) -> None:
    spec_path = tmp_path / "tiny.toml"
    spec_path.write_text(TINY_SPEC, encoding="utf-8")
    store = tmp_path / "store"

    code, out, _ = _run(capsys, "bench", "--spec", str(spec_path), "--workers", "1", "--out", str(store))
    assert code == 0
    assert "6 result(s)" in out
    assert (store / "results.ndjson").exists()

    code, out, _ = _run(capsys, "report", str(store), "--preset", "overlap-histogram")
    assert code == 0
    with (store / "report" / "overlap-histogram_overlap.csv").open(encoding="utf-8") as f:
        assert len(list(csv.DictReader(f))) == 2 * 10


def test_bench_rejects_invalid_override(tmp_path, capsys) -> None:
    code, _, err = _run(
        capsys, "bench", "--preset", "fig5-desk", "--set", "rho=[2.0]", "--workers", "1", "--out", str(tmp_path),
    )

    assert code == 1
    assert "SpecValidationError" in err
    assert "rho" in err


def test_bench_rejects_override_without_equals(tmp_path, capsys) -> None:
    code, _, err = _run(
        capsys, "bench", "--preset", "fig5-desk", "--set", "rho", "--workers", "1", "--out", str(tmp_path),
    )

    assert code == 1
    assert "key=value" in err
    assert not (tmp_path / "results.ndjson").exists()


def test_hardness_rejects_zero_workers(capsys) -> None:
    code, _, err = _run(capsys, "hardness", str(FIXTURES / "qubo_n2.json"), "--workers", "0")

    assert code == 1
    assert "invalid input" in err


# --- reproducibility ------------------------------------------------------------------

def _bench_tiny(tmp_path: Path, capsys, out: Path, *extra: str) -> None:
    spec_path = tmp_path / "tiny.toml"
    spec_path.write_text(TINY_SPEC, encoding="utf-8")
    code, _, _ = _run(capsys, "bench", "--spec", str(spec_path), "--out", str(out), *extra)
    assert code == 0


def test_bench_reruns_from_resolved_spec(tmp_path, capsys) -> None:
    first = tmp_path / "first"
    second = tmp_path / "second"
    _bench_tiny(tmp_path, capsys, first, "--workers", "1")

    code, _, _ = _run(
        capsys, "bench", "--spec", str(first / "spec.resolved.json"), "--workers", "1", "--out", str(second),
    )

    assert code == 0
    assert (first / "results.ndjson").read_bytes() == (second / "results.ndjson").read_bytes()


def test_bench_results_independent_of_worker_count(tmp_path, capsys) -> None:
    _bench_tiny(tmp_path, capsys, tmp_path / "serial", "--workers", "1")
    _bench_tiny(tmp_path, capsys, tmp_path / "pooled", "--workers", "8")

    serial = (tmp_path / "serial" / "results.ndjson").read_bytes()
    assert serial == (tmp_path / "pooled" / "results.ndjson").read_bytes()


def test_hardness_file_is_byte_identical_on_rerun(tmp_path, capsys) -> None:
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path in paths:
        code, _, _ = _run(
            capsys, "hardness", str(FIXTURES / "qubo_n2.json"), str(FIXTURES / "qubo_n4.json"), "--out", str(path),
        )
        assert code == 0

    assert paths[0].read_bytes() == paths[1].read_bytes()


@pytest.mark.parametrize("preset", ["fig7-desk", "overlap-histogram"])
def test_report_is_byte_identical_on_rerun(tmp_path, capsys, preset: str) -> None:
    store = tmp_path / "store"
    _bench_tiny(tmp_path, capsys, store, "--workers", "1")

    for name in ("a", "b"):
        code, _, _ = _run(capsys, "report", str(store), "--preset", preset, "--out", str(tmp_path / name))
        assert code == 0

    written = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert written
    assert written == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in written:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
