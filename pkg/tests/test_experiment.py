import csv
import json
import math
from fractions import Fraction

import pytest

from subspace_qaoa.cli import main
from subspace_qaoa.errors import StructuralError
from subspace_qaoa.experiment import (
    INSTANCE_COLUMNS,
    TRIAL_COLUMNS,
    ExperimentConfig,
    audit,
    load_run,
    memory_report,
    run_experiment,
)
from subspace_qaoa.problems import ConstraintSpec, instance_for, save_instance

# random graphs this small are often symmetric, so they only enter through the sweep
SMALL = dict(
    families=("cycle", "complete"),
    sizes=(4, 6),
    k_size=6,
    k_grid=(1, 3),
    restarts=2,
    param_sets=2,
    commutator_draws=3,
    irreducible_count=2,
    irreducible_n=3,
)
WALL = {"wall_reduce", "wall_opt_full", "wall_opt_reduced", "wall_full", "wall_reduced"}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    return run_experiment(ExperimentConfig(**SMALL), out)


def by_name(results):
    return {r.name.split()[0]: r for r in results}


def strip_wall(rows):
    return [{k: v for k, v in r.items() if k not in WALL} for r in rows]


def test_default_config_mirrors_protocol():
    cfg = ExperimentConfig()
    assert (cfg.layers, cfg.restarts, cfg.param_sets) == (2, 5, 5)
    assert cfg.sizes == (6, 8, 10, 12)
    assert cfg.k_grid == (1, 2, 3, 4, 6) and cfg.k_size == 12
    assert cfg.families == ("cycle", "complete", "erdos_renyi")
    assert len(cfg.jobs()) == 17


def test_config_hash_and_roundtrip():
    cfg = ExperimentConfig(**SMALL)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    assert ExperimentConfig(**SMALL, workers=4, out="/x").hash() == cfg.hash()
    assert ExperimentConfig(**{**SMALL, "seed": 1}).hash() != cfg.hash()
    with pytest.raises(StructuralError):
        ExperimentConfig(families=("star",))
    with pytest.raises(Exception):
        ExperimentConfig(k_grid=(13,))


def test_memory_report_examples():
    rec = memory_report(12, 4, 13)
    assert (rec["dim_full"], rec["dim_reduced"], rec["dimension_ratio"]) == (4096, 16, 256)
    assert rec["eta"] == Fraction(4096, 13)
    assert (rec["bytes_full"], rec["bytes_reduced"]) == (65536, 256)
    assert memory_report(7, 7)["dimension_ratio"] == 1
    with pytest.raises(StructuralError):
        memory_report(3, 4)


def test_small_run_passes_audit(small_run):
    results = audit(small_run)
    assert all(r.passed is not False for r in results), [r.line() for r in results if not r.passed]
    names = by_name(results)
    assert names["integrity"].passed
    assert names["1"].passed and names["3"].passed and names["8"].passed


def test_run_artifacts(small_run):
    root = small_run.parent
    manifest = json.loads(small_run.read_text())
    assert manifest["schema"] == "run-manifest/1"
    assert len(manifest["instances"]) == len(ExperimentConfig(**SMALL).jobs())
    for name in ("instances.csv", "trials.csv", "negative_control.csv", "irreducibility.csv",
                 "summary.json", "optimization.json", "plots/fig1_qubit_reduction.json"):
        assert name in manifest["artifacts"]
        assert (root / name).exists()
    for entry in manifest["instances"]:
        assert (root / entry["path"]).exists()
        assert len(entry["seeds"]["param_seeds"]) == 2
    with open(root / "instances.csv") as fh:
        assert next(csv.reader(fh)) == INSTANCE_COLUMNS
    with open(root / "trials.csv") as fh:
        assert next(csv.reader(fh)) == TRIAL_COLUMNS


def test_row_invariants(small_run):
    _, instances, trials, _, _ = load_run(small_run)
    for r in instances + trials:
        M, m, n = int(r["M"]), int(r["m"]), int(r["n"])
        assert m == math.ceil(math.log2(M)) if M > 1 else m == 0
        assert M <= 2**n
        assert int(r["dim_reduced"]) == 2**m
    # one trial row per parameter set, shared by both evolutions
    labels = [t["trial"] for t in trials if t["family"] == "cycle" and t["n"] == "6"]
    assert labels == ["0", "1", "best"]
    for t in trials:
        assert len(json.loads(t["gammas"])) == len(json.loads(t["betas"])) == 2


def test_plot_series(small_run):
    root = small_run.parent
    fig1 = json.loads((root / "plots" / "fig1_qubit_reduction.json").read_text())
    assert {"cycle", "complete"} <= set(fig1["series"])
    assert fig1["series"]["complete"]["M"] == [5, 7]
    fig2 = json.loads((root / "plots" / "fig2_constraint_sweep.json").read_text())
    assert fig2["k"] == [1, 3] and fig2["binomial"] == [6, 20]
    fig5 = json.loads((root / "plots" / "fig5_memory.json").read_text())
    assert len(fig5["instance"]) == len(fig5["dim_full"]) == len(fig5["log2_dim_reduced"])
    assert {p.name for p in (root / "plots").glob("*.json")} == {
        "fig1_qubit_reduction.json", "fig2_constraint_sweep.json", "fig3_equivalence_unconstrained.json",
        "fig4_equivalence_constrained.json", "fig5_memory.json"}


def test_determinism(small_run, tmp_path):
    again = run_experiment(ExperimentConfig(**SMALL), tmp_path)
    a, b = load_run(small_run), load_run(again)
    for i in (1, 2, 3, 4):
        assert strip_wall(a[i]) == strip_wall(b[i])


def test_parallel_workers_match(tmp_path):
    cfg = dict(SMALL, sizes=(4,), k_grid=(1,), irreducible_count=1)
    seq = load_run(run_experiment(ExperimentConfig(**cfg), tmp_path / "seq"))
    par = load_run(run_experiment(ExperimentConfig(**cfg, workers=2), tmp_path / "par"))
    assert strip_wall(seq[1]) == strip_wall(par[1])
    assert strip_wall(seq[2]) == strip_wall(par[2])


def test_tampered_cell_fails_named_criterion(small_run, tmp_path):
    root = tmp_path / "copy"
    root.mkdir()
    src = small_run.parent
    for p in src.rglob("*"):
        if p.is_file():
            dest = root / p.relative_to(src)
            dest.parent.mkdir(parents=True, exist_ok=True)
            dest.write_bytes(p.read_bytes())
    text = (root / "instances.csv").read_text().splitlines()
    header = text[0].split(",")
    col = header.index("M")
    for i, line in enumerate(text[1:], 1):
        cells = line.split(",")
        if cells[0] == "complete":
            cells[col] = str(int(cells[col]) + 1)
            text[i] = ",".join(cells)
            break
    (root / "instances.csv").write_text("\n".join(text) + "\n")
    names = by_name(audit(root / "manifest.json"))
    assert names["integrity"].passed is False
    assert names["1"].passed is False


def test_corrupted_run_fails_equivalence(tmp_path):
    cfg = ExperimentConfig(**dict(SMALL, sizes=(6,), k_grid=(2,)), corrupt=True)
    names = by_name(audit(run_experiment(cfg, tmp_path)))
    assert names["4"].passed is False
    assert names["5"].passed is False
    assert names["6"].passed is False


def test_instance_failure_is_recorded(tmp_path):
    # the XY mixer needs an eigendecomposition, which this dense limit forbids
    cfg = ExperimentConfig(**dict(SMALL, families=("cycle",), sizes=(4,)), dense_limit=5)
    manifest = run_experiment(cfg, tmp_path)
    _, instances, _, _, _ = load_run(manifest)
    status = {(r["family"], r["k"]): r["status"] for r in instances}
    assert status[("cycle", "")] == "ok"
    assert status[("erdos_renyi", "1")] == "error"
    assert "ResourceError" in [r for r in instances if r["status"] == "error"][0]["error"]
    assert by_name(audit(manifest))["0"].passed is False


def test_cli_run_audit_and_tamper(tmp_path, capsys):
    out = tmp_path / "cli"
    code = main(["run", "--families", "complete,cycle", "--sizes", "4", "--k-grid", "1",
                 "--k-size", "4", "--restarts", "1", "--param-sets", "1", "--out", str(out)])
    assert code == 0
    manifest = out / "manifest.json"
    assert capsys.readouterr().out.strip() == str(manifest)
    assert main(["audit", "--manifest", str(manifest)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("[PASS] integrity")
    assert all(not l.startswith("[FAIL]") for l in lines)
    (out / "summary.json").write_text("{}")
    assert main(["audit", "--manifest", str(manifest)]) == 1
    assert "[FAIL] integrity" in capsys.readouterr().out


def test_cli_default_output_root(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SUBSPACE_QAOA_OUT", str(tmp_path / "root"))
    main(["run", "--families", "complete", "--sizes", "3", "--k-grid", "", "--restarts", "1",
          "--param-sets", "1"])
    path = capsys.readouterr().out.strip()
    assert path.startswith(str(tmp_path / "root" / "run-"))


def test_cli_reduce_and_certify(tmp_path, capsys):
    inst = tmp_path / "k6.json"
    save_instance(inst, instance_for("complete", 6, 0))
    assert main(["reduce", "--instance", str(inst)]) == 0
    out = capsys.readouterr().out
    assert "n=6 M=7 m=3 method=symmetric" in out
    assert "reducible=True" in out
    w = tmp_path / "w.json"
    save_instance(w, instance_for("erdos_renyi", 5, 2, ConstraintSpec("hamming_weight", 2)))
    main(["reduce", "--instance", str(w)])
    assert "evidence=weight_sector" in capsys.readouterr().out
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"gammas": [0.4, 0.9], "betas": [0.3, 0.1]}))
    assert main(["certify", "--instance", str(inst), "--params", str(params)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] is True
    assert (report["n"], report["M"], report["m"]) == (6, 7, 3)
    assert report["fidelity_offset"] <= 0.0


def test_cli_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        main(["audit", "--manifest", str(tmp_path / "nope.json")])
