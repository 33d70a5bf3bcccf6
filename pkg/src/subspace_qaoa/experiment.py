"""Batch experiment driver: instances, reductions, optimization, certificates, reports.

A run walks the grid of graph families and sizes plus a Hamming-weight sweep,
and writes everything under one output directory:

``instances.csv``
    one row per problem instance (reduction sizes, oracle checks, optima).
``trials.csv``
    one row per certified parameter set; the full and reduced simulations
    of a trial share the parameters stored in the row.
``negative_control.csv``
    certificates computed with a deliberately perturbed isometry.
``irreducibility.csv``
    commutant and closure dimensions for generic random QUBOs.
``summary.json``, ``plots/*.json``
    aggregated metrics and x/y series for plotting.
``manifest.json``
    configuration, hash, versions, timestamps, seeds and SHA-256 of every
    artifact. :func:`audit` re-checks the stored results against it.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from importlib import metadata
from pathlib import Path

import numpy as np

from .equivalence import (
    CERT_TOL,
    certify_orthogonal_exclusion,
    certify_pair,
    projector_commutator,
    weight_leak,
)
from .errors import NumericalIntegrityError, StructuralError
from .problems import (
    FAMILIES,
    NO_CONSTRAINT,
    ConstraintSpec,
    Instance,
    brute_force_minimum,
    cost_hamiltonian,
    instance_for,
    initial_state,
    mixer_hamiltonian,
    random_qubo,
    save_instance,
)
from .qaoa import FullEvolver, ReducedEvolver, optimize, random_params
from .reduction import (
    InvariantSubspace,
    build_isometry,
    corrupt_isometry,
    find_subspace,
    induce_hamiltonians,
    krylov_closure,
    qubit_count,
)
from .rng import derive_seed
from .symmetry import classify, commutant_nullspace

SCHEMA_VERSION = "1"
OUT_ENV = "SUBSPACE_QAOA_OUT"
BYTES_PER_AMPLITUDE = 16
DEFAULT_SEED = 33

INSTANCE_COLUMNS = [
    "family", "n", "k", "graph_seed", "method", "M", "m", "dim_full", "dim_reduced",
    "M_min", "K_lumped", "reducible", "commutant_dim", "evidence", "brute_min",
    "oracle_diag_err", "best_energy_full", "best_energy_reduced", "opt_seed",
    "budget_exhausted", "isometry_ortho", "isometry_projector", "commutator_max", "asymmetry",
    "bytes_full", "bytes_reduced", "wall_reduce", "wall_opt_full", "wall_opt_reduced",
    "status", "error",
]
TRIAL_COLUMNS = [
    "family", "n", "k", "trial", "param_seed", "gammas", "betas", "M", "m", "dim_full",
    "dim_reduced", "energy_full", "energy_reduced", "fidelity_offset", "delta_e",
    "delta_e_relative", "tvd", "intertwine_max", "intertwine_residual", "isometry_ortho",
    "isometry_projector", "exclusion_leak", "weight_leak", "wall_full", "wall_reduced",
]
CONTROL_COLUMNS = [
    "family", "n", "k", "eps", "fidelity_offset", "delta_e", "tvd", "intertwine_max", "worst",
]
IRREDUCIBLE_COLUMNS = ["index", "n", "seed", "commutant_dim", "krylov_M", "dim_full"]

DEFAULT_TOLERANCES = {
    "equivalence": CERT_TOL,
    "intertwine": 1e-10,
    "isometry_ortho": 1e-12,
    "isometry_projector": 1e-10,
    "projector_commutator": 1e-9,
    "oracle_diag": 1e-10,
    "lower_bound": 1e-9,
    "exclusion": 1e-12,
    "negative_control": 1e-6,
}


@dataclass
class ExperimentConfig:
    """Grid, protocol and tolerances of one batch run."""

    families: tuple[str, ...] = FAMILIES
    sizes: tuple[int, ...] = (6, 8, 10, 12)
    k_grid: tuple[int, ...] = (1, 2, 3, 4, 6)
    k_size: int = 12
    k_family: str = "erdos_renyi"
    layers: int = 2
    restarts: int = 5
    param_sets: int = 5
    seed: int = DEFAULT_SEED
    commutator_draws: int = 20
    commutator_limit: int = 10
    oracle_limit: int = 6
    irreducible_count: int = 10
    irreducible_n: int = 5
    control_eps: float = 1e-3
    corrupt: bool = False
    dense_limit: int = 14
    workers: int = 1
    out: str | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def __post_init__(self):
        self.families = tuple(self.families)
        self.sizes = tuple(int(n) for n in self.sizes)
        self.k_grid = tuple(int(k) for k in self.k_grid)
        for f in self.families:
            if f not in FAMILIES:
                raise StructuralError(f"unknown family {f!r}; expected one of {FAMILIES}")
        if self.layers < 1 or self.restarts < 1:
            raise StructuralError("layers and restarts must be >= 1")
        for k in self.k_grid:
            ConstraintSpec("hamming_weight", k).validate(self.k_size)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def hash(self) -> str:
        """SHA-256 of everything that influences numeric results."""
        data = self.to_json()
        for key in ("workers", "out"):
            data.pop(key)
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()

    def jobs(self) -> list[tuple[str, int, int | None]]:
        grid: list[tuple[str, int, int | None]] = [(f, n, None) for f in self.families for n in self.sizes]
        grid += [(self.k_family, self.k_size, k) for k in self.k_grid]
        return grid


def library_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__

        return __version__


def default_output_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


def memory_report(n: int, m: int, M: int | None = None) -> dict:
    """Dimensions and bytes of the full and reduced state vectors.

    ``dimension_ratio`` is ``2**n / 2**m``; with ``M`` given, ``eta`` is the
    exact effective ratio ``2**n / M`` as a :class:`~fractions.Fraction`.
    """
    if m > n or m < 0:
        raise StructuralError(f"reduced qubit count m={m} outside [0, n={n}]")
    rec = {
        "n": n,
        "m": m,
        "dim_full": 2**n,
        "dim_reduced": 2**m,
        "bytes_full": BYTES_PER_AMPLITUDE * 2**n,
        "bytes_reduced": BYTES_PER_AMPLITUDE * 2**m,
        "dimension_ratio": 2 ** (n - m),
        "log2_dim_full": n,
        "log2_dim_reduced": m,
    }
    if M is not None:
        rec["M"] = M
        rec["eta"] = Fraction(2**n, M)
    return rec


def auto_method(family: str, constraint: ConstraintSpec) -> str:
    """Subspace construction the runner uses for an instance.

    Complete graphs with the transverse-field mixer use the Dicke basis.
    Everything else uses the Krylov closure, falling back to the symmetry
    sector of the equitable partition when the closure is numerically
    ambiguous.
    """
    return "symmetric" if family == "complete" and not constraint.constrained else "krylov"


@dataclass
class Selection:
    sub: InvariantSubspace
    method: str
    M_min: int | None
    K_lumped: int | None


def select_subspace(hc, hm, psi0, family: str, constraint: ConstraintSpec, method: str = "auto") -> Selection:
    """Build the invariant subspace and record the minimal closure alongside it."""
    try:
        closure = krylov_closure(hc, hm, psi0)
    except NumericalIntegrityError:
        closure = None
    if method == "auto":
        method = auto_method(family, constraint)
        if method == "krylov" and closure is None:
            method = "lumped"
    if method == "krylov":
        if closure is None:
            raise NumericalIntegrityError("Krylov closure is numerically ambiguous for this instance")
        sub = closure
    else:
        sub = find_subspace(hc, hm, psi0, method)
    K = None
    for s in (closure, sub):
        if s is not None and s.log is not None and s.log.lumped_dim is not None:
            K = s.log.lumped_dim
            break
    return Selection(sub, method, None if closure is None else closure.M, K)


def instance_seeds(cfg: ExperimentConfig, family: str, n: int, k: int | None) -> dict:
    fam = FAMILIES.index(family)
    kk = 0 if k is None else k
    return {
        "graph_seed": derive_seed(cfg.seed, n),
        "opt_seed": derive_seed(cfg.seed, n, kk, fam, 1),
        "param_seeds": [derive_seed(cfg.seed, n, kk, fam, 2, j) for j in range(cfg.param_sets)],
        "commutator_seeds": [derive_seed(cfg.seed, n, kk, fam, 3, j) for j in range(cfg.commutator_draws)],
        "control_seed": derive_seed(cfg.seed, n, kk, fam, 4),
    }


def build_problem(family: str, n: int, graph_seed: int, k: int | None) -> Instance:
    constraint = NO_CONSTRAINT if k is None else ConstraintSpec("hamming_weight", k)
    return instance_for(family, n, graph_seed, constraint)


def reduce_instance(inst: Instance, method: str = "auto", oracle_limit: int = 6) -> dict:
    """Reduction summary for one instance: ``n``, ``M``, ``m`` and the verdict."""
    hc = cost_hamiltonian(inst.qubo)
    hm = mixer_hamiltonian(inst.n, inst.constraint)
    psi0 = initial_state(inst.n, inst.constraint)
    sel = select_subspace(hc, hm, psi0, inst.family, inst.constraint, method)
    verdict = classify(hc, hm, inst.constraint, psi0, oracle_limit, (sel.sub.M, sel.method))
    return {
        "n": inst.n,
        "M": sel.sub.M,
        "m": qubit_count(sel.sub.M),
        "method": sel.method,
        "M_min": sel.M_min,
        "verdict": verdict.to_json(),
    }


def run_instance(cfg: ExperimentConfig, family: str, n: int, k: int | None, out_dir: str) -> dict:
    """Everything computed for one grid point; failures come back as a status."""
    seeds = instance_seeds(cfg, family, n, k)
    tag = f"{family}_n{n}" + ("" if k is None else f"_k{k}")
    row = {c: "" for c in INSTANCE_COLUMNS}
    row.update(family=family, n=n, k="" if k is None else k, graph_seed=seeds["graph_seed"])
    result = {"tag": tag, "seeds": seeds, "instance": row, "trials": [], "control": None}
    try:
        _run_instance(cfg, family, n, k, seeds, row, result, Path(out_dir))
        row["status"] = "ok"
    except Exception as exc:  # recorded per instance so the batch carries on
        row["status"] = "error"
        row["error"] = f"{type(exc).__name__}: {exc}"
        result["traceback"] = traceback.format_exc()
    return result


def _run_instance(cfg, family, n, k, seeds, row, result, out_dir: Path) -> None:
    inst = build_problem(family, n, seeds["graph_seed"], k)
    path = out_dir / "instances" / f"{result['tag']}.json"
    save_instance(path, inst)
    result["instance_path"] = str(path.relative_to(out_dir))
    constraint = inst.constraint

    hc = cost_hamiltonian(inst.qubo, check=False)
    hm = mixer_hamiltonian(n, constraint)
    psi0 = initial_state(n, constraint)
    row["oracle_diag_err"] = float(np.max(np.abs(hc.diagonal().real - inst.qubo.all_values())))
    row["brute_min"] = brute_force_minimum(inst.qubo, constraint)

    t0 = time.perf_counter()
    sel = select_subspace(hc, hm, psi0, family, constraint)
    sub = sel.sub
    verdict = classify(hc, hm, constraint, psi0, cfg.oracle_limit, (sub.M, sel.method))
    iso = build_isometry(sub)
    clean_iso = iso
    if cfg.corrupt:
        iso = corrupt_isometry(iso, cfg.control_eps, seed=seeds["control_seed"])
    red = induce_hamiltonians(hc, hm, iso, check=not cfg.corrupt)
    row["wall_reduce"] = time.perf_counter() - t0

    mem = memory_report(n, iso.m, sub.M)
    row.update(
        method=sel.method,
        M=sub.M,
        m=iso.m,
        dim_full=2**n,
        dim_reduced=2**iso.m,
        M_min="" if sel.M_min is None else sel.M_min,
        K_lumped="" if sel.K_lumped is None else sel.K_lumped,
        reducible=verdict.reducible,
        commutant_dim="" if verdict.commutant_dim is None else verdict.commutant_dim,
        evidence=verdict.evidence,
        isometry_ortho=iso.isometry_residuals[0],
        isometry_projector=iso.isometry_residuals[1],
        asymmetry=max(red.asymmetry),
        bytes_full=mem["bytes_full"],
        bytes_reduced=mem["bytes_reduced"],
    )

    full = FullEvolver(hc, hm, psi0, dense_limit=cfg.dense_limit)
    reduced = ReducedEvolver(red, iso)
    t0 = time.perf_counter()
    opt_red = optimize(reduced, cfg.layers, cfg.restarts, seeds["opt_seed"])
    row["wall_opt_reduced"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    opt_full = optimize(full, cfg.layers, cfg.restarts, seeds["opt_seed"])
    row["wall_opt_full"] = time.perf_counter() - t0
    row.update(
        best_energy_full=opt_full.best_energy,
        best_energy_reduced=opt_red.best_energy,
        opt_seed=seeds["opt_seed"],
        budget_exhausted=any(opt_full.budget_exhausted + opt_red.budget_exhausted),
    )
    result["optimization"] = {"full": opt_full.to_json(), "reduced": opt_red.to_json()}

    trials = [(str(j), s, random_params(cfg.layers, s)) for j, s in enumerate(seeds["param_seeds"])]
    trials.append(("best", seeds["opt_seed"], opt_red.best_params))
    for label, seed, params in trials:
        rep = certify_pair(full, red, iso, params, reduced)
        state = full.evolve(params).final_state
        excl = certify_orthogonal_exclusion(sub, state)
        result["trials"].append(
            {
                "family": family, "n": n, "k": row["k"], "trial": label, "param_seed": seed,
                "gammas": json.dumps(list(params.gammas)), "betas": json.dumps(list(params.betas)),
                "M": rep.M, "m": rep.m, "dim_full": 2**n, "dim_reduced": 2**rep.m,
                "energy_full": rep.energy_full, "energy_reduced": rep.energy_reduced,
                "fidelity_offset": rep.fidelity_offset, "delta_e": rep.delta_e,
                "delta_e_relative": rep.delta_e_relative, "tvd": rep.tvd,
                "intertwine_max": rep.intertwine_max, "intertwine_residual": rep.intertwine_residual,
                "isometry_ortho": rep.isometry_residuals[0], "isometry_projector": rep.isometry_residuals[1],
                "exclusion_leak": excl.worst_leak,
                "weight_leak": "" if k is None else weight_leak(state, k),
                "wall_full": rep.wall_full, "wall_reduced": rep.wall_reduced,
            }
        )

    if n <= cfg.commutator_limit:
        row["commutator_max"] = max(
            projector_commutator(full, sub, random_params(cfg.layers, s)) for s in seeds["commutator_seeds"]
        )

    # negative control: the same certificate with one column of V perturbed
    bad = corrupt_isometry(clean_iso, cfg.control_eps, seed=seeds["control_seed"])
    bad_red = induce_hamiltonians(hc, hm, bad, check=False)
    rep = certify_pair(full, bad_red, bad, trials[0][2])
    result["control"] = {
        "family": family, "n": n, "k": row["k"], "eps": cfg.control_eps,
        "fidelity_offset": rep.fidelity_offset, "delta_e": rep.delta_e, "tvd": rep.tvd,
        "intertwine_max": rep.intertwine_max, "worst": rep.worst(),
    }


def irreducibility_checks(cfg: ExperimentConfig) -> list[dict]:
    """Commutant dimension and closure size for seeded generic random QUBOs."""
    rows = []
    n = cfg.irreducible_n
    for j in range(cfg.irreducible_count):
        seed = derive_seed(cfg.seed, 8, j)
        q = random_qubo(n, seed)
        hc = cost_hamiltonian(q)
        hm = mixer_hamiltonian(n, NO_CONSTRAINT)
        dim = commutant_nullspace(hc, hm).dimension
        M = krylov_closure(hc, hm, initial_state(n)).M
        rows.append({"index": j, "n": n, "seed": seed, "commutant_dim": dim, "krylov_M": M, "dim_full": 2**n})
    return rows


# --- report files ----------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, default=_jsonable)


def plot_series(cfg: ExperimentConfig, instances: list[dict], trials: list[dict]) -> dict[str, dict]:
    ok = [r for r in instances if r["status"] == "ok"]
    unconstrained = [r for r in ok if r["k"] == ""]
    sweep = sorted((r for r in ok if r["k"] != ""), key=lambda r: int(r["k"]))
    fig1 = {
        "x_label": "n",
        "y_label": "qubits",
        "series": {
            f: {
                "n": [r["n"] for r in unconstrained if r["family"] == f],
                "m": [r["m"] for r in unconstrained if r["family"] == f],
                "M": [r["M"] for r in unconstrained if r["family"] == f],
            }
            for f in cfg.families
        },
    }
    fig2 = {
        "x_label": "k",
        "y_label": "qubits",
        "n": cfg.k_size,
        "k": [r["k"] for r in sweep],
        "m": [r["m"] for r in sweep],
        "M": [r["M"] for r in sweep],
        "binomial": [math.comb(cfg.k_size, int(r["k"])) for r in sweep],
    }

    def equivalence(rows):
        return {
            "instance": [f"{t['family']}_n{t['n']}" + (f"_k{t['k']}" if t["k"] != "" else "") for t in rows],
            "trial": [t["trial"] for t in rows],
            "fidelity_offset": [t["fidelity_offset"] for t in rows],
            "delta_e": [t["delta_e"] for t in rows],
            "tvd": [t["tvd"] for t in rows],
        }

    fig3 = equivalence([t for t in trials if t["k"] == ""])
    fig4 = equivalence([t for t in trials if t["k"] != ""])
    fig5 = {
        "x_label": "instance",
        "y_label": "log2 amplitudes",
        "instance": [r["family"] + f"_n{r['n']}" + (f"_k{r['k']}" if r["k"] != "" else "") for r in ok],
        "dim_full": [r["dim_full"] for r in ok],
        "dim_reduced": [r["dim_reduced"] for r in ok],
        "bytes_full": [r["bytes_full"] for r in ok],
        "bytes_reduced": [r["bytes_reduced"] for r in ok],
        "log2_dim_full": [int(r["n"]) for r in ok],
        "log2_dim_reduced": [int(r["m"]) for r in ok],
    }
    return {
        "fig1_qubit_reduction": fig1,
        "fig2_constraint_sweep": fig2,
        "fig3_equivalence_unconstrained": fig3,
        "fig4_equivalence_constrained": fig4,
        "fig5_memory": fig5,
    }


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None, progress=None) -> Path:
    """Run the whole grid and return the path of the written manifest."""
    out_dir = Path(out or cfg.out or default_output_root() / f"run-{cfg.hash()[:12]}")
    (out_dir / "instances").mkdir(parents=True, exist_ok=True)
    (out_dir / "plots").mkdir(exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    jobs = cfg.jobs()
    events = out_dir / "events.jsonl"
    events.write_text("")

    def log_event(res: dict) -> None:
        with open(events, "a") as fh:
            fh.write(json.dumps({"tag": res["tag"], "status": res["instance"]["status"],
                                 "error": res["instance"]["error"]}) + "\n")
        if progress:
            progress(res)

    results: list[dict] = []
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            futures = [pool.submit(run_instance, cfg, f, n, k, str(out_dir)) for f, n, k in jobs]
            for fut in futures:
                results.append(fut.result())
                log_event(results[-1])
    else:
        for f, n, k in jobs:
            results.append(run_instance(cfg, f, n, k, str(out_dir)))
            log_event(results[-1])

    irreducible = irreducibility_checks(cfg)
    instances = [r["instance"] for r in results]
    trials = [t for r in results for t in r["trials"]]
    controls = [r["control"] for r in results if r["control"]]

    write_csv(out_dir / "instances.csv", INSTANCE_COLUMNS, instances)
    write_csv(out_dir / "trials.csv", TRIAL_COLUMNS, trials)
    write_csv(out_dir / "negative_control.csv", CONTROL_COLUMNS, controls)
    write_csv(out_dir / "irreducibility.csv", IRREDUCIBLE_COLUMNS, irreducible)
    write_json(out_dir / "optimization.json", {r["tag"]: r.get("optimization") for r in results})
    for name, data in plot_series(cfg, instances, trials).items():
        write_json(out_dir / "plots" / f"{name}.json", data)
    write_json(out_dir / "summary.json", summarize(cfg, instances, trials, controls, irreducible))

    artifacts = ["instances.csv", "trials.csv", "negative_control.csv", "irreducibility.csv",
                 "optimization.json", "summary.json"]
    artifacts += [f"plots/{p.name}" for p in sorted((out_dir / "plots").glob("*.json"))]
    artifacts += [r["instance_path"] for r in results if "instance_path" in r]
    manifest = {
        "schema": f"run-manifest/{SCHEMA_VERSION}",
        "config": cfg.to_json(),
        "config_hash": cfg.hash(),
        "version": library_version(),
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "artifacts": {a: sha256_file(out_dir / a) for a in artifacts},
        "instances": [
            {"tag": r["tag"], "status": r["instance"]["status"], "error": r["instance"]["error"],
             "path": r.get("instance_path", ""), "seeds": r["seeds"]}
            for r in results
        ],
    }
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path


def summarize(cfg, instances, trials, controls, irreducible) -> dict:
    def worst(key, rows):
        vals = [abs(float(r[key])) for r in rows if r[key] != ""]
        return max(vals) if vals else None

    return {
        "schema": f"run-summary/{SCHEMA_VERSION}",
        "instances": len(instances),
        "failed": [f"{r['family']}_n{r['n']}_k{r['k']}" for r in instances if r["status"] != "ok"],
        "trials": len(trials),
        "max_fidelity_offset": worst("fidelity_offset", trials),
        "max_delta_e": worst("delta_e", trials),
        "max_delta_e_relative": worst("delta_e_relative", trials),
        "max_tvd": worst("tvd", trials),
        "max_intertwine": worst("intertwine_max", trials),
        "max_isometry_ortho": worst("isometry_ortho", instances),
        "max_isometry_projector": worst("isometry_projector", instances),
        "max_projector_commutator": worst("commutator_max", instances),
        "max_weight_leak": worst("weight_leak", trials),
        "min_control_worst": min((c["worst"] for c in controls), default=None),
        "tolerance": cfg.tolerances["equivalence"],
        "reductions": [
            {"family": r["family"], "n": r["n"], "k": r["k"], "M": r["M"], "m": r["m"], "M_min": r["M_min"]}
            for r in instances
        ],
        "irreducibility": irreducible,
    }


# --- audit ---------------------------------------------------------------------


@dataclass
class CriterionResult:
    name: str
    passed: bool | None
    detail: str

    def line(self) -> str:
        status = "SKIP" if self.passed is None else ("PASS" if self.passed else "FAIL")
        return f"[{status}] {self.name}: {self.detail}"


def _num(v: str) -> float | None:
    return None if v == "" else float(v)


def evaluate_criteria(cfg: ExperimentConfig, instances, trials, controls, irreducible) -> list[CriterionResult]:
    """Check the stored run results against every acceptance threshold."""
    tol = cfg.tolerances
    out: list[CriterionResult] = []
    ok = [r for r in instances if r["status"] == "ok"]
    failed = [f"{r['family']}_n{r['n']}_k{r['k']}" for r in instances if r["status"] != "ok"]
    out.append(CriterionResult("0 all instances completed", not failed, f"failed={failed}"))
    un = [r for r in ok if r["k"] == ""]

    kn = [r for r in un if r["family"] == "complete"]
    if kn:
        bad = [r["n"] for r in kn if int(r["M"]) != int(r["n"]) + 1 or int(r["m"]) != qubit_count(int(r["n"]) + 1)]
        out.append(CriterionResult("1 complete graphs M = n+1", not bad,
                                   "m=" + str([int(r["m"]) for r in kn]) + f" bad={bad}"))
    else:
        out.append(CriterionResult("1 complete graphs M = n+1", None, "no complete-graph instances"))

    er = [r for r in un if r["family"] == "erdos_renyi"]
    if er:
        bad = [r["n"] for r in er if int(r["M"]) < 2 ** (int(r["n"]) - 1)]
        out.append(CriterionResult("2 random graphs M >= 2^(n-1)", not bad,
                                   "M=" + str([int(r["M"]) for r in er]) + f" bad={bad}"))
    else:
        out.append(CriterionResult("2 random graphs M >= 2^(n-1)", None, "no random-graph instances"))

    sweep = sorted((r for r in ok if r["k"] != ""), key=lambda r: int(r["k"]))
    if sweep:
        ms = [int(r["m"]) for r in sweep]
        bounded = all(int(r["M"]) <= math.comb(int(r["n"]), int(r["k"])) for r in sweep)
        mono = all(a <= b for a, b in zip(ms, ms[1:]))
        pins = True
        for r in sweep:
            if int(r["n"]) == 12 and int(r["k"]) == 1:
                pins &= int(r["m"]) == 4
            if int(r["n"]) == 12 and int(r["k"]) == 6:
                pins &= int(r["m"]) <= 10
        out.append(CriterionResult("3 constraint sweep", bounded and mono and pins,
                                   f"k={[int(r['k']) for r in sweep]} m={ms} M={[int(r['M']) for r in sweep]}"))
    else:
        out.append(CriterionResult("3 constraint sweep", None, "no constrained instances"))

    def worst(key, rows):
        vals = [abs(float(r[key])) for r in rows if r[key] != ""]
        return max(vals) if vals else 0.0

    if trials:
        f, de, tv = worst("fidelity_offset", trials), worst("delta_e_relative", trials), worst("tvd", trials)
        out.append(CriterionResult("4 equivalence", max(f, de, tv) <= tol["equivalence"],
                                   f"|F-1|={f:.2e} |dE|/(1+|E|)={de:.2e} TVD={tv:.2e}"))
        it = worst("intertwine_max", trials)
        out.append(CriterionResult("5 intertwining", it <= tol["intertwine"], f"max column residual {it:.2e}"))
    else:
        out.append(CriterionResult("4 equivalence", None, "no trials"))
        out.append(CriterionResult("5 intertwining", None, "no trials"))

    lo, lp = worst("isometry_ortho", ok), worst("isometry_projector", ok)
    out.append(CriterionResult("6 isometry identities", lo <= tol["isometry_ortho"] and lp <= tol["isometry_projector"],
                               f"|V'V-I|={lo:.2e} |VV'-Pi|={lp:.2e}"))
    l1 = worst("commutator_max", ok)
    out.append(CriterionResult("7 projector commutes with U", l1 <= tol["projector_commutator"], f"max {l1:.2e}"))

    if irreducible:
        bad = [r["index"] for r in irreducible
               if int(r["commutant_dim"]) != 1 or int(r["krylov_M"]) != int(r["dim_full"])]
        out.append(CriterionResult("8 irreducibility detection", not bad,
                                   f"{len(irreducible)} random QUBOs, disagreeing={bad}"))
    else:
        out.append(CriterionResult("8 irreducibility detection", None, "no random QUBOs"))

    od = worst("oracle_diag_err", ok)
    below = [r["family"] + "_n" + r["n"] for r in ok
             if min(float(r["best_energy_full"]), float(r["best_energy_reduced"]))
             < float(r["brute_min"]) - tol["lower_bound"]]
    out.append(CriterionResult("9 oracle consistency", od <= tol["oracle_diag"] and not below,
                               f"diag err {od:.2e}, below brute-force minimum: {below}"))

    con = [t for t in trials if t["k"] != ""]
    if con:
        wl = worst("weight_leak", con)
        el = worst("exclusion_leak", con)
        out.append(CriterionResult("10 orthogonal exclusion", max(wl, el) <= tol["exclusion"],
                                   f"weight leak {wl:.2e}, excluded-state leak {el:.2e}"))
    else:
        out.append(CriterionResult("10 orthogonal exclusion", None, "no constrained trials"))

    if controls:
        cw = min(float(c["worst"]) for c in controls)
        out.append(CriterionResult("11 negative control detected", cw >= tol["negative_control"],
                                   f"smallest corrupted-run metric {cw:.2e}"))
    else:
        out.append(CriterionResult("11 negative control detected", None, "no controls"))

    mem_ok = all(
        int(r["dim_full"]) // int(r["dim_reduced"]) == 2 ** (int(r["n"]) - int(r["m"])) for r in ok
    )
    detail = "dimension ratios exact"
    k12 = [r for r in kn if int(r["n"]) == 12]
    if k12:
        r = k12[0]
        ratio = int(r["dim_full"]) // int(r["dim_reduced"])
        eta = Fraction(int(r["dim_full"]), int(r["M"]))
        mem_ok &= ratio == 256 and eta == Fraction(4096, 13)
        detail = f"K12 ratio {ratio}, eta {eta}"
    out.append(CriterionResult("12 memory accounting", mem_ok, detail))
    return out


def load_run(manifest_path: str | Path) -> tuple[dict, list[dict], list[dict], list[dict], list[dict]]:
    path = Path(manifest_path)
    manifest = json.loads(path.read_text())
    root = path.parent
    return (
        manifest,
        read_csv(root / "instances.csv"),
        read_csv(root / "trials.csv"),
        read_csv(root / "negative_control.csv"),
        read_csv(root / "irreducibility.csv"),
    )


def audit(manifest_path: str | Path) -> list[CriterionResult]:
    """Re-check artifact digests and every acceptance criterion of a stored run."""
    path = Path(manifest_path)
    if not path.exists():
        raise FileNotFoundError(path)
    manifest = json.loads(path.read_text())
    root = path.parent
    tampered = []
    for name, digest in manifest["artifacts"].items():
        p = root / name
        if not p.exists():
            raise FileNotFoundError(p)
        if sha256_file(p) != digest:
            tampered.append(name)
    results = [CriterionResult("integrity", not tampered, f"modified artifacts: {tampered}")]
    cfg = ExperimentConfig.from_json(manifest["config"])
    _, instances, trials, controls, irreducible = load_run(path)
    results += evaluate_criteria(cfg, instances, trials, controls, irreducible)
    return results


def format_audit(results: list[CriterionResult]) -> str:
    buf = io.StringIO()
    for r in results:
        buf.write(r.line() + "\n")
    return buf.getvalue()
