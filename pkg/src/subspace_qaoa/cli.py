"""Command-line entry point: ``run``, ``audit``, ``reduce`` and ``certify``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .equivalence import certify_pair
from .experiment import (
    DEFAULT_SEED,
    ExperimentConfig,
    audit,
    format_audit,
    reduce_instance,
    run_experiment,
    select_subspace,
)
from .problems import cost_hamiltonian, initial_state, load_instance, mixer_hamiltonian
from .qaoa import FullEvolver, QaoaParams
from .reduction import METHODS, build_isometry, induce_hamiltonians

log = logging.getLogger("subspace_qaoa")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _words(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="subspace-qaoa", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the experiment grid and write reports")
    r.add_argument("--families", type=_words, default=ExperimentConfig.families)
    r.add_argument("--sizes", type=_ints, default=(6, 8, 10, 12))
    r.add_argument("--k-grid", type=_ints, default=(1, 2, 3, 4, 6))
    r.add_argument("--k-size", type=int, default=12, help="n of the Hamming-weight sweep")
    r.add_argument("--layers", type=int, default=2)
    r.add_argument("--restarts", type=int, default=5)
    r.add_argument("--param-sets", type=int, default=5)
    r.add_argument("--seed", type=int, default=DEFAULT_SEED)
    r.add_argument("--out", default=None, help="output directory (default: $SUBSPACE_QAOA_OUT/run-<hash>)")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--dense-limit", type=int, default=14)
    r.add_argument("--negative-control", action="store_true",
                   help="perturb every isometry; the audit must then fail")

    a = sub.add_parser("audit", help="re-check a stored run")
    a.add_argument("--manifest", required=True)

    d = sub.add_parser("reduce", help="print n, M, m and the reducibility verdict of an instance")
    d.add_argument("--instance", required=True)
    d.add_argument("--method", choices=("auto",) + METHODS, default="auto")

    c = sub.add_parser("certify", help="compare full and reduced evolution at given angles")
    c.add_argument("--instance", required=True)
    c.add_argument("--params", required=True, help="JSON file with 'gammas' and 'betas'")
    c.add_argument("--method", choices=("auto",) + METHODS, default="auto")
    return p


def cmd_run(args) -> int:
    cfg = ExperimentConfig(
        families=args.families,
        sizes=args.sizes,
        k_grid=args.k_grid,
        k_size=args.k_size,
        layers=args.layers,
        restarts=args.restarts,
        param_sets=args.param_sets,
        seed=args.seed,
        workers=args.workers,
        dense_limit=args.dense_limit,
        corrupt=args.negative_control,
        out=args.out,
    )

    def progress(res):
        row = res["instance"]
        log.info("%s %s M=%s m=%s %s", res["tag"], row["status"], row["M"], row["m"], row["error"])

    manifest = run_experiment(cfg, progress=progress)
    print(manifest)
    return 0


def cmd_audit(args) -> int:
    results = audit(args.manifest)
    sys.stdout.write(format_audit(results))
    return 0 if all(r.passed is not False for r in results) else 1


def cmd_reduce(args) -> int:
    info = reduce_instance(load_instance(args.instance), args.method)
    v = info["verdict"]
    print(f"n={info['n']} M={info['M']} m={info['m']} method={info['method']}")
    print(f"verdict: reducible={v['reducible']} evidence={v['evidence']} commutant_dim={v['commutant_dim']}")
    return 0


def cmd_certify(args) -> int:
    inst = load_instance(args.instance)
    params = QaoaParams.from_json(json.loads(Path(args.params).read_text()))
    hc = cost_hamiltonian(inst.qubo)
    hm = mixer_hamiltonian(inst.n, inst.constraint)
    psi0 = initial_state(inst.n, inst.constraint)
    sel = select_subspace(hc, hm, psi0, inst.family, inst.constraint, args.method)
    iso = build_isometry(sel.sub)
    red = induce_hamiltonians(hc, hm, iso)
    rep = certify_pair(FullEvolver(hc, hm, psi0), red, iso, params)
    out = rep.to_json()
    out["passed"] = rep.passed()
    print(json.dumps(out, indent=2))
    return 0 if rep.passed() else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler = {"run": cmd_run, "audit": cmd_audit, "reduce": cmd_reduce, "certify": cmd_certify}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
