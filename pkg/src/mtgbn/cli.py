"""Batch command line: simulate, learn, eval, degrees, compare and replay.

Every command writes a ``manifest.json`` next to its outputs recording the
effective configuration, so ``mtgbn replay --manifest DIR/manifest.json``
reproduces the primary outputs byte for byte.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import os
import subprocess
import sys
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import ChainDiverged, DimensionMismatch, DomainError, MtgbnError, RetriesExhausted
from .evalkit import (
    adjacency_confusion,
    arrowhead_confusion,
    average_rows,
    connection_counts,
    degree_table,
    degree_table_rows,
    metric_table_rows,
    metrics,
    to_aligned,
    to_csv,
)
from .graph import Dag, UGraph, format_adjacency_list, parse_adjacency_list, reorder
from .hmc import HmcConfig
from .likelihood import HyperParams, TaskData
from .matrix_stats import format_matrix_csv, read_matrix_csv, standardize
from .mcem import RunConfig, derive_seed, initial_dags, run_mcem
from .search import SearchConfig, correlation_skeleton, learn_avg, learn_sig
from .simgen import PerturbSpec, SynthSpec, generate_synthetic, perturb_benchmark, sample_sem

EXIT_OK, EXIT_CONFIG, EXIT_GENERATION, EXIT_SAMPLER, EXIT_IO = 0, 2, 3, 4, 5


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# file helpers


def atomic_write(path: str | Path, text: str) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def version_string() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def expand_paths(patterns: list[str]) -> list[str]:
    """Expand globs; each pattern's matches are sorted, patterns keep their order."""
    out = []
    for pat in patterns:
        hits = sorted(glob.glob(pat))
        if not hits:
            raise ConfigError(f"no files match {pat!r}")
        out.extend(hits)
    return out


def write_manifest(out: Path, command: str, config: dict, inputs: list[str], outputs: list[str], seeds: dict) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {p: sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "seeds": seeds,
        "version": version_string(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    for o in outputs:
        if not (out / o).exists():
            raise OSError(f"manifest references missing output {o}")
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def task_label(i: int, m: int) -> str:
    return f"{i + 1:0{max(2, len(str(m)))}d}"


# ---------------------------------------------------------------------------
# configuration


DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {
        "mode": "synth",
        "m": 10,
        "p": 15,
        "n": 250,
        "density": 0.3,
        "nu0": None,
        "max_retries": 100,
        "max_shared_redraws": 200,
        "base": None,
        "level": 0.05,
        "seed": 0,
    },
    "learn": {
        "method": "mtgbn",
        "tasks": None,
        "nu0": None,
        "epsilon": None,
        "seed": 0,
        "standardize": False,
        "n_samples": 200,
        "burn_in": 500,
        "thin": 2,
        "n_leapfrog": 20,
        "step_size": 0.01,
        "target_accept": 0.7,
        "max_em_iters": 20,
        "max_parents": 5,
        "restarts": 0,
        "skeleton_threshold": None,
        "init": None,
    },
    "eval": {"learned": None, "truth": None, "mode": "both"},
    "degrees": {"dags": None},
    "compare": {"sweep": None, "jobs": 1},
}


def resolve(command: str, args: argparse.Namespace) -> dict[str, Any]:
    """Flags override the JSON config file, which overrides built-in defaults."""
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON config: {exc}") from None
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


# ---------------------------------------------------------------------------
# simulate


def run_simulate(cfg: dict, out: Path) -> tuple[list[str], list[str], dict]:
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    outputs, inputs = [], []
    m = int(cfg["m"])
    try:
        if cfg["mode"] == "synth":
            spec = SynthSpec(
                m=m,
                p=int(cfg["p"]),
                n=int(cfg["n"]),
                density=float(cfg["density"]),
                nu0=cfg["nu0"],
                seed=seed,
                max_retries=int(cfg["max_retries"]),
                max_shared_redraws=int(cfg["max_shared_redraws"]),
            )
            res = generate_synthetic(spec, rng)
            atomic_write(out / "sigma_h.csv", format_matrix_csv(res.sigma_h_true))
            outputs.append("sigma_h.csv")
            names = list(res.graphs[0].node_names)
            for i, (g, t) in enumerate(zip(res.graphs, res.tasks)):
                lab = task_label(i, m)
                atomic_write(out / f"graph_{lab}.adj", format_adjacency_list(g))
                atomic_write(out / f"task_{lab}.csv", format_matrix_csv(t.data, names))
                outputs += [f"graph_{lab}.adj", f"task_{lab}.csv"]
        elif cfg["mode"] == "perturb":
            if not cfg["base"]:
                raise ConfigError("perturb mode needs --base")
            base = parse_adjacency_list(Path(cfg["base"]).read_text(encoding="utf-8"))
            inputs.append(str(cfg["base"]))
            dags = perturb_benchmark(PerturbSpec(base, float(cfg["level"]), m, seed), rng)
            n = int(cfg["n"])
            for i, (d, child) in enumerate(zip(dags, rng.spawn(m))):
                lab = task_label(i, m)
                atomic_write(out / f"dag_{lab}.adj", format_adjacency_list(d))
                outputs.append(f"dag_{lab}.adj")
                if n > 0:
                    atomic_write(out / f"task_{lab}.csv", format_matrix_csv(sample_sem(d, n, child), list(d.node_names)))
                    outputs.append(f"task_{lab}.csv")
        else:
            raise ConfigError(f"unknown mode {cfg['mode']!r}")
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    return inputs, outputs, {"seed": seed}


# ---------------------------------------------------------------------------
# learn


def load_tasks(paths: list[str], do_standardize: bool) -> tuple[list[TaskData], list[str]]:
    tasks, names = [], None
    for path in paths:
        data, header = read_matrix_csv(path)
        if do_standardize:
            data = standardize(data)
        if names is None:
            names = header
        elif header is not None and header != names:
            raise DimensionMismatch(f"{path} has different columns")
        tasks.append(TaskData.from_data(data))
    ps = {t.p for t in tasks}
    if len(ps) != 1:
        raise DimensionMismatch(f"task files disagree on p: {sorted(ps)}")
    p = ps.pop()
    return tasks, list(names) if names is not None else [f"X{i + 1}" for i in range(p)]


def build_run_config(cfg: dict, p: int, m: int) -> RunConfig:
    nu0 = float(cfg["nu0"]) if cfg["nu0"] is not None else float(p + 2)
    try:
        hp = HyperParams(nu0, p, m)
        hmc = HmcConfig(
            n_samples=int(cfg["n_samples"]),
            n_leapfrog=int(cfg["n_leapfrog"]),
            step_size=float(cfg["step_size"]),
            burn_in=int(cfg["burn_in"]),
            thin=int(cfg["thin"]),
            target_accept=float(cfg["target_accept"]),
        )
        search = SearchConfig(max_parents=int(cfg["max_parents"]), restarts=int(cfg["restarts"]))
        return RunConfig(
            hp=hp,
            hmc=hmc,
            search=search,
            epsilon=None if cfg["epsilon"] is None else float(cfg["epsilon"]),
            max_em_iters=int(cfg["max_em_iters"]),
            seed=int(cfg["seed"]),
            skeleton_threshold=None if cfg["skeleton_threshold"] is None else float(cfg["skeleton_threshold"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def run_learn(cfg: dict, out: Path) -> tuple[list[str], list[str], dict]:
    if not cfg["tasks"]:
        raise ConfigError("learn needs --tasks")
    patterns = cfg["tasks"] if isinstance(cfg["tasks"], list) else [cfg["tasks"]]
    paths = expand_paths(patterns)
    tasks, names = load_tasks(paths, bool(cfg["standardize"]))
    m, p = len(tasks), tasks[0].p
    rc = build_run_config(cfg, p, m)
    method = cfg["method"]
    outputs: list[str] = []
    seeds = {"seed": rc.seed}
    inputs = list(paths)

    if method == "sig":
        dags = []
        for i, t in enumerate(tasks):
            scfg = SearchConfig(rc.search.max_parents, rc.search.max_iters, rc.search.restarts, derive_seed(rc.seed, 1, i))
            if rc.skeleton_threshold is not None:
                scfg = SearchConfig(
                    scfg.max_parents, scfg.max_iters, scfg.restarts, scfg.seed, correlation_skeleton(t, rc.skeleton_threshold)
                )
            dags.append(learn_sig(t, scfg, names).dag)
    elif method == "avg":
        scfg = SearchConfig(rc.search.max_parents, rc.search.max_iters, rc.search.restarts, derive_seed(rc.seed, 1, 0))
        dags = [learn_avg(tasks, scfg, names).dag] * m
        atomic_write(out / "NOTE.txt", "avg: one structure learned from all tasks' rows, replicated for every task\n")
        outputs.append("NOTE.txt")
    elif method == "mtgbn":
        if cfg["init"]:
            init_paths = expand_paths(cfg["init"] if isinstance(cfg["init"], list) else [cfg["init"]])
            if len(init_paths) != m:
                raise ConfigError(f"{len(init_paths)} initial graphs for {m} tasks")
            init = [reorder(parse_adjacency_list(Path(x).read_text(encoding="utf-8")), names) for x in init_paths]
            inputs += init_paths
        else:
            init = [Dag(tuple(names), d.edges) for d in initial_dags(tasks, rc)]
        res = run_mcem(tasks, init, rc, log_path=out / "run_log.jsonl")
        dags = [Dag(tuple(names), r.dag.edges) for r in res.dags]
        qtrace = "iter,q_tilde,q_tilde_prev\n" + "".join(
            f"{i + 1},{q!r},{qp!r}\n" for i, (q, qp) in enumerate(zip(res.q_trace, res.q_prev_trace))
        )
        atomic_write(out / "qtrace.csv", qtrace)
        outputs += ["qtrace.csv", "run_log.jsonl"]
        seeds["hmc"] = [derive_seed(rc.seed, 0, it) for it in range(1, res.em_iters_used + 1)]
    else:
        raise ConfigError(f"unknown method {method!r}")

    for i, d in enumerate(dags):
        lab = task_label(i, m)
        atomic_write(out / f"dag_{lab}.adj", format_adjacency_list(Dag(tuple(names), d.edges)))
        outputs.append(f"dag_{lab}.adj")
    return inputs, outputs, seeds


# ---------------------------------------------------------------------------
# eval and degrees


def _read_graph(path: str, directed: bool):
    return parse_adjacency_list(Path(path).read_text(encoding="utf-8"), directed=directed)


def _looks_undirected(path: str) -> bool:
    text = Path(path).read_text(encoding="utf-8")
    return "--" in text and "->" not in text


def run_eval(cfg: dict, out: Path) -> tuple[list[str], list[str], dict]:
    if not cfg["learned"] or not cfg["truth"]:
        raise ConfigError("eval needs --learned and --truth")
    lp = expand_paths(cfg["learned"] if isinstance(cfg["learned"], list) else [cfg["learned"]])
    tp = expand_paths(cfg["truth"] if isinstance(cfg["truth"], list) else [cfg["truth"]])
    if len(lp) != len(tp):
        raise ConfigError(f"{len(lp)} learned graphs but {len(tp)} truth graphs")
    truth = [_read_graph(x, directed=not _looks_undirected(x)) for x in tp]
    # files may list nodes in any order; compare by name
    learned = [reorder(_read_graph(x, directed=not _looks_undirected(x)), t.node_names) for x, t in zip(lp, truth)]
    labels = [task_label(i, len(lp)) for i in range(len(lp))]
    outputs = []
    modes = ["adjacency", "arrowhead"] if cfg["mode"] == "both" else [cfg["mode"]]
    for mode in modes:
        if mode == "adjacency":
            rows = [metrics(adjacency_confusion(a, b)) for a, b in zip(learned, truth)]
        elif mode == "arrowhead":
            if not all(isinstance(g, Dag) for g in learned + truth):
                if cfg["mode"] == "both":
                    continue
                raise ConfigError("arrowhead evaluation needs directed graphs")
            rows = [metrics(arrowhead_confusion(a, b)) for a, b in zip(learned, truth)]
        else:
            raise ConfigError(f"unknown mode {mode!r}")
        table = metric_table_rows(rows, labels)
        atomic_write(out / f"{mode}.csv", to_csv(table))
        atomic_write(out / f"{mode}.txt", to_aligned(table))
        outputs += [f"{mode}.csv", f"{mode}.txt"]
    return lp + tp, outputs, {}


def run_degrees(cfg: dict, out: Path) -> tuple[list[str], list[str], dict]:
    if not cfg["dags"]:
        raise ConfigError("degrees needs --dags")
    paths = expand_paths(cfg["dags"] if isinstance(cfg["dags"], list) else [cfg["dags"]])
    dags = [_read_graph(x, True) for x in paths]
    try:
        dags = [reorder(d, dags[0].node_names) for d in dags]
        table = degree_table_rows(degree_table(dags))
        counts = connection_counts(dags)
    except DimensionMismatch as exc:
        raise ConfigError(str(exc)) from None
    names = dags[0].node_names
    atomic_write(out / "degrees.csv", to_csv(table))
    atomic_write(out / "degrees.txt", to_aligned(table))
    lines = ["source,target,count"]
    for a in range(len(names)):
        for b in range(len(names)):
            if counts[a, b]:
                lines.append(f"{names[a]},{names[b]},{counts[a, b]}")
    atomic_write(out / "connections.csv", "\n".join(lines) + "\n")
    return paths, ["degrees.csv", "degrees.txt", "connections.csv"], {}


# ---------------------------------------------------------------------------
# compare


def _grid_cells(sweep: dict) -> list[dict]:
    grid = sweep.get("grid", {})
    base = {k: v for k, v in sweep.items() if k not in ("grid", "learn", "methods")}
    cells = [base]
    for key in sorted(grid):
        cells = [dict(c, **{key: v}) for c in cells for v in grid[key]]
    out = []
    for c in cells:
        for r in range(int(sweep.get("repeats", 1))):
            out.append(dict(c, repeat=r))
    return out


def _run_cell(args: tuple[dict, dict, list[str], int]) -> list[dict]:
    cell, learn_over, methods, index = args
    kind = cell.get("kind", "synth")
    seed = derive_seed(int(cell.get("seed", 0)), index, int(cell["repeat"]))
    rng = np.random.default_rng(seed)
    rows = []
    key = {k: cell.get(k) for k in ("kind", "n", "m", "p", "density", "level", "repeat")}
    try:
        if kind == "synth":
            res = generate_synthetic(
                SynthSpec(int(cell["m"]), int(cell["p"]), int(cell["n"]), float(cell["density"]), cell.get("nu0"), seed),
                rng,
            )
            tasks, truth, mode = res.tasks, res.graphs, "adjacency"
        else:
            base = parse_adjacency_list(Path(cell["base"]).read_text(encoding="utf-8"))
            dags = perturb_benchmark(PerturbSpec(base, float(cell["level"]), int(cell["m"]), seed), rng)
            tasks = [TaskData.from_data(sample_sem(d, int(cell["n"]), c)) for d, c in zip(dags, rng.spawn(len(dags)))]
            truth, mode = dags, "arrowhead"
        if learn_over.get("standardize"):
            tasks = [TaskData.from_data(standardize(t.data)) for t in tasks]
        lcfg = dict(DEFAULTS["learn"])
        lcfg.update(learn_over)
        lcfg["seed"] = seed
        if lcfg.get("nu0") is None and kind == "synth" and cell.get("nu0") is None:
            lcfg["nu0"] = 2.0 * tasks[0].p
        rc = build_run_config(lcfg, tasks[0].p, len(tasks))
        sig = initial_dags(tasks, rc)
        learned = {"sig": sig}
        if "avg" in methods:
            scfg = SearchConfig(rc.search.max_parents, rc.search.max_iters, rc.search.restarts, derive_seed(seed, 1, 0))
            learned["avg"] = [learn_avg(tasks, scfg).dag] * len(tasks)
        if "mtgbn" in methods:
            learned["mtgbn"] = [r.dag for r in run_mcem(tasks, sig, rc).dags]
        for method in methods:
            conf = adjacency_confusion if mode == "adjacency" else arrowhead_confusion
            avg = average_rows([metrics(conf(a, b)) for a, b in zip(learned[method], truth)])
            for metric, val in avg.items():
                rows.append(dict(key, method=method, mode=mode, metric=metric, value=val, status=0))
    except RetriesExhausted as exc:
        rows.append(dict(key, method="", mode="", metric="failed", value=None, status=EXIT_GENERATION, error=str(exc)))
    except ChainDiverged as exc:
        rows.append(dict(key, method="", mode="", metric="failed", value=None, status=EXIT_SAMPLER, error=str(exc)))
    except (MtgbnError, ValueError) as exc:
        rows.append(dict(key, method="", mode="", metric="failed", value=None, status=EXIT_CONFIG, error=str(exc)))
    return rows


RESULT_COLUMNS = ("kind", "n", "m", "p", "density", "level", "repeat", "method", "mode", "metric", "value", "status")


def run_compare(cfg: dict, out: Path) -> tuple[list[str], list[str], dict]:
    if not cfg["sweep"]:
        raise ConfigError("compare needs --sweep")
    try:
        sweep = json.loads(Path(cfg["sweep"]).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad sweep JSON: {exc}") from None
    methods = sweep.get("methods", ["mtgbn", "sig", "avg"])
    bad = set(methods) - {"mtgbn", "sig", "avg"}
    if bad:
        raise ConfigError(f"unknown methods {sorted(bad)}")
    cells = _grid_cells(sweep)
    jobs = [(c, sweep.get("learn", {}), methods, i) for i, c in enumerate(cells)]
    n_jobs = max(1, int(cfg["jobs"]))
    if n_jobs == 1:
        results = [_run_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(n_jobs) as pool:
            results = list(pool.map(_run_cell, jobs))
    lines = [",".join(RESULT_COLUMNS)]
    for rows in results:
        for r in rows:
            lines.append(",".join("" if r.get(c) is None else (repr(r[c]) if isinstance(r[c], float) else str(r[c])) for c in RESULT_COLUMNS))
    atomic_write(out / "results.csv", "\n".join(lines) + "\n")
    failures = [r for rows in results for r in rows if r["status"]]
    if failures:
        atomic_write(out / "failures.jsonl", "".join(json.dumps(f, sort_keys=True) + "\n" for f in failures))
    outputs = ["results.csv"] + (["failures.jsonl"] if failures else [])
    base = sweep.get("base")
    return [cfg["sweep"]] + ([base] if base else []), outputs, {"cell_seeds": "derived from sweep seed, cell index and repeat"}


# ---------------------------------------------------------------------------
# argument parsing and dispatch


RUNNERS: dict[str, Callable[[dict, Path], tuple[list[str], list[str], dict]]] = {
    "simulate": run_simulate,
    "learn": run_learn,
    "eval": run_eval,
    "degrees": run_degrees,
    "compare": run_compare,
}


def _bool_flag(p: argparse.ArgumentParser, name: str, help: str) -> None:
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action="store_const", const=True, default=None, help=help)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtgbn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON file with option defaults")

    s = sub.add_parser("simulate", help="generate synthetic tasks or perturbed networks")
    common(s)
    s.add_argument("--mode", choices=["synth", "perturb"])
    s.add_argument("--m", type=int)
    s.add_argument("--p", type=int)
    s.add_argument("--n", type=int, help="rows per task (perturb mode: 0 writes graphs only)")
    s.add_argument("--density", type=float)
    s.add_argument("--nu0", type=float, help="degrees of freedom of the task covariances (default 2p)")
    s.add_argument("--max-retries", dest="max_retries", type=int)
    s.add_argument("--max-shared-redraws", dest="max_shared_redraws", type=int, help="fresh shared covariances tried before giving up")
    s.add_argument("--base", help="adjacency-list file of the base network")
    s.add_argument("--level", type=float, help="share of node pairs to modify")
    s.add_argument("--seed", type=int)

    lp = sub.add_parser("learn", help="learn one structure per task")
    common(lp)
    lp.add_argument("--method", choices=["mtgbn", "sig", "avg"])
    lp.add_argument("--tasks", nargs="+", help="task CSV files or glob patterns")
    lp.add_argument("--init", nargs="+", help="initial graphs for mtgbn (default: single-task result)")
    lp.add_argument("--nu0", type=float, help="prior degrees of freedom (default p + 2)")
    lp.add_argument("--epsilon", type=float, help="EM tolerance (default 0.01 m p)")
    lp.add_argument("--seed", type=int)
    _bool_flag(lp, "standardize", "center and scale each column before learning")
    lp.add_argument("--n-samples", dest="n_samples", type=int)
    lp.add_argument("--burn-in", dest="burn_in", type=int)
    lp.add_argument("--thin", type=int)
    lp.add_argument("--n-leapfrog", dest="n_leapfrog", type=int)
    lp.add_argument("--step-size", dest="step_size", type=float)
    lp.add_argument("--target-accept", dest="target_accept", type=float)
    lp.add_argument("--max-em-iters", dest="max_em_iters", type=int)
    lp.add_argument("--max-parents", dest="max_parents", type=int)
    lp.add_argument("--restarts", type=int)
    lp.add_argument("--skeleton-threshold", dest="skeleton_threshold", type=float)

    e = sub.add_parser("eval", help="score learned graphs against the truth")
    common(e)
    e.add_argument("--learned", nargs="+")
    e.add_argument("--truth", nargs="+")
    e.add_argument("--mode", choices=["adjacency", "arrowhead", "both"])

    d = sub.add_parser("degrees", help="degree table and connection counts")
    common(d)
    d.add_argument("--dags", nargs="+")

    c = sub.add_parser("compare", help="simulate, learn with every method and evaluate over a grid")
    common(c)
    c.add_argument("--sweep", help="JSON sweep specification")
    c.add_argument("--jobs", type=int)

    r = sub.add_parser("replay", help="re-run a command from its manifest")
    r.add_argument("--manifest", required=True)
    r.add_argument("--out", help="output directory (default: the manifest's directory)")
    return ap


def execute(command: str, cfg: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    inputs, outputs, seeds = RUNNERS[command](cfg, out)
    write_manifest(out, command, cfg, inputs, outputs, seeds)


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "replay":
            manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
            out = Path(args.out) if args.out else Path(args.manifest).parent
            execute(manifest["command"], manifest["config"], out)
        else:
            cfg = resolve(args.command, args)
            execute(args.command, cfg, Path(args.out))
    except (ConfigError, DimensionMismatch, DomainError) as exc:
        print(f"mtgbn: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RetriesExhausted as exc:
        print(f"mtgbn: generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except ChainDiverged as exc:
        print(f"mtgbn: sampler diverged: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    except OSError as exc:
        print(f"mtgbn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MtgbnError, ValueError) as exc:
        print(f"mtgbn: {exc}", file=sys.stderr)
        if os.environ.get("MTGBN_DEBUG"):
            traceback.print_exc()
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
