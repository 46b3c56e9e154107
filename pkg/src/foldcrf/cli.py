"""Command-line driver: estimate states, train, build tables, sample, fold, score, evaluate.

Every command writes into ``--out`` and leaves a ``run_manifest.tsv``
(command, seed, inputs and outputs with checksums, package versions) that
is byte-identical across repeated runs, plus a ``run_timing.tsv`` with the
wall time.  A ``config.tsv`` of ``key<TAB>value`` lines may supply any
flag; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

import foldcrf
from foldcrf import io, pnn
from foldcrf.anglemodel import AngleStateLibrary, Observation, TrainingExample, assign_labels
from foldcrf.anglemodel import estimate_state_library, evaluate_f1, fit
from foldcrf.evaluate import metrics_row, write_metrics
from foldcrf.geometry import QuadrilateralTable, internal_from_trace, radius_of_gyration, read_table
from foldcrf.potentials import (
    WEIGHT_ORDER,
    Conformation,
    DistanceTable,
    EnergyModel,
    EspComponent,
    EspTable,
    HbondComponent,
    HbondTable,
    SumComponent,
    build_distance_table,
    eligible_pairs,
    epad_potential,
    esp_build,
    parse_weights,
    table_potential,
)
from foldcrf.residues import AMINO_ACIDS
from foldcrf.simulate import CrfMoves, SimConfig, run_remc_moves, run_sa_moves

log = logging.getLogger("foldcrf")

STOCHASTIC = {"estimate-states", "train-crf1", "train-crf2", "train-cnf", "train-pnn", "sample", "fold-sa", "fold-remc"}

# flag -> (type, default); None default means "not set"
OPTIONS = {
    "config": (str, None),
    "out": (str, None),
    "seed": (int, None),
    "train": (str, None),
    "profile": (str, None),
    "ss": (str, None),
    "native": (str, None),
    "native_energy": (float, None),
    "target": (str, None),
    "model": (str, None),
    "states": (str, None),
    "decoys": (str, None),
    "n_decoys": (int, 1),
    "weights": (str, "1,1,1,1"),
    "biased": (str, "on"),
    "pnn": (str, None),
    "ca_table": (str, None),
    "esp_table": (str, None),
    "hbond_table": (str, None),
    "quad_table": (str, None),
    "k": (int, 100),
    "sigma2": (float, None),
    "max_iter": (int, 200),
    "window": (int, 4),
    "gates": (int, 200),
    "restarts": (int, 3),
    "lam": (float, 1e-3),
    "h1": (int, pnn.DEFAULT_H1),
    "h2": (int, pnn.DEFAULT_H2),
    "max_pairs": (int, 0),
    "pseudocount": (float, 1.0),
    "max_steps": (int, 10000),
    "replicas": (int, 20),
    "steps_per_replica": (int, 24000),
    "exchange_every": (int, 30),
    "t_max": (float, 100.0),
    "cutoff": (float, 6.0),
}

COMMANDS = {
    "estimate-states": (("train", "seed", "out"), ("k",)),
    "train-crf1": (("train", "states", "seed", "out"), ("sigma2", "max_iter", "window")),
    "train-crf2": (("train", "states", "seed", "out"), ("sigma2", "max_iter", "window")),
    "train-cnf": (("train", "states", "seed", "out"), ("sigma2", "max_iter", "window", "gates", "restarts")),
    "train-pnn": (("train", "seed", "out"), ("lam", "max_iter", "h1", "h2", "max_pairs", "restarts")),
    "build-tables": (("train", "out"), ("pseudocount",)),
    "sample": (("model", "states", "profile", "ss", "seed", "out"),
               ("n_decoys", "native", "pnn", "ca_table", "esp_table", "hbond_table", "quad_table", "weights")),
    "fold-sa": (("model", "states", "profile", "ss", "seed", "out"),
                ("n_decoys", "native", "pnn", "ca_table", "esp_table", "hbond_table", "quad_table", "weights",
                 "biased", "max_steps")),
    "fold-remc": (("model", "states", "profile", "ss", "seed", "out"),
                  ("n_decoys", "native", "pnn", "ca_table", "esp_table", "hbond_table", "quad_table", "weights",
                   "biased", "replicas", "steps_per_replica", "exchange_every", "t_max")),
    "score": (("decoys", "out"),
              ("profile", "native", "pnn", "ca_table", "esp_table", "hbond_table", "quad_table", "weights")),
    "eval": (("decoys", "native", "out"), ("native_energy", "target", "cutoff")),
}


class UsageError(Exception):
    pass


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foldcrf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for cmd, (required, optional) in COMMANDS.items():
        p = sub.add_parser(cmd, help=f"run {cmd}")
        for name in ("config", *required, *optional):
            typ, default = OPTIONS[name]
            extra = {"choices": ("on", "off")} if name == "biased" else {}
            hint = " (required)" if name in required else (f" (default {default})" if default is not None else "")
            p.add_argument(_flag(name), dest=name, type=typ, default=None, help=f"{name}{hint}", **extra)
    return parser


def read_config(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split("\t") if "\t" in text else text.split(None, 1)
            if len(parts) != 2:
                raise io.ParseError(f"{path}:{lineno}: expected 'key<TAB>value'")
            key = parts[0].strip().lstrip("-").replace("-", "_")
            if key not in OPTIONS or key == "config":
                raise io.ParseError(f"{path}:{lineno}: unknown key {parts[0].strip()!r}")
            out[key] = parts[1].strip()
    return out


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Merge config file values under the flags, fill defaults, check required flags."""
    required, optional = COMMANDS[args.command]
    if args.config:
        for key, raw in read_config(args.config).items():
            if key not in required and key not in optional:
                raise UsageError(f"{args.config}: key {key!r} does not apply to {args.command}")
            if getattr(args, key) is None:
                try:
                    setattr(args, key, OPTIONS[key][0](raw))
                except ValueError:
                    raise UsageError(f"{args.config}: bad value for {key}: {raw!r}") from None
    for key, (_, default) in OPTIONS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, default)
    missing = [_flag(k) for k in required if getattr(args, k) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required flag {', '.join(missing)}")
    for key in (*required, *optional, "config"):
        val = getattr(args, key, None)
        if key in {"train", "profile", "ss", "native", "model", "states", "decoys", "pnn", "ca_table",
                   "esp_table", "hbond_table", "quad_table", "config"} and val is not None:
            if not Path(val).exists():
                raise UsageError(f"{_flag(key)}: no such file {val}")
    return args


# --- run bookkeeping ---------------------------------------------------------


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _input_paths(args) -> list[tuple[str, Path]]:
    out = []
    for key in ("config", "train", "profile", "ss", "native", "model", "states", "decoys", "pnn",
                "ca_table", "esp_table", "hbond_table", "quad_table"):
        val = getattr(args, key, None)
        if val is None:
            continue
        p = Path(val)
        if key == "train":
            for entry in _dataset_files(p):
                out.append(("train_file", entry))
        if p.is_dir():
            files = sorted(p.glob("*.pdb")) + ([p / "decoys.tsv"] if (p / "decoys.tsv").exists() else [])
            out.extend((f"{key}_file", f) for f in files)
            continue
        out.append((key, p))
    return out


def _dataset_files(path: Path) -> list[Path]:
    files = []
    for line in path.read_text().splitlines():
        text = line.split("#", 1)[0].split()
        files.extend(path.parent / t for t in text)
    return files


def write_manifest(out: Path, args, outputs: list[Path], params: dict) -> None:
    rows = [("command", args.command), ("seed", "NA" if args.seed is None else str(args.seed))]
    required, optional = COMMANDS[args.command]
    for key in sorted(set(required) | set(optional)):
        val = getattr(args, key)
        if key not in {"out", "seed"} and val is not None:
            rows.append((f"param:{key}", str(val)))
    for key, val in params.items():
        rows.append((f"result:{key}", str(val)))
    for key, p in _input_paths(args):
        rows.append((f"input:{key}", f"{p}\t{_sha256(p)}"))
    for p in sorted(outputs):
        rows.append(("output", f"{p.relative_to(out)}\t{_sha256(p)}"))
    rows += [("version:foldcrf", foldcrf.__version__), ("version:numpy", np.__version__),
             ("version:scipy", scipy.__version__), ("version:python", platform.python_version())]
    with open(out / "run_manifest.tsv", "w", newline="\n") as fh:
        fh.write("key\tvalue\n")
        for k, v in rows:
            fh.write(f"{k}\t{v}\n")


# --- shared loading ----------------------------------------------------------


def _sequence(args, n: int, profile: np.ndarray | None) -> str:
    """Native sequence when given, else the profile's most frequent residue per column."""
    if getattr(args, "native", None):
        _, seq = io.parse_ca_pdb(args.native)
        if len(seq) != n:
            raise UsageError(f"--native has {len(seq)} residues, expected {n}")
        return seq
    if profile is not None:
        return "".join(AMINO_ACIDS[k] for k in np.argmax(profile, axis=1))
    return "X" * n


def _energy_model(args, sequence: str, profile: np.ndarray | None) -> EnergyModel | None:
    n = len(sequence)
    rg = pnn.estimate_rg(n)
    comps = {}
    if args.pnn:
        if profile is None:
            raise UsageError("--pnn needs --profile")
        comps["epad"] = SumComponent([epad_potential(pnn.PnnModel.read(args.pnn), profile, rg)])
    if args.ca_table:
        comps["table"] = SumComponent([table_potential(DistanceTable.read(args.ca_table), sequence, rg)])
    if args.hbond_table:
        comps["hbond"] = HbondComponent(HbondTable.read(args.hbond_table))
    if args.esp_table:
        comps["esp"] = EspComponent(EspTable.read(args.esp_table))
    if not comps:
        return None
    try:
        w = parse_weights(args.weights)
    except ValueError as exc:
        raise UsageError(f"--weights: {exc}") from None
    return EnergyModel(comps, {k: v for k, v in w.items() if k in comps})


def _quad_table(args) -> QuadrilateralTable | None:
    if args.quad_table:
        return read_table(args.quad_table)
    return QuadrilateralTable() if args.hbond_table else None


def _manifest_row(decoy_id: str, energy: float | None, parts: dict, rg: float) -> dict:
    row = {"decoy_id": decoy_id, "energy": energy, "rg": rg}
    for k in WEIGHT_ORDER:
        row[f"e_{k}"] = parts.get(k)
    return row


def _load_observation(args):
    profile = io.parse_profile(args.profile)
    ss = io.parse_ss(args.ss)
    if len(profile) != len(ss):
        raise UsageError(f"--profile has {len(profile)} rows but --ss has {len(ss)}")
    model = io.read_angle_model(args.model)
    lib = AngleStateLibrary.read(args.states)
    if model.n_states != len(lib):
        raise UsageError(f"--model has {model.n_states} states but --states has {len(lib)}")
    return Observation(profile, ss), model, lib


# --- commands ----------------------------------------------------------------


def cmd_estimate_states(args, out: Path):
    data = io.read_dataset(args.train)
    lib = estimate_state_library([e.trace for e in data], args.k, args.seed)
    lib.write(out / "states.tsv")
    return {"n_states": len(lib)}, [out / "states.tsv"]


def _training_set(args):
    lib = AngleStateLibrary.read(args.states)
    data = io.read_dataset(args.train)
    return [TrainingExample(Observation(e.profile, e.ss, e.name), assign_labels(internal_from_trace(e.trace), lib))
            for e in data], lib


def cmd_train(args, out: Path):
    kind = args.command.split("-")[1].upper()
    dataset, lib = _training_set(args)
    res = fit(kind, dataset, len(lib), args.sigma2, args.max_iter, args.window, args.gates,
              args.restarts, args.seed)
    io.write_angle_model(out / "model.txt", res.model)
    with open(out / "train_history.tsv", "w", newline="\n") as fh:
        fh.write("iteration\tobjective\n")
        for k, v in enumerate(res.history):
            fh.write(f"{k}\t{v:.10g}\n")
    params = {"objective": f"{res.objective:.10g}", "train_f1": f"{evaluate_f1(res.model, dataset):.4f}"}
    return params, [out / "model.txt", out / "train_history.tsv"]


def cmd_train_pnn(args, out: Path):
    data = io.read_dataset(args.train)
    rng = np.random.default_rng(args.seed)
    xs, bins = [], []
    for e in data:
        n = len(e.trace)
        i, j = eligible_pairs(n, True)
        if args.max_pairs and len(i) > args.max_pairs:
            keep = np.sort(rng.choice(len(i), args.max_pairs, replace=False))
            i, j = i[keep], j[keep]
        if len(i) == 0:
            continue
        xs.append(pnn.pair_features(e.profile, np.column_stack([i, j]), n))
        bins.append(pnn.distance_bin(np.linalg.norm(e.trace[i] - e.trace[j], axis=1)))
    if not xs:
        raise UsageError("--train: no residue pairs with separation >= 3")
    x, b = np.vstack(xs), np.concatenate(bins)
    model = pnn.train_pnn(x, b, args.lam, args.max_iter, args.seed, args.h1, args.h2, n_restarts=args.restarts)
    model.write(out / "pnn.txt")
    acc = float(np.mean(np.argmax(pnn.forward_distribution(model, x), axis=1) == b))
    return {"n_pairs": len(b), "train_accuracy": f"{acc:.4f}"}, [out / "pnn.txt"]


def cmd_build_tables(args, out: Path):
    data = io.read_dataset(args.train)
    confs = [Conformation(e.trace, e.sequence) for e in data]
    build_distance_table(confs, "ca", args.pseudocount).write(out / "ca_table.tsv")
    esp_build(confs, args.pseudocount).write(out / "esp_table.tsv")
    return {"n_structures": len(confs)}, [out / "ca_table.tsv", out / "esp_table.tsv"]


def _emit(out: Path, decoys: list[tuple[str, np.ndarray, float | None, dict]], sequence: str):
    rows = []
    for decoy_id, trace, energy, parts in decoys:
        io.write_pdb(out / f"{decoy_id}.pdb", trace, sequence)
        rows.append(_manifest_row(decoy_id, energy, parts, radius_of_gyration(trace)))
    io.write_decoy_manifest(out / "decoys.tsv", rows)
    files = [out / f"{r['decoy_id']}.pdb" for r in rows]
    return {"n_decoys": len(rows)}, [out / "decoys.tsv", *files]


def cmd_sample(args, out: Path):
    obs, model, lib = _load_observation(args)
    seq = _sequence(args, len(obs), obs.profile)
    energy = _energy_model(args, seq, obs.profile)
    moves = CrfMoves(model, obs, lib, seq, quad_table=_quad_table(args))
    rng = np.random.default_rng(args.seed)
    decoys = []
    for k in range(args.n_decoys):
        st = moves.initial(rng)
        rep = energy.evaluate(st.conf) if energy else None
        decoys.append((f"sample_{k + 1:04d}", st.trace, rep.total if rep else None, rep.parts if rep else {}))
    return _emit(out, decoys, seq)


def _fold_setup(args):
    obs, model, lib = _load_observation(args)
    seq = _sequence(args, len(obs), obs.profile)
    energy = _energy_model(args, seq, obs.profile)
    if energy is None:
        raise UsageError(f"{args.command}: give at least one of --pnn, --ca-table, --esp-table, --hbond-table")
    moves = CrfMoves(model, obs, lib, seq, args.biased == "on", _quad_table(args))
    return seq, energy, moves


def cmd_fold_sa(args, out: Path):
    seq, energy, moves = _fold_setup(args)
    cfg = SimConfig(max_steps=args.max_steps, biased=args.biased == "on", seed=args.seed)
    decoys = []
    for r in range(args.n_decoys):
        res = run_sa_moves(moves, energy, cfg, np.random.default_rng([args.seed, r]))
        d = res.decoys[0]
        decoys.append((f"sa_{r + 1:04d}", d.trace, d.energy, d.parts))
    return _emit(out, decoys, seq)


def cmd_fold_remc(args, out: Path):
    seq, energy, moves = _fold_setup(args)
    decoys = []
    for r in range(args.n_decoys):
        # replica streams use seed+k and the swap stream seed+n, so space runs apart
        seed = args.seed + r * (args.replicas + 1)
        cfg = SimConfig(n_replicas=args.replicas, steps_per_replica=args.steps_per_replica,
                        exchange_every=args.exchange_every, t_max=args.t_max,
                        biased=args.biased == "on", seed=seed)
        res = run_remc_moves(moves, energy, cfg)
        for k, d in enumerate(res.decoys):
            decoys.append((f"remc_{r + 1:04d}_{k + 1:02d}", d.trace, d.energy, d.parts))
    return _emit(out, decoys, seq)


def _decoy_files(path: Path) -> tuple[list[str], list[Path], list[dict] | None]:
    """Decoy ids and PDB paths from a decoys.tsv manifest or a directory of PDB files.

    A directory holding a ``decoys.tsv`` is read through that manifest.
    """
    if path.is_dir() and (path / "decoys.tsv").exists():
        path = path / "decoys.tsv"
    if path.is_dir():
        files = sorted(path.glob("*.pdb"))
        if not files:
            raise UsageError(f"--decoys: no .pdb files in {path}")
        return [f.stem for f in files], files, None
    rows = io.read_decoy_manifest(path)
    if not rows:
        raise UsageError(f"--decoys: {path} lists no decoys")
    files = [path.parent / f"{r['decoy_id']}.pdb" for r in rows]
    for f in files:
        if not f.exists():
            raise UsageError(f"--decoys: missing decoy file {f}")
    return [r["decoy_id"] for r in rows], files, rows


def cmd_score(args, out: Path):
    ids, files, _ = _decoy_files(Path(args.decoys))
    traces = [io.parse_ca_pdb(f) for f in files]
    n = len(traces[0][0])
    if any(len(t) != n for t, _ in traces):
        raise UsageError("--decoys: decoys differ in length")
    profile = io.parse_profile(args.profile) if args.profile else None
    seq = _sequence(args, n, profile) if (args.native or profile is not None) else traces[0][1]
    energy = _energy_model(args, seq, profile)
    if energy is None:
        raise UsageError("score: give at least one of --pnn, --ca-table, --esp-table, --hbond-table")
    quad = _quad_table(args)
    rows = []
    for decoy_id, (trace, _) in zip(ids, traces):
        rep = energy.evaluate(Conformation(trace, seq, None, quad))
        rows.append(_manifest_row(decoy_id, rep.total, rep.parts, radius_of_gyration(trace)))
    io.write_decoy_manifest(out / "scores.tsv", rows)
    return {"n_decoys": len(rows)}, [out / "scores.tsv"]


def cmd_eval(args, out: Path):
    ids, files, rows = _decoy_files(Path(args.decoys))
    native, _ = io.parse_ca_pdb(args.native)
    traces = []
    for f in files:
        t, _ = io.parse_ca_pdb(f)
        if len(t) != len(native):
            raise UsageError(f"decoy {f} has {len(t)} residues, native has {len(native)}")
        traces.append(t)
    energies = None
    if rows is not None and all(r["energy"] is not None for r in rows):
        energies = [r["energy"] for r in rows]
    target = args.target or Path(args.native).stem
    row = metrics_row(target, traces, native, energies, args.native_energy, args.cutoff)
    write_metrics(out / "metrics.tsv", [row])
    return {"n_decoys": len(ids)}, [out / "metrics.tsv"]


HANDLERS = {
    "estimate-states": cmd_estimate_states,
    "train-crf1": cmd_train,
    "train-crf2": cmd_train,
    "train-cnf": cmd_train,
    "train-pnn": cmd_train_pnn,
    "build-tables": cmd_build_tables,
    "sample": cmd_sample,
    "fold-sa": cmd_fold_sa,
    "fold-remc": cmd_fold_remc,
    "score": cmd_score,
    "eval": cmd_eval,
}


def dispatch(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    params, outputs = HANDLERS[args.command](args, out)
    wall = time.perf_counter() - start
    write_manifest(out, args, outputs, params)
    with open(out / "run_timing.tsv", "w", newline="\n") as fh:
        fh.write(f"command\twall_seconds\n{args.command}\t{wall:.3f}\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] not in COMMANDS and not argv[0].startswith("-"):
        parser.print_usage(sys.stderr)
        if argv:
            print(f"foldcrf: unknown command {argv[0]!r}; choose from {', '.join(COMMANDS)}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = resolve(args)
        if args.command in STOCHASTIC and args.seed is None:
            raise UsageError(f"{args.command}: missing required flag --seed")
        return dispatch(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"foldcrf: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"foldcrf: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
