"""Command-line interface: one subcommand per pipeline stage plus experiments.

Exit codes: 0 success, 2 bad arguments, 3 I/O or unreadable input, 4
numerical failure, 5 bond dimension above 4. Progress goes to stderr;
results go to the requested files (and short summaries to stdout).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import mps as mpslib
from .circuit import Circuit, CircuitError, CircuitObjective, EnergyMeasure
from .compiler.kak import KAKError
from .compiler.staircase import BondTooLargeError, CompileError
from .mpsml import ClassifierError, accuracy
from .optimize import OptimizationError, RunLog, minimize
from .problems import (
    ParseError,
    ProblemError,
    load_graph,
    load_pauli_hamiltonian,
    exact_ground,
)
from .runner import (
    INITS,
    ConfigError,
    ExperimentConfig,
    classification_data,
    compile_mps,
    emit_report,
    energy_problem,
    initial_parameters,
    pretrain_classifier,
    pretrain_energy_mps,
    run_experiment,
)
from .tensor_core import NotHermitianError

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL, EXIT_BOND = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _parse(path, loader):
    """Read and parse an input file; any parse failure is an input error."""
    text = _read_text(path)
    try:
        return loader(text)
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise InputError(f"{path}: not a valid file ({exc})") from None


def _write_text(path, text: str) -> None:
    try:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from None


def _check_input_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise InputError(f"input file not found: {p}")


# --- argument groups ----------------------------------------------------


def _add_problem_args(p: argparse.ArgumentParser, problems=("maxcut", "hamiltonian-file", "tfim")) -> None:
    p.add_argument("--problem", choices=problems, required=True)
    p.add_argument("--graph", help="edge-list file (maxcut); default: bundled 6-node graph")
    p.add_argument("--objective", choices=("maximize-cut", "minimize-eq1"), default="maximize-cut")
    p.add_argument("--hamiltonian", help="Pauli-sum text file; default: bundled H2 fixture")
    p.add_argument("--n-qubits", type=int)
    p.add_argument("--tfim-j", type=float, default=1.0)
    p.add_argument("--tfim-g", type=float, default=1.0)


def _problem_config(a: argparse.Namespace, **extra) -> ExperimentConfig:
    _check_input_files(getattr(a, "graph", None), getattr(a, "hamiltonian", None), getattr(a, "dataset", None))
    return ExperimentConfig(
        problem=a.problem, graph=a.graph, objective=a.objective, hamiltonian=a.hamiltonian,
        n_qubits=a.n_qubits, tfim_j=a.tfim_j, tfim_g=a.tfim_g, **extra,
    )


def _energy_problem(cfg: ExperimentConfig):
    try:
        return energy_problem(cfg)
    except ParseError as exc:
        raise InputError(str(exc)) from None


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None

    return parse


def _optional(kind):
    def parse(text: str):
        return None if text.lower() == "none" else kind(text)

    return parse


# --- subcommands --------------------------------------------------------


def cmd_pretrain(a: argparse.Namespace) -> int:
    if a.problem == "classify":
        cfg = ExperimentConfig(
            problem="classify", n_qubits=a.n_qubits, dataset=a.dataset, pca=a.pca,
            dataset_samples=a.samples, dataset_seed=a.seed, mps_chi=a.chi, mps_epochs=a.epochs,
            mps_learning_rate=a.learning_rate, mps_batch_size=a.batch_size, depth=a.n_qubits or 4,
        )
        if a.method not in (None, "ml"):
            raise UsageError("classification pretraining uses --method ml")
        data = classification_data(cfg)
        _progress(f"training MPS classifier on {len(data)} samples for {a.epochs} epochs")
        clf = pretrain_classifier(cfg, data, a.seed)
        state = clf.state
        value = accuracy(clf, data)
        label = "train accuracy"
    else:
        cfg = _problem_config(a, mps_method=a.method, mps_chi=a.chi, mps_dtau=a.dtau, mps_steps=a.steps,
                              mps_sweeps=a.sweeps)
        if cfg.method == "ml":
            raise UsageError("--method ml applies to --problem classify only")
        prob = _energy_problem(cfg)
        _progress(f"pretraining with {cfg.method} (chi={a.chi}) on {prob.n} qubits")
        state = pretrain_energy_mps(cfg, prob, a.seed)
        value = prob.sign * mpslib.expectation(state, prob.hamiltonian)
        label = "objective"
    _write_text(a.out, mpslib.mps_to_json(state) + "\n")
    print(f"{label} {value!r}")
    return EXIT_OK


def cmd_compile(a: argparse.Namespace) -> int:
    state = _parse(a.mps, mpslib.mps_from_json)
    if max(state.bond_dims, default=1) > 4:
        raise BondTooLargeError(f"bond dimensions {state.bond_dims} exceed 4")
    if a.depth < state.n - 1:
        raise UsageError(f"--depth {a.depth} is below the {state.n - 1} layers the compiled diagonal needs")
    if state.canonical_form == "none":
        state = mpslib.canonicalize(state, "left")
    chi = max(state.bond_dims, default=1)
    offdiag = "ry-crx" if a.ansatz == "brickwall-ry-crx" else "full-KAK"
    circuit, fid = compile_mps(state, a.depth, offdiag, chi=chi, adjoint=a.adjoint,
                               iterations=a.iterations, seed=a.seed)
    _write_text(a.out, circuit.to_json() + "\n")
    print(f"fidelity {fid!r}")
    return EXIT_OK


def cmd_train(a: argparse.Namespace) -> int:
    circuit = _parse(a.circuit, Circuit.from_json)
    cfg = _problem_config(a, optimizer=a.optimizer, learning_rate=a.learning_rate, max_iter=a.max_iter,
                          gtol=a.gtol, ftol=a.ftol, depth=max(1, circuit.meta.get("depth", 1)))
    prob = _energy_problem(cfg)
    if prob.n != circuit.n:
        raise UsageError(f"circuit has {circuit.n} qubits but the problem has {prob.n}")
    x0 = initial_parameters(a.init, circuit, a.seed, circuit if a.init == "mps" else None)
    obj = CircuitObjective(circuit, EnergyMeasure(prob.hamiltonian, prob.sign))
    _progress(f"training {circuit.num_params} parameters with {cfg.optimizer_kind}")
    x, log = minimize(obj, x0, cfg.optimizer_config(a.seed))
    _write_text(a.out, log.to_csv())
    if a.params_out:
        _write_text(a.params_out, circuit.with_params(x).to_json() + "\n")
    print(f"best objective {float(log.objectives.min())!r}")
    return EXIT_OK


def _run_and_emit(cfg: ExperimentConfig, out) -> int:
    if out is None:
        raise UsageError("an output directory is required (--output)")
    _progress(f"running {len(cfg.inits)} arm(s) x {len(cfg.seeds)} seed(s) on {cfg.problem}")
    report = run_experiment(cfg)
    try:
        paths = emit_report(report, out)
    except OSError as exc:
        raise InputError(f"cannot write report: {exc}") from None
    for p in paths:
        _progress(f"wrote {p}")
    return EXIT_OK


def cmd_classify(a: argparse.Namespace) -> int:
    _check_input_files(a.dataset)
    n = a.n_qubits or 4
    cfg = ExperimentConfig(
        problem="classify", n_qubits=n, depth=a.depth or n, dataset=a.dataset, pca=a.pca,
        dataset_samples=a.samples, dataset_seed=a.seed, inits=a.inits, seeds=[a.seed],
        mps_chi=a.chi, mps_epochs=a.mps_epochs, mps_learning_rate=a.mps_learning_rate,
        epochs=a.epochs, batch_size=a.batch_size, learning_rate=a.learning_rate, output=a.output,
    )
    return _run_and_emit(cfg, a.output)


_LIST_FIELDS = {"inits": str, "seeds": int}


def _config_field_type(f: dataclasses.Field):
    if f.name in _LIST_FIELDS:
        return _csv_list(_LIST_FIELDS[f.name])
    default = f.default
    hint = str(f.type)
    base = float if "float" in hint else int if "int" in hint else str
    if default is None or "None" in hint:
        return _optional(base)
    return base


def cmd_experiment(a: argparse.Namespace) -> int:
    if a.config:
        doc = _parse(a.config, json.loads)
        if not isinstance(doc, dict):
            raise InputError(f"{a.config}: expected a JSON object")
    else:
        doc = {}
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(a, f.name, None)
        if value is not None:
            doc[f.name] = value
    cfg = ExperimentConfig.from_dict(doc)
    _check_input_files(cfg.graph, cfg.hamiltonian, cfg.dataset)
    return _run_and_emit(cfg, cfg.output)


def cmd_exact(a: argparse.Namespace) -> int:
    cfg = _problem_config(a, depth=1)
    if cfg.problem == "hamiltonian-file" and cfg.hamiltonian:
        try:
            h = load_pauli_hamiltonian(cfg.hamiltonian, cfg.n_qubits)
        except ParseError as exc:
            raise InputError(str(exc)) from None
        sign = 1.0
    else:
        prob = _energy_problem(cfg)
        h, sign = prob.hamiltonian, prob.sign
    e, _ = exact_ground(h.scaled(sign))
    print(repr(float(e)))
    return EXIT_OK


def _inspect_text(path, text: str) -> str:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        doc = json.loads(text)
        kind = doc.get("format")
        if kind == "mps":
            s = mpslib.mps_from_json(text)
            lines = [f"MPS: n={s.n} chi={s.chi} canonical_form={s.canonical_form}",
                     f"bond dims: {s.bond_dims}", f"norm: {s.norm()!r}"]
            if s.canonical_form != "none":
                lines.append(f"isometry defect: {mpslib.isometry_defect(s, s.canonical_form):.3e}")
            return "\n".join(lines)
        if kind == "circuit":
            c = Circuit.from_json(text)
            kinds = {}
            for g in c.gates:
                kinds[g.kind] = kinds.get(g.kind, 0) + 1
            lines = [f"circuit: n={c.n} gates={len(c.gates)} parameters={c.num_params}",
                     "gate kinds: " + ", ".join(f"{k}={v}" for k, v in sorted(kinds.items()))]
            for key in ("depth", "parity", "adjoint", "offdiag_kind"):
                if key in c.meta:
                    lines.append(f"{key}: {c.meta[key]}")
            if not np.all(np.isfinite(c.initial_params())):
                raise ValueError("circuit has non-finite parameters")
            return "\n".join(lines)
        if "runs" in doc and "config" in doc:
            ExperimentConfig.from_dict(doc["config"])
            lines = [f"experiment summary: problem={doc['config']['problem']} runs={len(doc['runs'])}"]
            for r in doc["runs"]:
                lines.append(f"  {r['init']:<8} seed {r['seed']:<4} best {r['best_objective']!r}"
                             f" fevals to convergence {r['fevals_to_convergence']}")
            return "\n".join(lines)
        ExperimentConfig.from_dict(doc)
        return "experiment config: " + json.dumps(doc, sort_keys=True)
    if stripped.startswith("step,objective"):
        log = RunLog.from_csv(text)
        objs = log.objectives
        return (f"run log: {len(log.iterations)} steps, total fevals {log.iterations[-1].fevals}\n"
                f"objective: first {float(objs[0])!r} best {float(objs.min())!r} last {float(objs[-1])!r}")
    suffix = Path(path).suffix
    if suffix == ".edges":
        g = load_graph(path)
        return f"graph: n={g.n} edges={len(g.edges)}\n" + g.to_text()
    h = load_pauli_hamiltonian(path)
    return f"Pauli sum: n={h.n} terms={len(h.terms)}\n" + h.to_text()


def cmd_inspect(a: argparse.Namespace) -> int:
    text = _read_text(a.path)
    try:
        out = _inspect_text(a.path, text)
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise InputError(f"{a.path}: invalid or corrupted artifact ({exc})") from None
    print(out)
    return EXIT_OK


# --- parser -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mps-pretrain", description="MPS pretraining for parametrized circuits.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="classical MPS training; writes an MPS file")
    _add_problem_args(p, ("maxcut", "hamiltonian-file", "tfim", "classify"))
    p.add_argument("--method", choices=("tebd", "dmrg", "ml"))
    p.add_argument("--chi", type=int, default=2)
    p.add_argument("--dtau", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--sweeps", type=int, default=10)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--batch-size", type=_optional(int))
    p.add_argument("--dataset", help="delimited dataset file (classify); default: seeded synthetic set")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--pca", choices=("none", "centered", "uncentered"), default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("compile", help="compile an MPS file into an identity-padded brick-wall circuit")
    p.add_argument("--mps", required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--ansatz", choices=("brickwall-kak", "brickwall-ry-crx"), default="brickwall-kak")
    p.add_argument("--adjoint", action="store_true", help="adjoint layout for classifiers")
    p.add_argument("--iterations", type=int, default=200, help="sweeps of the chi=4 fit")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("train", help="optimize a circuit on an energy problem; writes a run log")
    p.add_argument("--circuit", required=True)
    _add_problem_args(p)
    p.add_argument("--init", choices=INITS, default="mps", help="mps keeps the circuit's own angles")
    p.add_argument("--optimizer", choices=("gd-decay", "bfgs", "adam"))
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--gtol", type=float, default=1e-8)
    p.add_argument("--ftol", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--params-out", help="also write the trained circuit")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="MPS classifier pretraining then circuit training, all init arms")
    p.add_argument("--dataset")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--pca", choices=("none", "centered", "uncentered"), default="none")
    p.add_argument("--n-qubits", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--inits", type=_csv_list(str), default=list(INITS))
    p.add_argument("--chi", type=int, default=2)
    p.add_argument("--mps-epochs", type=int, default=5)
    p.add_argument("--mps-learning-rate", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=_optional(int), default=20)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("experiment", help="run a comparison experiment from a JSON config")
    p.add_argument("--config", help="JSON object with ExperimentConfig fields")
    for f in dataclasses.fields(ExperimentConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=_config_field_type(f), default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("exact", help="print the minimum eigenvalue of a problem Hamiltonian")
    _add_problem_args(p)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("inspect", help="validate and summarize a serialized artifact")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BondTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOND
    except (OptimizationError, NotHermitianError, KAKError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CompileError, CircuitError, ProblemError, ClassifierError, mpslib.MPSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
