"""Experiment orchestration: MPS, random and identity initializations compared.

Every arm of an experiment trains the same brick-wall circuit topology with
the same optimizer settings; arms differ only in their starting angles.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mps as mpslib
from .circuit import BCEMeasure, Circuit, CircuitObjective, EnergyMeasure, Simulator, encode_inputs
from .compiler import approx_compile_chi4, init_brickwall, mps_to_staircase
from .compiler.brickwall import OFFDIAG_KINDS, build_brickwall, required_depth
from .compiler.staircase import CompileError, PlacedGate
from .mpsml import MPSClassifier, TrainingConfig, decision_function, fit
from .optimize import OptimizerConfig, RunLog, minimize
from .pauli import PauliSum
from .problems import (
    LabeledDataset,
    brute_force_maxcut,
    default_graph,
    exact_ground,
    h2_hamiltonian_path,
    load_delimited_dataset,
    load_graph,
    load_pauli_hamiltonian,
    maxcut_hamiltonian,
    pauli_sum_two_site_bonds,
    pca_fit,
    pca_project,
    product_teacher_dataset,
    rescale_to_angles,
    tfim_hamiltonian,
)

PROBLEMS = ("maxcut", "hamiltonian-file", "tfim", "classify")
ANSATZE = ("brickwall-kak", "brickwall-ry-crx")
INITS = ("mps", "random", "identity")
METHODS = ("tebd", "dmrg", "ml")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: str = "maxcut"
    ansatz: str | None = None  # default: ry-crx padding for maxcut, KAK otherwise
    depth: int = 6
    n_qubits: int | None = None
    inits: list[str] = field(default_factory=lambda: list(INITS))
    seeds: list[int] = field(default_factory=lambda: [0])
    output: str | None = None
    workers: int = 1
    # problem inputs
    graph: str | None = None
    objective: str = "maximize-cut"
    hamiltonian: str | None = None
    tfim_j: float = 1.0
    tfim_g: float = 1.0
    # MPS pretraining
    mps_method: str | None = None
    mps_chi: int = 2
    mps_dtau: float = 1e-3
    mps_steps: int = 30
    mps_init_angle: float = math.pi / 4
    mps_sweeps: int = 10
    mps_epochs: int = 5
    mps_learning_rate: float = 0.1
    mps_batch_size: int | None = None
    compile_iterations: int = 200
    # circuit optimizer
    optimizer: str | None = None
    learning_rate: float | None = None
    decay: float = 0.01
    max_iter: int = 500
    gtol: float = 1e-8
    ftol: float = 0.0
    convergence_tol: float | None = None
    # classification data
    dataset: str | None = None
    dataset_samples: int = 200
    dataset_seed: int = 0
    dataset_margin: float = 0.05
    pca: str = "none"
    epochs: int = 5
    batch_size: int | None = 20
    accuracy_target: float = 0.95

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}")
        if self.ansatz is not None and self.ansatz not in ANSATZE:
            raise ConfigError(f"ansatz must be one of {ANSATZE}")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        bad = [i for i in self.inits if i not in INITS]
        if bad or not self.inits:
            raise ConfigError(f"inits must be a non-empty subset of {INITS}")
        if self.objective not in ("maximize-cut", "minimize-eq1"):
            raise ConfigError("objective must be maximize-cut or minimize-eq1")
        if self.mps_method is not None and self.mps_method not in METHODS:
            raise ConfigError(f"mps_method must be one of {METHODS}")
        if self.pca not in ("none", "centered", "uncentered"):
            raise ConfigError("pca must be none, centered or uncentered")
        if self.mps_chi < 1 or self.mps_chi > 4:
            raise ConfigError("mps_chi must lie in 1..4")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    # resolved defaults ---------------------------------------------------

    @property
    def offdiag_kind(self) -> str:
        ansatz = self.ansatz or ("brickwall-ry-crx" if self.problem == "maxcut" else "brickwall-kak")
        return "ry-crx" if ansatz == "brickwall-ry-crx" else "full-KAK"

    @property
    def method(self) -> str:
        if self.mps_method:
            return self.mps_method
        return {"maxcut": "tebd", "classify": "ml"}.get(self.problem, "dmrg")

    @property
    def optimizer_kind(self) -> str:
        if self.optimizer:
            return self.optimizer
        return {"maxcut": "gd-decay", "classify": "adam"}.get(self.problem, "bfgs")

    @property
    def resolved_learning_rate(self) -> float | None:
        if self.learning_rate is not None:
            return self.learning_rate
        return {"maxcut": 0.1, "classify": 0.01}.get(self.problem)

    def optimizer_config(self, seed: int) -> OptimizerConfig:
        return OptimizerConfig(
            kind=self.optimizer_kind, learning_rate=self.resolved_learning_rate, decay=self.decay,
            max_iter=self.max_iter, gtol=self.gtol, ftol=self.ftol, seed=seed,
        )

    @property
    def tolerance(self) -> float:
        if self.convergence_tol is not None:
            return self.convergence_tol
        return 0.02 if self.problem == "classify" else 1e-6

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(doc)


@dataclass
class RunResult:
    init: str
    seed: int
    log: RunLog
    initial_objective: float
    final_objective: float
    best_objective: float
    fevals_to_convergence: int
    steps_to_convergence: int
    topology_hash: str
    optimizer_hash: str
    extra: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "init": self.init,
            "seed": self.seed,
            "steps": len(self.log.iterations),
            "total_fevals": int(self.log.iterations[-1].fevals),
            "initial_objective": self.initial_objective,
            "final_objective": self.final_objective,
            "best_objective": self.best_objective,
            "fevals_to_convergence": self.fevals_to_convergence,
            "steps_to_convergence": self.steps_to_convergence,
            "stop_reason": self.log.stop_reason,
            "topology_hash": self.topology_hash,
            "optimizer_hash": self.optimizer_hash,
            **self.extra,
        }


@dataclass
class ComparisonReport:
    config: ExperimentConfig
    runs: list[RunResult]
    reference: dict = field(default_factory=dict)

    def by_init(self, init: str) -> list[RunResult]:
        return [r for r in self.runs if r.init == init]

    def run(self, init: str, seed: int) -> RunResult:
        return next(r for r in self.runs if r.init == init and r.seed == seed)

    def aggregates(self) -> dict:
        out = {}
        for init in self.config.inits:
            rs = self.by_init(init)
            if not rs:
                continue
            agg = {}
            for key in ("final_objective", "initial_objective", "fevals_to_convergence"):
                vals = [getattr(r, key) for r in rs]
                agg[key] = {"mean": float(np.mean(vals)), "min": float(np.min(vals)), "max": float(np.max(vals))}
            out[init] = agg
        return out

    def win_fraction(self, a: str = "mps", b: str = "random", key: str = "fevals_to_convergence") -> float | None:
        """Fraction of matched seeds where arm ``a`` has a strictly smaller ``key``."""
        seeds = [s for s in self.config.seeds if any(r.seed == s for r in self.by_init(a))
                 and any(r.seed == s for r in self.by_init(b))]
        if not seeds:
            return None
        wins = sum(getattr(self.run(a, s), key) < getattr(self.run(b, s), key) for s in seeds)
        return wins / len(seeds)


def convergence_point(log: RunLog, tol: float) -> tuple[int, int]:
    """``(step, fevals)`` of the first entry within ``tol`` of the best objective."""
    objs = log.objectives
    best = float(np.min(objs))
    k = int(np.argmax(objs <= best + tol))
    e = log.iterations[k]
    return e.step, e.fevals


def _hash(obj) -> str:
    return hashlib.sha256(repr(obj).encode()).hexdigest()[:16]


# --- problem setup ------------------------------------------------------


@dataclass
class EnergyProblem:
    n: int
    hamiltonian: PauliSum
    sign: float
    bonds: list | None
    reference: dict


def energy_problem(cfg: ExperimentConfig) -> EnergyProblem:
    if cfg.problem == "maxcut":
        g = load_graph(cfg.graph) if cfg.graph else default_graph()
        h = maxcut_hamiltonian(g)
        sign = -1.0 if cfg.objective == "maximize-cut" else 1.0
        bits, cut = brute_force_maxcut(g)
        bonds = []
        for u, v, w in g.edges:
            # two-site form of sign * w (1 - Z_u Z_v)
            term = sign * w * (np.eye(4) - np.diag([1.0, -1.0, -1.0, 1.0]))
            bonds.append((u, v, term))
        opt = -2 * cut if sign < 0 else 0.0
        return EnergyProblem(g.n, h, sign, bonds, {"optimal_cut": cut, "optimal_bitstring": bits,
                                                   "optimal_objective": opt})
    if cfg.problem == "tfim":
        n = cfg.n_qubits or 8
        h, bonds = tfim_hamiltonian(n, cfg.tfim_j, cfg.tfim_g)
        e, _ = exact_ground(h)
        return EnergyProblem(n, h, 1.0, bonds, {"exact_energy": e, "optimal_objective": e})
    if cfg.problem == "hamiltonian-file":
        path = cfg.hamiltonian or str(h2_hamiltonian_path())
        h = load_pauli_hamiltonian(path, cfg.n_qubits)
        e, _ = exact_ground(h)
        return EnergyProblem(h.n, h, 1.0, None, {"exact_energy": e, "optimal_objective": e})
    raise ConfigError(f"{cfg.problem} is not an energy problem")


def pretrain_energy_mps(cfg: ExperimentConfig, prob: EnergyProblem, seed: int) -> mpslib.MPS:
    """Classical training stage; returns a left-canonical MPS."""
    method = cfg.method
    if method == "tebd":
        bonds = prob.bonds
        if bonds is None:
            bonds, _ = pauli_sum_two_site_bonds(prob.hamiltonian.scaled(prob.sign))
        start = mpslib.product_state(prob.n, np.full(prob.n, cfg.mps_init_angle))
        s = mpslib.tebd_imaginary(start, bonds, cfg.mps_dtau, cfg.mps_steps, cfg.mps_chi)
        return mpslib.canonicalize(s, "left")
    if method == "dmrg":
        h = prob.hamiltonian.scaled(prob.sign)
        s, _ = mpslib.dmrg_ground_state(h, prob.n, cfg.mps_chi, cfg.mps_sweeps, seed)
        return s
    raise ConfigError(f"method {method!r} does not apply to energy problems")


def compile_mps(s: mpslib.MPS, depth: int, offdiag_kind: str, *, chi: int = 2, adjoint: bool = False,
                iterations: int = 200, seed: int = 0) -> tuple[Circuit, float]:
    """Canonical MPS to identity-padded brick wall; returns the circuit and compilation fidelity.

    ``chi`` selects the layout: one staircase diagonal for ``chi <= 2`` and
    two fitted diagonals otherwise, regardless of the bonds ``s`` actually has.
    """
    if chi <= 2:
        diag = mps_to_staircase(s, adjoint=adjoint)
        fid = 1.0
    else:
        diag = approx_compile_chi4(s, iterations, seed).as_adjoint(adjoint)
        fid = diag.fidelity
    return init_brickwall(diag, depth, offdiag_kind), fid


def compiled_positions(n: int, chi: int, adjoint: bool) -> list[tuple[int, int]]:
    """Brick-wall positions the compiler fills for a given bond dimension."""
    pos = [(n - 2 - i, i) for i in range(n - 1)]
    if chi > 2:
        pos += [(n - 4 - i, i) for i in range(max(n - 3, 0))]
    if adjoint:
        pos = [(n - 2 - t, i) for t, i in pos]
    return sorted(pos)


def shared_topology(cfg: ExperimentConfig, n: int, adjoint: bool) -> Circuit:
    if cfg.depth < required_depth(n):
        raise ConfigError(
            f"depth {cfg.depth} cannot hold the compiled staircase for {n} qubits (needs >= {required_depth(n)})"
        )
    eye = np.eye(4, dtype=complex)
    placed = [PlacedGate(t, i, eye) for t, i in compiled_positions(n, cfg.mps_chi, adjoint)]
    return build_brickwall(n, cfg.depth, cfg.offdiag_kind, placed, adjoint=adjoint)


def initial_parameters(init: str, topology: Circuit, seed: int, compiled: Circuit | None) -> np.ndarray:
    if init == "identity":
        return np.zeros(topology.num_params)
    if init == "random":
        rng = np.random.default_rng(seed)
        return rng.uniform(-math.pi, math.pi, size=topology.num_params)
    if compiled is None:
        raise ConfigError("the mps arm needs a compiled circuit")
    if compiled.topology() != topology.topology():
        raise CompileError("compiled circuit topology differs from the shared topology")
    return compiled.initial_params()


# --- energy experiments -------------------------------------------------


def _energy_run(cfg: ExperimentConfig, init: str, seed: int) -> RunResult:
    prob = energy_problem(cfg)
    topo = shared_topology(cfg, prob.n, adjoint=False)
    extra = {}
    compiled = None
    if init == "mps":
        s = pretrain_energy_mps(cfg, prob, seed)
        compiled, fid = compile_mps(s, cfg.depth, cfg.offdiag_kind, chi=cfg.mps_chi, iterations=cfg.compile_iterations, seed=seed)
        extra["mps_objective"] = prob.sign * mpslib.expectation(s, prob.hamiltonian)
        extra["compile_fidelity"] = fid
        extra["mps_bond_dims"] = s.bond_dims
    x0 = initial_parameters(init, topo, seed, compiled)
    obj = CircuitObjective(topo, EnergyMeasure(prob.hamiltonian, prob.sign))
    opt = cfg.optimizer_config(seed)
    x, log = minimize(obj, x0, opt)
    step, fev = convergence_point(log, cfg.tolerance)
    objs = log.objectives
    if cfg.problem == "maxcut" and prob.sign < 0:
        extra["initial_cut"] = -float(objs[0]) / 2
        extra["final_cut"] = -float(objs[-1]) / 2
        extra["best_cut"] = -float(objs.min()) / 2
    if "exact_energy" in prob.reference:
        e = prob.reference["exact_energy"]
        extra["final_error"] = float(objs.min()) - e
    extra["final_params_hash"] = _hash(np.round(x, 12).tolist())
    return RunResult(
        init, seed, log, float(objs[0]), float(objs[-1]), float(objs.min()), fev, step,
        _hash(topo.topology()), _hash(sorted(opt.to_dict().items())), extra,
    )


def _run_task(args):
    kind, cfg_dict, init, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return _energy_run(cfg, init, seed) if kind == "energy" else _classifier_run(cfg, init, seed)


def _run_all(cfg: ExperimentConfig, kind: str) -> list[RunResult]:
    tasks = [(kind, cfg.to_dict(), init, seed) for init in cfg.inits for seed in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_run_task, tasks))
    return [_run_task(t) for t in tasks]


def run_energy_experiment(cfg: ExperimentConfig) -> ComparisonReport:
    if cfg.problem not in ("maxcut", "hamiltonian-file", "tfim"):
        raise ConfigError("run_energy_experiment needs an energy problem")
    prob = energy_problem(cfg)
    shared_topology(cfg, prob.n, adjoint=False)  # fail early on infeasible depth
    return ComparisonReport(cfg, _run_all(cfg, "energy"), dict(prob.reference))


# --- classification -----------------------------------------------------


def classification_data(cfg: ExperimentConfig) -> LabeledDataset:
    n = cfg.n_qubits or cfg.depth
    if cfg.dataset:
        data = load_delimited_dataset(cfg.dataset)
    else:
        data, _ = product_teacher_dataset(n, cfg.dataset_samples, cfg.dataset_seed, cfg.dataset_margin)
    if cfg.pca != "none":
        model = pca_fit(data.samples, center=cfg.pca == "centered")
        feats = rescale_to_angles(pca_project(model, data.samples, n))
        return LabeledDataset(feats, data.labels)
    if data.n_features != n:
        raise ConfigError(f"dataset has {data.n_features} features but the circuit has {n} qubits; enable pca")
    return data


class BatchedBCEObjective(CircuitObjective):
    """Full-data BCE for ``value``; gradients cycle through seeded mini-batches."""

    def __init__(self, circuit: Circuit, data: LabeledDataset, batch_size: int | None, seed: int,
                 epsilon: float = 1e-7):
        inputs = encode_inputs(2.0 * data.samples)
        super().__init__(circuit, BCEMeasure(data.labels, epsilon), inputs)
        self.all_inputs = inputs
        self.labels = data.labels.astype(float)
        self.epsilon = epsilon
        self.batch_size = len(data) if batch_size is None else min(batch_size, len(data))
        self.rng = np.random.default_rng(seed)
        self._queue: list[np.ndarray] = []

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(len(self.labels) / self.batch_size)

    def value(self, params) -> float:
        self.inputs, self.measure = self.all_inputs, BCEMeasure(self.labels, self.epsilon)
        return super().value(params)

    def gradient(self, params) -> np.ndarray:
        if not self._queue:
            order = self.rng.permutation(len(self.labels))
            self._queue = [order[i:i + self.batch_size] for i in range(0, len(order), self.batch_size)]
        idx = self._queue.pop(0)
        self.inputs, self.measure = self.all_inputs[idx], BCEMeasure(self.labels[idx], self.epsilon)
        try:
            return super().gradient(params)
        finally:
            self.inputs, self.measure = self.all_inputs, BCEMeasure(self.labels, self.epsilon)


def circuit_decisions(circuit: Circuit, params: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """All-zeros probabilities with inputs encoded as ``ry(2 x)``."""
    sim = Simulator(circuit)
    states = sim.run(np.asarray(params)[None], encode_inputs(2.0 * samples))
    return np.abs(states[0, :, 0]) ** 2


def pretrain_classifier(cfg: ExperimentConfig, data: LabeledDataset, seed: int) -> MPSClassifier:
    tc = TrainingConfig(learning_rate=cfg.mps_learning_rate, epochs=cfg.mps_epochs,
                        batch_size=cfg.mps_batch_size, seed=seed, chi_max=min(cfg.mps_chi, 2))
    return fit(MPSClassifier.initialize(data.n_features, tc), data)


def _classifier_run(cfg: ExperimentConfig, init: str, seed: int) -> RunResult:
    data = classification_data(cfg)
    n = data.n_features
    topo = shared_topology(dataclasses.replace(cfg, mps_chi=min(cfg.mps_chi, 2)), n, adjoint=True)
    extra = {}
    compiled = None
    if init == "mps":
        clf = pretrain_classifier(cfg, data, seed)
        compiled, _ = compile_mps(mpslib.canonicalize(clf.state, "left"), cfg.depth, cfg.offdiag_kind, adjoint=True)
        f_mps = decision_function(clf, data.samples)
        f_circ = circuit_decisions(compiled, compiled.initial_params(), data.samples)
        extra["mps_accuracy"] = float(np.mean((f_mps >= 0.5) == data.labels))
        extra["step0_max_decision_gap"] = float(np.max(np.abs(f_mps - f_circ)))
        extra["step0_prediction_agreement"] = float(np.mean((f_mps >= 0.5) == (f_circ >= 0.5)))
    x0 = initial_parameters(init, topo, seed, compiled)
    obj = BatchedBCEObjective(topo, data, cfg.batch_size, seed)
    per_epoch = obj.batches_per_epoch
    opt = dataclasses.replace(cfg.optimizer_config(seed), max_iter=cfg.epochs * per_epoch, gtol=0.0, ftol=0.0)
    accs = []

    def on_step(step, x):
        if step % per_epoch == 0:
            f = circuit_decisions(topo, x, data.samples)
            accs.append(float(np.mean((f >= 0.5) == data.labels)))

    x, log = minimize(obj, x0, opt, callback=on_step)
    epoch_losses = [float(log.iterations[e * per_epoch].objective) for e in range(len(accs))]
    reached = [e for e, a in enumerate(accs) if a >= cfg.accuracy_target]
    extra["epoch_accuracy"] = accs
    extra["epoch_loss"] = epoch_losses
    extra["epochs_to_target"] = reached[0] if reached else None
    step, fev = convergence_point(log, cfg.tolerance)
    objs = log.objectives
    return RunResult(
        init, seed, log, float(objs[0]), float(objs[-1]), float(objs.min()), fev, step,
        _hash(topo.topology()), _hash(sorted(opt.to_dict().items())), extra,
    )


def run_classifier_experiment(cfg: ExperimentConfig) -> ComparisonReport:
    if cfg.problem != "classify":
        raise ConfigError("run_classifier_experiment needs problem 'classify'")
    data = classification_data(cfg)
    shared_topology(cfg, data.n_features, adjoint=True)
    return ComparisonReport(cfg, _run_all(cfg, "classifier"), {"samples": len(data), "features": data.n_features})


def run_experiment(cfg: ExperimentConfig) -> ComparisonReport:
    return run_classifier_experiment(cfg) if cfg.problem == "classify" else run_energy_experiment(cfg)


# --- output -------------------------------------------------------------


def report_summary(r: ComparisonReport) -> dict:
    return {
        "config": r.config.to_dict(),
        "reference": r.reference,
        "runs": [run.summary() for run in r.runs],
        "aggregates": r.aggregates(),
        "win_fraction_mps_vs_random": r.win_fraction("mps", "random"),
    }


def emit_report(r: ComparisonReport, directory) -> list[Path]:
    """Write one log per run, ``summary.json`` and ``long.csv``; returns the paths."""
    if not r.config.seeds or not r.runs:
        raise ConfigError("nothing to write: the report has no runs")
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for run in r.runs:
        p = out / f"log_{run.init}_seed{run.seed}.csv"
        p.write_text(run.log.to_csv())
        paths.append(p)
    summary = out / "summary.json"
    summary.write_text(json.dumps(report_summary(r), indent=2, sort_keys=True) + "\n")
    paths.append(summary)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["init", "seed", "step", "objective"])
    for run in r.runs:
        for e in run.log.iterations:
            w.writerow([run.init, run.seed, e.step, repr(float(e.objective))])
    long = out / "long.csv"
    long.write_text(buf.getvalue())
    paths.append(long)
    return paths
