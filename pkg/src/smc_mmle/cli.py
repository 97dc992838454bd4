"""Config-driven experiment runner.

Subcommands:

* run      -- one algorithm on one model, writing trace.csv / particles.csv /
              summary.json per replication
* compare  -- several algorithms on identical data and seeds, writing the
              per-run files plus a combined comparison.csv
* oracle   -- named self-checks that compare sampler output against
              closed-form or brute-force references

Config files are INI text with [model], [algorithm] (or several
[algorithm.<label>] sections for compare), and [run] sections; see the
repository README for the key reference.  Replications use seed
base_seed + replication_index and may run in parallel when the
SMC_MMLE_THREADS environment variable is set (0 = one worker per CPU).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import em_gmm, run_ipla, run_pgd, saem_sbm, smc_mml
from .core import RngStream, RunTrace, StepSchedule
from .diagnostics import (
    adjusted_rand_index,
    enumerate_target,
    posterior_mode_labels,
    toy_exact_recursion,
)
from .errors import SmcMmleError, UnknownCheck
from .geometry import MirrorMap
from .mmle import (
    MmleConfig,
    exact_exponents,
    exact_log_target,
    joint_target,
    prior_target,
    run_mmle,
    smcs_log_target,
)
from .mmle import stop_rule as _theta_stop_rule
from .models import (
    BlrModel,
    GmmModel,
    MultimodalModel,
    SbmModel,
    ToyGaussianModel,
    load_edge_list,
    load_karate_club,
    sbm_theta_postprocess,
    toy_exact_mle,
)
from .smc_engine import KernelConfig, LogTarget

__all__ = [
    "ExperimentConfig",
    "RunTrace",
    "build_model",
    "make_runner",
    "stop_rule",
    "cmd_run",
    "cmd_compare",
    "cmd_oracle",
    "main",
]

DATA_STREAM_ID = 17  # reserved stream for simulated-data generation

MODEL_NAMES = ("toy", "gmm", "multimodal", "blr", "sbm")
ALGORITHM_NAMES = ("mirror", "mirror-exact", "em", "saem", "pgd", "ipla", "smc-mml")
ORACLE_CHECKS = ("toy-recursion", "sbm-enumeration", "rate-sweep", "ratio-identity")


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed experiment description: plain string key-value sections.

    algorithms holds (label, settings) pairs; cmd_run uses exactly one,
    cmd_compare iterates over all of them.
    """

    model: dict
    algorithms: tuple
    run: dict = field(default_factory=dict)

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_string(text)
        if "model" not in parser:
            raise ValueError("config needs a [model] section")
        algorithms = []
        for section in parser.sections():
            if section == "algorithm" or section.startswith("algorithm."):
                settings = dict(parser.items(section))
                label = section.partition(".")[2] or settings.get("name", "algorithm")
                algorithms.append((label, settings))
        if not algorithms:
            raise ValueError("config needs an [algorithm] section")
        labels = [label for label, _ in algorithms]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate algorithm labels: %s" % labels)
        run = dict(parser.items("run")) if "run" in parser else {}
        return cls(dict(parser.items("model")), tuple(algorithms), run)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_ini(fh.read())

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        parser["model"] = self.model
        for label, settings in self.algorithms:
            name = ("algorithm" if len(self.algorithms) == 1 and
                    label == settings.get("name", "algorithm")
                    else "algorithm.%s" % label)
            parser[name] = settings
        if self.run:
            parser["run"] = self.run
        out = []

        class _Sink:
            def write(self, chunk):
                out.append(chunk)

        parser.write(_Sink())
        return "".join(out)

    def echo(self) -> dict:
        return {"model": dict(self.model),
                "algorithms": [[label, dict(s)] for label, s in self.algorithms],
                "run": dict(self.run)}


def _floats(text: str) -> np.ndarray:
    return np.array([float(tok) for tok in text.replace(",", " ").split()])


def _get(cfg: dict, key: str, default=None, required=False):
    if key in cfg and cfg[key] != "":
        return cfg[key]
    if required:
        raise ValueError("missing required config key %r" % key)
    return default


# ---------------------------------------------------------------------------
# model construction


def build_model(model_cfg: dict):
    """Instantiate the configured model.

    Returns (model, info) where info may carry 'truth_theta' (simulation
    parameters) and 'truth_labels' (ground-truth block labels).
    """
    name = _get(model_cfg, "name", required=True)
    data_seed = int(_get(model_cfg, "data_seed", 2024))
    gen = RngStream(data_seed, DATA_STREAM_ID).generator()
    info = {"truth_theta": None, "truth_labels": None}

    if name == "toy":
        theta_true = float(_get(model_cfg, "theta_true", 1.0))
        d_x = int(_get(model_cfg, "d_x", 50))
        model = ToyGaussianModel.simulate(theta_true, d_x, gen)
        info["truth_theta"] = np.array([toy_exact_mle(model.y)])
    elif name == "gmm":
        theta_true = float(_get(model_cfg, "theta_true", 1.0))
        alpha = float(_get(model_cfg, "alpha", required=True))
        num_data = int(_get(model_cfg, "num_data", 1000))
        model = GmmModel.simulate(theta_true, alpha, num_data, gen)
        info["truth_theta"] = np.array([theta_true])
    elif name == "multimodal":
        data = _floats(_get(model_cfg, "data", "-20 1 2 3"))
        shape = float(_get(model_cfg, "shape", 0.525))
        rate = float(_get(model_cfg, "rate", 0.025))
        model = MultimodalModel(data, shape, rate)
    elif name == "blr":
        theta_true = _floats(_get(model_cfg, "theta_true", "0 0 0"))
        num_data = int(_get(model_cfg, "num_data", 900))
        model = BlrModel.simulate(theta_true, num_data, gen)
        info["truth_theta"] = theta_true
    elif name == "sbm":
        num_blocks = int(_get(model_cfg, "num_blocks", 2))
        graph = _get(model_cfg, "graph")
        if graph == "karate":
            adjacency, labels = load_karate_club()
            model = SbmModel(adjacency, num_blocks)
            info["truth_labels"] = labels
        elif graph is not None:
            model = SbmModel(load_edge_list(graph), num_blocks)
            labels_path = _get(model_cfg, "labels")
            if labels_path:
                info["truth_labels"] = np.loadtxt(labels_path, dtype=int).ravel()
        else:
            p_true = _floats(_get(model_cfg, "p_true", required=True))
            nu_flat = _floats(_get(model_cfg, "nu_true", required=True))
            d_x = int(_get(model_cfg, "d_x", required=True))
            nu = np.zeros((num_blocks, num_blocks))
            nu[np.triu_indices(num_blocks)] = nu_flat
            nu = nu + np.triu(nu, k=1).T
            model, labels = SbmModel.simulate(p_true, nu, d_x, gen)
            info["truth_labels"] = labels
            info["truth_theta"] = model.pack_theta(p_true, nu)
    else:
        raise ValueError("unknown model %r (expected one of %s)"
                         % (name, ", ".join(MODEL_NAMES)))
    return model, info


def default_theta0(model) -> np.ndarray:
    if isinstance(model, GmmModel):
        return np.array([-2.0])
    if isinstance(model, SbmModel):
        return np.full(model.d_theta, 0.3)
    return np.zeros(model.d_theta)


def _parse_theta0(algo_cfg: dict, model) -> np.ndarray:
    raw = _get(algo_cfg, "theta0")
    if raw is None:
        return default_theta0(model)
    theta0 = _floats(raw)
    if theta0.size == 1 and model.d_theta > 1:
        theta0 = np.full(model.d_theta, theta0[0])
    return theta0


def _mirror_map_for(algo_cfg: dict, model) -> MirrorMap:
    name = _get(algo_cfg, "mirror_map", "euclidean")
    if name == "euclidean":
        return MirrorMap.squared_norm()
    if name == "log-barrier":
        return MirrorMap.component_log_barrier()
    if name == "simplex":
        block = getattr(model, "num_blocks", model.d_theta)
        return MirrorMap.simplex_entropy(slice(0, int(block)))
    raise ValueError("unknown mirror_map %r" % name)


def _grad_scale(algo_cfg: dict, model):
    """Resolve the grad_scale setting for the mirror runner.

    "per-datum" averages the gradient over the latent coordinates.  "newton"
    divides by gamma times the cloud-averaged curvature of U in theta, so
    each parameter step lands on the minimizer of the quadratic
    theta-subproblem; that is the step the annealed landscape needs to steer
    the parameter out of the starting basin before the temperature drops,
    and it needs a model with an exact theta_curvature (mixture: one per
    datum; precision model: the total sampled precision).  "per-term" is the
    block-model analogue of "per-datum": occupancy gradients average over
    nodes, connectivity gradients over ordered node pairs.  Mixture and
    precision-model runs default to "newton", block-model runs to
    "per-term", everything else to 1.0.
    """
    raw = _get(algo_cfg, "grad_scale")
    if raw is None:
        if isinstance(model, (GmmModel, MultimodalModel)):
            raw = "newton"
        elif isinstance(model, SbmModel):
            raw = "per-term"
        else:
            raw = "1.0"
    if raw == "per-datum":
        return 1.0 / model.latent_space.dim
    if raw == "newton":
        return "newton"
    if raw == "per-term":
        if not isinstance(model, SbmModel):
            raise ValueError("grad_scale 'per-term' needs the sbm model")
        q = model.num_blocks
        scale = np.empty(model.d_theta)
        scale[:q] = 1.0 / model.d_x
        scale[q:] = 1.0 / (model.d_x * (model.d_x - 1))
        return scale
    return float(raw)


def make_runner(algo_cfg: dict, model, info: dict):
    """Build a callable rng -> RunTrace for one configured algorithm."""
    name = _get(algo_cfg, "name", required=True)
    theta0 = _parse_theta0(algo_cfg, model)
    iterations = int(_get(algo_cfg, "iterations", required=True))
    stop = _get(algo_cfg, "stop")
    stop = float(stop) if stop is not None else None

    if name in ("mirror", "mirror-exact"):
        gamma = float(_get(algo_cfg, "gamma", required=True))
        particles = int(_get(algo_cfg, "particles", required=True))
        if model.latent_space.is_discrete:
            kernel = KernelConfig.single_site(
                proposal=_get(algo_cfg, "proposal", "uniform"),
                sweeps=int(_get(algo_cfg, "sweeps", 1)))
        else:
            raw_scale = _get(algo_cfg, "step_scale")
            kernel = KernelConfig.random_walk(
                step_scale=float(raw_scale) if raw_scale is not None else None,
                mcmc_steps=int(_get(algo_cfg, "mcmc_steps", 1)))
        postprocess = None
        if isinstance(model, SbmModel) and _get(algo_cfg, "postprocess", "renormalize") != "none":
            q = model.num_blocks
            def postprocess(theta, q=q):
                return sbm_theta_postprocess(theta, q)
        config = MmleConfig(
            # schedules cannot be empty, so zero-iteration runs keep a
            # one-entry schedule and truncate through the horizon
            schedule=StepSchedule.constant(gamma, max(iterations, 1)),
            horizon=iterations,
            mirror_map=_mirror_map_for(algo_cfg, model),
            kernel=kernel,
            num_particles=particles,
            variant="exact" if name == "mirror-exact" else "fast",
            theta_grad_scale=_grad_scale(algo_cfg, model),
            theta_postprocess=postprocess,
            stop_threshold=stop,
        )
        return lambda rng: run_mmle(model, config, theta0, rng)

    if name == "em":
        if not isinstance(model, GmmModel):
            raise ValueError("algorithm 'em' needs the gmm model")
        return lambda rng: em_gmm(model.data, model.alpha, float(theta0[0]), iterations)

    if name == "saem":
        if not isinstance(model, SbmModel):
            raise ValueError("algorithm 'saem' needs the sbm model")
        return lambda rng: saem_sbm(model.adjacency, model.num_blocks, theta0,
                                    iterations, rng, stop_threshold=stop)

    if name in ("pgd", "ipla"):
        gamma = float(_get(algo_cfg, "gamma", required=True))
        particles = int(_get(algo_cfg, "particles", required=True))
        runner = run_ipla if name == "ipla" else run_pgd
        return lambda rng: runner(model, theta0, gamma, iterations, particles, rng)

    if name == "smc-mml":
        particles = int(_get(algo_cfg, "particles", required=True))
        lo, hi = _floats(_get(algo_cfg, "theta_box", "-30 30"))
        box = (np.full(model.d_theta, lo), np.full(model.d_theta, hi))
        scale = float(_get(algo_cfg, "theta_step_scale", 0.5))
        ladder = range(1, iterations + 1)
        return lambda rng: smc_mml(model, ladder, particles, rng, box,
                                   theta_step_scale=scale)

    raise ValueError("unknown algorithm %r (expected one of %s)"
                     % (name, ", ".join(ALGORITHM_NAMES)))


# ---------------------------------------------------------------------------
# output files


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return "%d" % value
    value = float(value)
    return "%.17g" % value


def write_trace_csv(path, trace: RunTrace) -> None:
    d = trace.thetas.shape[1]
    header = ["iter"] + ["theta_%d" % j for j in range(d)] + \
        ["ess", "accept", "elapsed_ns"]
    lines = [",".join(header)]
    for i in range(trace.thetas.shape[0]):
        row = [str(i)]
        row += [_fmt(v) for v in trace.thetas[i]]
        row += [_fmt(trace.ess[i]), _fmt(trace.accept[i]), str(int(trace.elapsed_ns[i]))]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_particles_csv(path, cloud) -> None:
    if cloud is None:
        Path(path).write_text("particle\n", encoding="utf-8")
        return
    d = cloud.positions.shape[1]
    header = ["particle"] + ["x_%d" % j for j in range(d)] + ["weight"]
    lines = [",".join(header)]
    weights = np.exp(cloud.log_weights)
    discrete = cloud.space.is_discrete
    for i in range(cloud.num_particles):
        row = [str(i)]
        if discrete:
            row += ["%d" % v for v in cloud.positions[i]]
        else:
            row += [_fmt(v) for v in cloud.positions[i]]
        row.append(_fmt(weights[i]))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _summary_dict(label: str, trace: RunTrace, seed: int, config: ExperimentConfig) -> dict:
    return {
        "algorithm": label,
        "seed": seed,
        "final_theta": [float(v) for v in trace.theta_final],
        "iterations_run": int(trace.thetas.shape[0] - 1),
        "ess_final": None if np.isnan(trace.ess[-1]) else float(trace.ess[-1]),
        "runtime_ns": int(trace.elapsed_ns.sum()),
        "metadata": {k: v for k, v in trace.metadata.items()
                     if isinstance(v, (str, int, float, bool, type(None), list))},
        "config": config.echo(),
    }


def write_summary_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------------------
# replication driving


def _sbm_equivalent_thetas(theta: np.ndarray, num_blocks: int):
    """All block-relabeled versions of a flattened (p, nu) parameter."""
    from itertools import permutations

    q = num_blocks
    triu = np.triu_indices(q)
    out = []
    p = theta[:q]
    nu = np.zeros((q, q))
    nu[triu] = theta[q:]
    nu = nu + np.triu(nu, k=1).T
    for perm in permutations(range(q)):
        perm = list(perm)
        nu_p = nu[np.ix_(perm, perm)]
        out.append(np.concatenate([p[perm], nu_p[triu]]))
    return out


def _mse_against_truth(theta: np.ndarray, truth: np.ndarray, model) -> float:
    """Mean squared error over truth components that are not NaN, minimized
    over block relabelings for block models."""
    mask = ~np.isnan(truth)
    candidates = (_sbm_equivalent_thetas(theta, model.num_blocks)
                  if isinstance(model, SbmModel) else [theta])
    return min(float(np.mean(np.square(c[mask] - truth[mask]))) for c in candidates)


def _replication_task(payload):
    """Run one (algorithm, replication) pair; used directly or in a worker."""
    config_echo, label, algo_cfg, rep, seed, out_dir = payload
    config = ExperimentConfig(config_echo["model"],
                              tuple((l, dict(s)) for l, s in config_echo["algorithms"]),
                              config_echo["run"])
    model, info = build_model(config.model)
    runner = make_runner(algo_cfg, model, info)
    trace = runner(RngStream(seed))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out / "trace.csv", trace)
    write_particles_csv(out / "particles.csv", trace.final_cloud)
    write_summary_json(out / "summary.json", _summary_dict(label, trace, seed, config))

    row = {
        "algorithm": label,
        "replication": rep,
        "seed": seed,
        "theta": [float(v) for v in trace.theta_final],
        "mse": "",
        "ari": "",
        "iterations": int(trace.thetas.shape[0] - 1),
        "runtime_ns": int(trace.elapsed_ns.sum()),
    }
    truth_raw = config.run.get("truth")
    truth = _floats(truth_raw) if truth_raw else info.get("truth_theta")
    if truth is not None and truth.size == trace.theta_final.size:
        row["mse"] = _mse_against_truth(trace.theta_final, np.asarray(truth, float),
                                        model)
    labels = info.get("truth_labels")
    if (labels is not None and trace.final_cloud is not None
            and trace.final_cloud.space.is_discrete):
        mode = posterior_mode_labels(trace.final_cloud)
        row["ari"] = adjusted_rand_index(mode, labels)
    return row


def _num_workers() -> int:
    raw = os.environ.get("SMC_MMLE_THREADS", "")
    if raw == "":
        return 1
    workers = int(raw)
    if workers == 0:
        return os.cpu_count() or 1
    return max(1, workers)


def _run_tasks(payloads):
    workers = _num_workers()
    if workers <= 1 or len(payloads) <= 1:
        return [_replication_task(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replication_task, payloads))


def _layout(base: Path, label: str, rep: int, reps: int, multi: bool) -> Path:
    path = base
    if multi:
        path = path / label
    if reps > 1:
        path = path / ("rep%03d" % rep)
    return path


def _drive(config: ExperimentConfig, out_dir: Path, multi: bool) -> list:
    base_seed = int(config.run.get("seed", 0))
    reps = int(config.run.get("replications", 1))
    echo = config.echo()
    payloads = []
    for label, algo_cfg in config.algorithms:
        for rep in range(reps):
            payloads.append((echo, label, algo_cfg, rep, base_seed + rep,
                             str(_layout(out_dir, label, rep, reps, multi))))
    return _run_tasks(payloads)


def cmd_run(config: ExperimentConfig, out_dir) -> int:
    """Run the single configured algorithm over its replications."""
    if len(config.algorithms) != 1:
        raise ValueError("run expects exactly one [algorithm] section; "
                         "use compare for several")
    out_dir = Path(out_dir)
    rows = _drive(config, out_dir, multi=False)
    reps = int(config.run.get("replications", 1))
    if reps > 1:
        thetas = np.array([row["theta"] for row in rows])
        write_summary_json(out_dir / "summary.json", {
            "algorithm": config.algorithms[0][0],
            "replications": reps,
            "final_theta_mean": [float(v) for v in thetas.mean(axis=0)],
            "final_theta_variance": [float(v) for v in thetas.var(axis=0, ddof=1)],
            "config": config.echo(),
        })
    return 0


def cmd_compare(config: ExperimentConfig, out_dir) -> int:
    """Run every configured algorithm on identical data and seeds."""
    out_dir = Path(out_dir)
    rows = _drive(config, out_dir, multi=True)
    d = max(len(row["theta"]) for row in rows)
    header = (["algorithm", "replication", "seed"]
              + ["theta_%d" % j for j in range(d)]
              + ["mse", "ari", "iterations", "runtime_ns"])
    lines = [",".join(header)]
    for row in rows:
        cells = [row["algorithm"], str(row["replication"]), str(row["seed"])]
        theta = row["theta"]
        cells += [_fmt(v) for v in theta] + [""] * (d - len(theta))
        cells.append(_fmt(row["mse"]) if row["mse"] != "" else "")
        cells.append(_fmt(row["ari"]) if row["ari"] != "" else "")
        cells += [str(row["iterations"]), str(row["runtime_ns"])]
        lines.append(",".join(cells))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "comparison.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def stop_rule(trace: RunTrace, threshold: float = 1e-7) -> bool:
    """True when the last parameter move of a trace is below the threshold:
    max_i (theta_n(i) - theta_{n-1}(i))^2 < threshold, strictly."""
    if trace.thetas.shape[0] < 2:
        raise ValueError("stop rule needs at least two trace rows")
    return _theta_stop_rule(trace.thetas[-2], trace.thetas[-1], threshold)


# ---------------------------------------------------------------------------
# oracle checks


def oracle_toy_recursion():
    """Particle run vs the deterministic recursion on the toy model."""
    model = ToyGaussianModel.simulate(1.0, 10, RngStream(2024, DATA_STREAM_ID))
    t, gamma, n = 200, 0.01, 10_000
    schedule = StepSchedule.constant(gamma, t)
    config = MmleConfig(schedule, MirrorMap.squared_norm(),
                        KernelConfig.random_walk(mcmc_steps=2),
                        num_particles=n, variant="exact")
    trace = run_mmle(model, config, 0.0, RngStream(123))
    ref, _ = toy_exact_recursion(0.0, schedule, model, t)
    gap = float(np.max(np.abs(trace.thetas[:, 0] - ref)))
    return gap < 0.05, ["max |theta_n(particles) - theta_n(recursion)| = %.6f "
                        "(bound 0.05, N=%d, T=%d)" % (gap, n, t)]


def oracle_sbm_enumeration():
    """Particle law vs exhaustive enumeration on a 16-state block model."""
    adjacency = np.zeros((4, 4), dtype=int)
    for i, j in ((0, 1), (2, 3)):
        adjacency[i, j] = adjacency[j, i] = 1
    model = SbmModel(adjacency, 2)
    t, n = 10, 10_000
    schedule = StepSchedule.constant(0.1, t)
    # fixed parameter path drifting from a vague to a structured setting
    start = model.pack_theta([0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]])
    end = model.pack_theta([0.6, 0.4], [[0.8, 0.1], [0.1, 0.8]])
    frozen = np.linspace(0.0, 1.0, t + 1)[:, None] * (end - start) + start
    config = MmleConfig(schedule, MirrorMap.component_log_barrier(),
                        KernelConfig.single_site(sweeps=2),
                        num_particles=n, variant="fast")
    checkpoints = {}

    def collect(n_iter, theta, cloud):
        if n_iter in (1, 5, 10):
            checkpoints[n_iter] = cloud

    run_mmle(model, config, frozen[0], RngStream(7), frozen_history=frozen,
             on_iteration=collect)
    lines = []
    ok = True
    for n_iter, cloud in sorted(checkpoints.items()):
        target = smcs_log_target(n_iter, frozen[n_iter - 1], schedule, model)
        table = enumerate_target(target, model.latent_space)
        tv = table.total_variation(cloud)
        ok = ok and tv < 0.05
        lines.append("n=%d: total variation %.4f (bound 0.05)" % (n_iter, tv))
    return ok, lines


def oracle_rate_sweep():
    """RMSE of theta_T against the recursion limit, swept over particle counts."""
    model = ToyGaussianModel.simulate(1.0, 10, RngStream(2024, DATA_STREAM_ID))
    t, gamma = 150, 0.05
    schedule = StepSchedule.constant(gamma, t)
    ref, _ = toy_exact_recursion(0.0, schedule, model, t)
    sizes = (25, 100, 400)
    seeds = 50
    rmse = []
    for n in sizes:
        config = MmleConfig(schedule, MirrorMap.squared_norm(),
                            KernelConfig.random_walk(), num_particles=n,
                            variant="exact")
        err = [run_mmle(model, config, 0.0, RngStream(1000 + s)).theta_final[0]
               - ref[-1] for s in range(seeds)]
        rmse.append(float(np.sqrt(np.mean(np.square(err)))))
    slope = float(np.polyfit(np.log(sizes), np.log(rmse), 1)[0])
    ok = -0.7 < slope < -0.3
    return ok, ["rmse at N=%s: %s" % (list(sizes), ["%.5f" % r for r in rmse]),
                "log-log slope %.3f (want -0.5 +/- 0.2)" % slope]


def oracle_ratio_identity():
    """The two target families differ by a history sum, constant in x."""
    gen = np.random.default_rng(3)
    model = ToyGaussianModel.simulate(0.5, 3, RngStream(2024, DATA_STREAM_ID))
    n = 6
    schedule = StepSchedule.constant(0.1, n)
    history = [np.array([v]) for v in gen.normal(0.0, 1.0, n)]
    xs = gen.normal(0.0, 2.0, (100, 3))
    exact = exact_log_target(n, history, schedule, model)(xs)
    fast = smcs_log_target(n, history[n - 1], schedule, model)(xs)
    _, a = exact_exponents(schedule, n)
    correction = np.zeros(100)
    newest = joint_target(model, history[n - 1])(xs)
    for k in range(n - 1):
        correction += a[k] * (joint_target(model, history[k])(xs) - newest)
    residual = exact - fast - correction
    spread = float(residual.max() - residual.min())
    return spread < 1e-9, ["residual range over 100 points: %.3e (bound 1e-9)"
                           % spread]


_ORACLES = {
    "toy-recursion": oracle_toy_recursion,
    "sbm-enumeration": oracle_sbm_enumeration,
    "rate-sweep": oracle_rate_sweep,
    "ratio-identity": oracle_ratio_identity,
}


def cmd_oracle(check: str) -> int:
    """Run one named self-check; prints its measurements, 0 exit on pass."""
    if check not in _ORACLES:
        raise UnknownCheck("unknown check %r (expected one of %s)"
                           % (check, ", ".join(ORACLE_CHECKS)))
    ok, lines = _ORACLES[check]()
    for line in lines:
        print("  " + line)
    print("%s: %s" % (check, "PASS" if ok else "FAIL"))
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# entry point


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    run = dict(config.run)
    if args.seed is not None:
        run["seed"] = str(args.seed)
    if args.reps is not None:
        run["replications"] = str(args.reps)
    if args.out is not None:
        run["output"] = args.out
    return ExperimentConfig(config.model, config.algorithms, run)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="smc-mmle",
        description="Estimation runs, algorithm comparisons, and self-checks "
                    "for latent variable models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run one configured algorithm"),
                            ("compare", "run several algorithms on shared data")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--seed", type=int, default=None, help="override base seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--reps", type=int, default=None,
                       help="override replication count")
    p = sub.add_parser("oracle", help="run a named self-check")
    p.add_argument("check", help="one of: %s" % ", ".join(ORACLE_CHECKS))
    args = parser.parse_args(argv)

    try:
        if args.command == "oracle":
            return cmd_oracle(args.check)
        config = _apply_overrides(ExperimentConfig.from_file(args.config), args)
        out = config.run.get("output")
        if not out:
            raise ValueError("no output directory: set [run] output or pass --out")
        if args.command == "run":
            return cmd_run(config, out)
        return cmd_compare(config, out)
    except (ValueError, OSError, configparser.Error) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except SmcMmleError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
