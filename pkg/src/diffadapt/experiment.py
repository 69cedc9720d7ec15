"""Monte Carlo experiments: fixed assignments, runs, aggregation and output files.

Everything that the figures keep fixed across runs (network, model
coefficients, noise variances, step sizes, dictionaries, feature maps) is
drawn once from the master seed. Runs differ only in their input, noise and
label streams. Runs can execute in worker processes; results are always
folded together in run-index order, so the output does not depend on the
degree of parallelism.
"""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import datagen as dg
from . import features as ft
from . import filters as fl
from . import metrics
from . import topology as tp
from .config import ALGORITHMS, ConfigError, to_config_text
from .diffusion import Protocol, simulate
from .seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass
class Setup:
    network: tp.Network
    mixing: tp.MixingMatrix
    task_weights: tp.TaskWeights
    source: object
    step_sizes: np.ndarray
    dictionaries: dict
    algorithms: dict  # label -> (filter, protocol)


def _network(cfg):
    if cfg.edges is not None:
        return tp.Network(cfg.n_agents, cfg.edges)
    return tp.generate_random_connected(cfg.n_agents, cfg.edge_probability, derive_seed(cfg.master_seed, "network"))


def _mixing(cfg, net):
    if cfg.mixing == "identity":
        return tp.identity_mixing(net.n_agents)
    if cfg.mixing == "file":
        try:
            a = tp.MixingMatrix.from_csv(cfg.mixing_file)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"mixing_file: {exc}") from None
        a.check_support(net)
        return a
    return tp.max_degree_weights(net)


def _source(cfg):
    seed = derive_seed(cfg.master_seed, "model")
    n, m = cfg.n_agents, cfg.input_dim
    if cfg.stream == "multitask_nonlinear":
        src = dg.draw_multitask_model(n, seed, cfg.noise_var_max)
        if cfg.sigma2 is not None:
            src = dg.MultitaskNonlinearModel(src.a, src.b, src.w_local, cfg.sigma2)
        return src
    if cfg.stream in ("linear", "wiener"):
        if cfg.stream == "linear":
            src = dg.draw_linear_model(n, m, seed, cfg.shared_model, cfg.noise_var_max)
        else:
            src = dg.draw_wiener_model(n, m, seed, cfg.nonlinearity, cfg.shared_model, cfg.noise_var_max)
        w = src.w if cfg.weights is None else np.array(cfg.weights, dtype=float)
        s2 = src.sigma2 if cfg.sigma2 is None else np.array(cfg.sigma2, dtype=float)
        if cfg.stream == "linear":
            return dg.LinearModel(w, s2)
        return dg.WienerModel(w, cfg.nonlinearity, s2)
    if cfg.stream == "classification":
        return dg.draw_classification_stream(m, seed, cfg.flip_probability)
    try:
        data = dg.load_csv_stream(cfg.csv_path, cfg.label_column)
    except OSError as exc:
        raise ConfigError(f"csv_path: {exc}") from None
    if data.input_dim != cfg.input_dim:
        raise ConfigError(f"input_dim: csv file has {data.input_dim} feature columns, config says {cfg.input_dim}")
    return data


def _step_sizes(cfg):
    if cfg.step_policy == "constant":
        return np.full(cfg.n_agents, float(cfg.step_value))
    if cfg.step_policy == "list":
        return np.array(cfg.step_values, dtype=float)
    return dg.draw_step_sizes(cfg.n_agents, derive_seed(cfg.master_seed, "step_sizes"),
                              cfg.step_low, cfg.step_high, cfg.step_floor)


def _dictionary(cfg, source, size):
    if cfg.dictionary_source == "first_samples":
        # first inputs of run 0, taken slot by slot across agents
        slots = -(-size // cfg.n_agents)
        U, _ = dg.generate_run(source, cfg.n_agents, slots, cfg.master_seed, 0)
        return ft.Dictionary(U.reshape(-1, U.shape[-1])[:size])
    return ft.build_dictionary(size, cfg.input_dim, derive_seed(cfg.master_seed, "dictionary"))


def build_setup(cfg):
    """Draw every fixed assignment of an experiment from its master seed."""
    cfg.validate()
    net = _network(cfg)
    mixing = _mixing(cfg, net)
    rho = tp.uniform_task_weights(net) if any(ALGORITHMS[a][1] == "multitask" for a in cfg.algorithms) else None
    source = _source(cfg)
    mu = _step_sizes(cfg)
    kern = ft.GaussianKernel(cfg.kernel_gamma)
    dictionaries = {}
    algos = {}
    for name in cfg.algorithms:
        kind, proto = ALGORITHMS[name]
        if proto == "atc":
            protocol = Protocol("atc", mixing=mixing)
        elif proto == "identity":
            protocol = Protocol("atc", mixing=tp.identity_mixing(net.n_agents))
        elif proto == "multitask":
            protocol = Protocol("multitask", task_weights=rho, eta=cfg.eta)
        elif proto == "cta_saf":
            protocol = Protocol("cta_saf", mixing=mixing)
        else:
            protocol = Protocol("non_cooperative")

        if kind == "klms":
            for size in cfg.dictionary_sizes:
                if size not in dictionaries:
                    dictionaries[size] = _dictionary(cfg, source, size)
                label = name if len(cfg.dictionary_sizes) == 1 else f"{name}[D={size}]"
                algos[label] = (fl.KLMS(kern, dictionaries[size]), protocol)
            continue
        if kind == "lms":
            filt = fl.LMS(cfg.input_dim)
        elif kind == "rff":
            fmap = ft.random_fourier_map(kern, cfg.input_dim, cfg.n_features, derive_seed(cfg.master_seed, "feature_map"))
            filt = fl.FeatureLMS(fmap)
        elif kind == "rvfl":
            r = cfg.rvfl_range
            fmap = ft.rvfl_map(cfg.input_dim, cfg.n_features, derive_seed(cfg.master_seed, "feature_map"), (-r, r), (-r, r))
            filt = fl.FeatureLMS(fmap)
        elif kind == "logistic":
            filt = fl.Logistic(cfg.input_dim, cfg.lam, cfg.n_agents)
        else:
            filt = fl.SAF(cfg.input_dim, cfg.saf_x_min, cfg.saf_delta_x, cfg.saf_points, cfg.saf_q_step)
        algos[name] = (filt, protocol)
    return Setup(net, mixing, rho, source, mu, dictionaries, algos)


def run_single(cfg, run, setup=None):
    """One Monte Carlo run: label -> (squared prior error (N, T), accuracy or None)."""
    setup = build_setup(cfg) if setup is None else setup
    U, D = dg.generate_run(setup.source, cfg.n_agents, cfg.slots, cfg.master_seed, run)
    out = {}
    for label, (filt, protocol) in setup.algorithms.items():
        res = simulate(filt, protocol, U, D, setup.step_sizes, classification=cfg.classification)
        out[label] = (res.squared_error, res.accuracy)
    return out


_WORKER_SETUP = {}


def _worker(cfg, run):
    key = cfg.digest()
    if key not in _WORKER_SETUP:
        _WORKER_SETUP.clear()
        _WORKER_SETUP[key] = build_setup(cfg)
    return run_single(cfg, run, _WORKER_SETUP[key])


@dataclass
class AlgorithmResult:
    label: str
    mean_mse: np.ndarray  # (T,)
    std_mse: np.ndarray  # (T,)
    agent_mse: np.ndarray  # (N, T), averaged over runs
    mean_accuracy: np.ndarray = None
    std_accuracy: np.ndarray = None

    def steady_state_db(self, window):
        mean, std = metrics.steady_state(self.mean_mse, window)
        return metrics.mse_db(mean), std


@dataclass
class ExperimentResult:
    config: object
    setup: Setup
    results: dict = field(default_factory=dict)

    def summary(self):
        cfg = self.config
        rows = []
        for label, r in self.results.items():
            db, std = r.steady_state_db(cfg.steady_window)
            row = {
                "algorithm": label,
                "steady_state_mse_db": db,
                "steady_state_std": std,
                "slots": cfg.slots,
                "runs": cfg.runs,
                "seed": cfg.master_seed,
            }
            if r.mean_accuracy is not None:
                row["steady_state_accuracy"] = metrics.steady_state(r.mean_accuracy, cfg.steady_window)[0]
            rows.append(row)
        return rows


def run_experiment(cfg, parallel_runs=1):
    """Run ``cfg.runs`` Monte Carlo realisations and aggregate them per slot."""
    cfg.validate()
    if parallel_runs < 1:
        raise ConfigError("parallel_runs: must be >= 1")
    setup = build_setup(cfg)
    labels = list(setup.algorithms)
    n, T, R = cfg.n_agents, cfg.slots, cfg.runs
    agent_means = {lab: np.empty((R, T)) for lab in labels}
    agent_sums = {lab: np.zeros((n, T)) for lab in labels}
    acc_means = {lab: np.empty((R, T)) for lab in labels} if cfg.classification else None

    def fold(run, out):
        for lab, (sq, acc) in out.items():
            agent_means[lab][run] = sq.mean(axis=0)
            agent_sums[lab] += sq
            if acc_means is not None:
                acc_means[lab][run] = acc.mean(axis=0)

    if parallel_runs == 1:
        for r in range(R):
            fold(r, run_single(cfg, r, setup))
    else:
        with ProcessPoolExecutor(max_workers=parallel_runs) as pool:
            for r, out in enumerate(pool.map(_worker, [cfg] * R, range(R))):
                fold(r, out)

    result = ExperimentResult(cfg, setup)
    for lab in labels:
        r = AlgorithmResult(
            lab,
            agent_means[lab].mean(axis=0),
            agent_means[lab].std(axis=0),
            agent_sums[lab] / R,
        )
        if acc_means is not None:
            r.mean_accuracy = acc_means[lab].mean(axis=0)
            r.std_accuracy = acc_means[lab].std(axis=0)
        result.results[lab] = r
    return result


# -- output files ------------------------------------------------------------


def _fname(label):
    return label.replace("[D=", "_D").replace("]", "")


def _g(x):
    return f"{x:.17g}"


def write_outputs(result, out_dir):
    """Write trace CSVs, summary, provenance and the fixed assignments to ``out_dir``."""
    cfg, setup = result.config, result.setup
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for label, r in result.results.items():
        path = os.path.join(out_dir, f"{cfg.name}_{_fname(label)}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["slot", "mean_mse", "std_mse"]
            if r.mean_accuracy is not None:
                header += ["mean_accuracy", "std_accuracy"]
            w.writerow(header)
            for t in range(cfg.slots):
                row = [t + 1, _g(r.mean_mse[t]), _g(r.std_mse[t])]
                if r.mean_accuracy is not None:
                    row += [_g(r.mean_accuracy[t]), _g(r.std_accuracy[t])]
                w.writerow(row)
        written.append(path)
        if cfg.per_agent_traces:
            path = os.path.join(out_dir, f"{cfg.name}_{_fname(label)}_agents.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["slot", "agent", "mse"])
                for t in range(cfg.slots):
                    for k in cfg.per_agent_traces:
                        w.writerow([t + 1, k + 1, _g(r.agent_mse[k, t])])
            written.append(path)

    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(result.summary(), fh, indent=2)
    setup.network.save(os.path.join(out_dir, "network.txt"))
    setup.mixing.to_csv(os.path.join(out_dir, "mixing.csv"))
    with open(os.path.join(out_dir, "resolved.cfg"), "w") as fh:
        fh.write(to_config_text(cfg))
    provenance = {
        "package_version": __version__,
        "config": cfg.as_dict(),
        "config_sha256": cfg.digest(),
        "master_seed": cfg.master_seed,
        "seed_derivation": "numpy SeedSequence(master_seed, spawn_key=(purpose, run + 1, agent))",
        "model": setup.source.snapshot(),
        "step_sizes": setup.step_sizes.tolist(),
        "network_edges": sorted(list(e) for e in setup.network.edges),
        "dictionaries": {str(k): d.digest() for k, d in setup.dictionaries.items()},
        "filters": {lab: f.describe() for lab, (f, _) in setup.algorithms.items()},
        "protocols": {lab: p.kind for lab, (_, p) in setup.algorithms.items()},
    }
    with open(os.path.join(out_dir, "provenance.json"), "w") as fh:
        json.dump(provenance, fh, indent=2, default=list)
    log.info("wrote %d trace files to %s", len(written), out_dir)
    return written
