"""Seeded experiment orchestration and CSV report emission.

Every command is a pure function of its ExperimentConfig: all randomness is
derived from the master seed, report rows carry the seed and a hash of the
resolved configuration, and no timestamps enter any output, so re-running a
command with the same config produces byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace

from . import analytic_model as am
from . import icl_transformer as tf
from . import mac_simulator as sim
from . import prompt_pipeline as pp

__all__ = [
    "ExperimentConfig",
    "Report",
    "load_config",
    "config_hash",
    "cmd_solve",
    "cmd_datagen",
    "cmd_train",
    "cmd_eval",
    "cmd_validate",
    "cmd_bench",
    "repair_ladder",
    "predict_thresholds",
]

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    params: am.NetworkParams = field(default_factory=am.NetworkParams)
    train_densities: tuple[int, ...] = (2, 3, 4, 5, 6)
    test_densities: tuple[int, ...] = (100, 200, 300, 400, 500)
    k_max: int = 8
    cap: int = 32768
    m_examples: int = 9          # M: in-context examples per prompt
    s_prompts: int = 5           # S: one prompt family per training density
    step_size: float = 0.05
    max_rounds: int = 10_000
    stop_eps: float = 1e-9
    jitter_pct: float = 0.05
    stage_gain: float = pp.STAGE_GAIN
    reps_per_query: int = 4
    b_pct_sweep: tuple[float, ...] = (0.0, 20.0, 40.0, 60.0)
    n_est: int = 50
    sim_horizon_slots: int = 1_000_000
    sim_seeds: int = 3
    validate_densities: tuple[int, ...] = (1, 2, 5, 10, 20)
    master_seed: int = 7
    out_dir: str = "runs"

    def __post_init__(self):
        if not self.train_densities or not self.test_densities:
            raise ValueError("train and test density lists must be non-empty")
        if self.m_examples != self.k_max + 1:
            raise ValueError("m_examples must equal k_max + 1 (one example per stage)")
        if self.s_prompts != len(self.train_densities):
            raise ValueError("s_prompts must equal the number of training densities")
        if self.sim_seeds < 1 or self.reps_per_query < 1:
            raise ValueError("sim_seeds and reps_per_query must be >= 1")
        # delegate range checks to the sub-configs they feed
        tf.TrainConfig(self.step_size, self.max_rounds, self.stop_eps)

    @property
    def n_stages(self):
        return self.k_max + 1


_CONFIG_FIELDS = {
    "train_densities", "test_densities", "k_max", "cap", "m_examples",
    "s_prompts", "step_size", "max_rounds", "stop_eps", "jitter_pct",
    "stage_gain", "reps_per_query", "b_pct_sweep", "n_est",
    "sim_horizon_slots", "sim_seeds", "validate_densities", "master_seed",
    "out_dir",
}


def load_config(path=None, seed=None, out_dir=None):
    """Build an ExperimentConfig from a JSON file plus CLI overrides.

    The file may carry a ``network`` object (t_sigma_us, ... keys) and any of
    the config fields; everything omitted takes the defaults above.
    """
    raw = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    unknown = set(raw) - _CONFIG_FIELDS - {"network"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    if "network" in raw:
        kwargs["params"] = am.NetworkParams.from_mapping(raw["network"])
    for key in _CONFIG_FIELDS:
        if key in raw:
            value = raw[key]
            kwargs[key] = tuple(value) if isinstance(value, list) else value
    config = ExperimentConfig(**kwargs)
    if seed is not None:
        config = replace(config, master_seed=int(seed))
    if out_dir is not None:
        config = replace(config, out_dir=str(out_dir))
    return config


def config_hash(config):
    """Short stable digest of the resolved configuration."""
    record = asdict(config)
    record["params"] = config.params.to_mapping()
    blob = json.dumps(record, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class Report:
    """Named tables plus the provenance needed to reproduce them."""

    tables: dict[str, tuple[tuple[str, ...], list[list]]]
    config: ExperimentConfig
    schema_version: int = REPORT_SCHEMA_VERSION

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        for name, (columns, rows) in self.tables.items():
            with open(os.path.join(out_dir, f"{name}.csv"), "w", newline="",
                      encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(columns)
                writer.writerows(rows)
        meta = {
            "schema_version": self.schema_version,
            "config_hash": config_hash(self.config),
            "master_seed": self.config.master_seed,
            "config": {**asdict(self.config), "params": self.config.params.to_mapping()},
        }
        with open(os.path.join(out_dir, "run_metadata.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def repair_ladder(values, cap):
    """Round predicted thresholds into a deployable ladder.

    Half-up rounding, W_0 floored at 2, then monotone repair: each entry
    exceeds its predecessor by at least 1 until the cap is reached, after
    which entries stay parked at the cap.
    """
    out = []
    for value in values:
        w = tf.round_threshold(value, cap)
        if not out:
            w = max(w, 2)
        elif out[-1] >= cap:
            w = cap
        else:
            w = min(max(w, out[-1] + 1), cap)
        out.append(w)
    return am.BackoffLadder(tuple(out), cap)


def predict_thresholds(model, examples, k_max):
    """Predict every stage's CWT from one density's (possibly noisy) examples."""
    preds = []
    masses = []
    for stage in range(k_max + 1):
        prompt = pp.build_prompt(examples, stage, model.scaler)
        embedded = pp.embed(prompt, n_stages=model.n_stages, stage_gain=model.stage_gain)
        preds.append(tf.predict(model.params, embedded))
        masses.append(tf.attention(model.params, embedded).query_stage_mass)
    return preds, masses


def _design(config, n):
    tau_star, u_star = am.optimize_tau(n, config.params)
    ladder = am.solve_ladder(tau_star, n, config.k_max, config.cap)
    return tau_star, u_star, ladder


def cmd_solve(config):
    """Optimal tau and synthesized ladder for every configured density."""
    columns = ("density", "tau_star", "u_star", "w0", "w_top", "tau_achieved",
               "tau_residual", "u_achieved", "seed", "config_hash")
    digest = config_hash(config)
    rows = []
    errors = []
    for n in sorted(set(config.train_densities) | set(config.test_densities)):
        try:
            tau_star, u_star, ladder = _design(config, n)
            fp = am.solve_tau(ladder, n)
            rows.append([n, _fmt(tau_star), _fmt(u_star), ladder.thresholds[0],
                         ladder.thresholds[-1], _fmt(fp.tau),
                         _fmt(abs(fp.tau - tau_star)),
                         _fmt(am.throughput(fp.tau, n, config.params)),
                         config.master_seed, digest])
        except (ValueError, am.FixedPointError, am.LadderSearchError) as exc:
            errors.append({"density": n, "error": str(exc)})
    report = Report({"solve": (columns, rows)}, config)
    return report, errors


def _training_dataset(config):
    return pp.generate_dataset(config.train_densities, config.k_max, config.cap,
                               config.params, config.jitter_pct, config.master_seed)


def cmd_datagen(config, out_dir=None):
    """Emit the training dataset CSV (plus metadata) and return the examples."""
    examples = _training_dataset(config)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        pp.dataset_to_csv(examples, os.path.join(out_dir, "dataset.csv"))
        Report({}, config).write(out_dir)
    return examples


def cmd_train(config):
    """Run the training pipeline; returns (model, trace, report)."""
    examples = _training_dataset(config)
    scaler = pp.fit_scaler(examples)
    prompts = []
    for n in config.train_densities:
        per_density = [e for e in examples if e.density_tag == n]
        for prompt in pp.sample_training_prompts(per_density, config.reps_per_query,
                                                 config.master_seed, scaler):
            prompts.append(pp.embed(prompt, n_stages=config.n_stages,
                                    stage_gain=config.stage_gain))
    train_config = tf.TrainConfig(config.step_size, config.max_rounds, config.stop_eps)
    params, trace = tf.train(prompts, train_config)
    model = tf.TrainedModel(params, scaler, trace.label_scale,
                            config.n_stages, config.stage_gain)
    digest = config_hash(config)
    columns = ("step", "loss", "step_norm", "seed", "config_hash")
    rows = [[t, _fmt(loss), _fmt(trace.step_norms[t]) if t < len(trace.step_norms) else "",
             config.master_seed, digest]
            for t, loss in enumerate(trace.losses)]
    report = Report({"loss_trace": (columns, rows)}, config)
    return model, trace, report


def _test_examples(config, density, b_pct):
    examples = pp.generate_dataset([density], config.k_max, config.cap, config.params,
                                   config.jitter_pct, config.master_seed + 1_000_003)
    if b_pct > 0:
        examples = pp.corrupt_thresholds(
            examples, b_pct, config.master_seed + 13 * density + int(b_pct),
            cap=config.cap)
    return examples


def cmd_eval(config, model, with_sim=True):
    """Compare ICL-predicted ladders against the optimum and the benchmark.

    For each test density and error level b: build a prompt from the (possibly
    corrupted) analytic ladder labels, predict all stage thresholds, deploy the
    repaired ladder, and evaluate it analytically (and in the simulator when
    ``with_sim``).  Reference columns: the density's own optimal ladder (U*)
    and the model-based design for the estimated density ``n_est``.
    """
    digest = config_hash(config)
    columns = ("density", "b_pct", "u_star", "u_icl", "u_icl_sim",
               "u_model_based", "w0_icl", "w_top_icl", "min_query_mass",
               "seed", "config_hash")
    rows = []
    errors = []
    _, _, ladder_est = _design(config, config.n_est)
    for n in config.test_densities:
        try:
            _, _, ladder_opt = _design(config, n)
            u_star = am.ladder_throughput(ladder_opt, n, config.params)
            u_mb = am.ladder_throughput(ladder_est, n, config.params)
        except (ValueError, am.FixedPointError, am.LadderSearchError) as exc:
            errors.append({"density": n, "error": str(exc)})
            continue
        for b in config.b_pct_sweep:
            try:
                examples = _test_examples(config, n, b)
                preds, masses = predict_thresholds(model, examples, config.k_max)
                ladder_icl = repair_ladder(preds, config.cap)
                u_icl = am.ladder_throughput(ladder_icl, n, config.params)
                u_icl_sim = ""
                if with_sim:
                    run = sim.run(sim.SimConfig(n, ladder_icl, config.params,
                                                config.sim_horizon_slots,
                                                seed=config.master_seed + 7 * n + int(b)))
                    u_icl_sim = _fmt(run.throughput)
                rows.append([n, _fmt(float(b)), _fmt(u_star), _fmt(u_icl), u_icl_sim,
                             _fmt(u_mb), ladder_icl.thresholds[0],
                             ladder_icl.thresholds[-1], _fmt(min(masses)),
                             config.master_seed, digest])
            except (ValueError, am.FixedPointError, am.LadderSearchError) as exc:
                errors.append({"density": n, "b_pct": b, "error": str(exc)})
                rows.append([n, _fmt(float(b)), _fmt(u_star), "", "", _fmt(u_mb),
                             "", "", "", config.master_seed, digest])
    report = Report({"eval": (columns, rows)}, config)
    return report, errors


def cmd_validate(config):
    """Simulator-vs-model agreement across densities, several seeds each."""
    digest = config_hash(config)
    columns = ("density", "seed", "w0", "u_model", "u_sim", "rel_deviation",
               "tau_model", "tau_sim", "config_hash")
    rows = []
    worst = 0.0
    for n in config.validate_densities:
        if n == 1:
            ladder = am.BackoffLadder.beb(32, config.k_max, config.cap)
        else:
            _, _, ladder = _design(config, n)
        fp = am.solve_tau(ladder, n)
        u_model = am.throughput(fp.tau, n, config.params)
        for rep in range(config.sim_seeds):
            seed = config.master_seed + 101 * n + rep
            result = sim.run(sim.SimConfig(n, ladder, config.params,
                                           config.sim_horizon_slots, seed=seed))
            rel = abs(result.throughput - u_model) / u_model
            worst = max(worst, rel)
            rows.append([n, seed, ladder.thresholds[0], _fmt(u_model),
                         _fmt(result.throughput), _fmt(rel), _fmt(fp.tau),
                         _fmt(result.tx_attempt_rate), digest])
    report = Report({"validate": (columns, rows)}, config)
    return report, worst


def cmd_bench(config, with_sim=False):
    """Throughput cost of designing for n_est and deploying at each test density."""
    digest = config_hash(config)
    columns = ("n_true", "n_est", "mismatch_loss", "u_matched", "u_mismatched",
               "u_matched_sim", "u_mismatched_sim", "seed", "config_hash")
    rows = []
    _, _, ladder_est = _design(config, config.n_est)
    for n in config.test_densities:
        _, _, ladder_opt = _design(config, n)
        u_matched = am.ladder_throughput(ladder_opt, n, config.params)
        u_mismatched = am.ladder_throughput(ladder_est, n, config.params)
        sim_matched = sim_mismatched = ""
        if with_sim:
            run_m = sim.run(sim.SimConfig(n, ladder_opt, config.params,
                                          config.sim_horizon_slots,
                                          seed=config.master_seed + 3 * n))
            run_e = sim.run(sim.SimConfig(n, ladder_est, config.params,
                                          config.sim_horizon_slots,
                                          seed=config.master_seed + 3 * n + 1))
            sim_matched, sim_mismatched = _fmt(run_m.throughput), _fmt(run_e.throughput)
        rows.append([n, config.n_est, _fmt(u_matched - u_mismatched),
                     _fmt(u_matched), _fmt(u_mismatched), sim_matched,
                     sim_mismatched, config.master_seed, digest])
    report = Report({"bench": (columns, rows)}, config)
    return report
