"""Scenario configs, trial orchestration and plot-ready metrics output."""

import configparser
import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from ._rng import derive_rng
from .problems import (
    GeneratorParams,
    StepRule,
    generate_instance,
    initial_point,
    save_instance,
    subgradient_baseline,
)
from .simulator import RunConfig, baseline_penalties, reference_settings, run
from .smoothing import ScheduleParams

log = logging.getLogger(__name__)

SCENARIOS = ("vs_baseline", "vary_km", "vary_pc", "custom")
CSV_COLUMNS = ("scenario", "trial", "method", "variant", "global_iter", "cumulative_updates",
               "relative_error", "client_gap", "cluster_gap")


class ConfigError(ValueError):
    """Invalid configuration; the message names the violated invariant."""


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """A named sweep. ``variants`` lists ``(label, overrides)`` pairs."""

    name: str
    sweep: str | None = None  # "K_M" or "p_c"
    values: tuple = ()
    baseline: bool = False
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.name!r}")
        if self.sweep is not None and not self.values:
            raise ConfigError(f"scenario {self.name}: sweep list must be nonempty")

    def variants(self):
        if self.sweep is None:
            return [("default", dict(self.overrides))]
        return [(_fmt_variant(v), {**self.overrides, self.sweep: v}) for v in self.values]


def _fmt_variant(v):
    return f"{v:g}" if isinstance(v, float) else str(v)


def preset(name, **overrides):
    """Scenario presets: the grids of the three benchmark figures."""
    if name == "vs_baseline":
        return Scenario(name, baseline=True, overrides={"K_M": 10, "p_c": 1.0, **overrides})
    if name == "vary_km":
        return Scenario(name, "K_M", (1, 5, 10, 20), overrides={"p_c": 1.0, **overrides})
    if name == "vary_pc":
        return Scenario(name, "p_c", (0.3, 0.5, 0.7, 1.0), overrides={"K_M": 1, **overrides})
    if name == "custom":
        return Scenario(name, overrides=overrides)
    raise ConfigError(f"scenario must be one of {SCENARIOS}, got {name!r}")


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------

TEMPLATE = """\
# HFSAD run configuration.  Every value shown is the reference default;
# "auto" means derived from the generated instance at run time.

[topology]
L = 5                 # clusters
N = 50                # clients per cluster (or a comma list, one per cluster)
M = 25                # parameter dimension

[loop]
K_z = 1000            # global iterations (not fixed by the reference setup)
K_M = 10              # inner rounds per global iteration
K_a = 10              # staleness bound, in global iterations
p_c = 1.0             # per-round participation probability, in (0, 1]

[schedule]
c = auto              # client penalty growth; auto = omega
d = auto              # head penalty growth; auto = omega0 / 25
alpha = auto          # client smoothing decay; auto = sqrt(20)
beta = auto           # head smoothing decay; auto = 25 sqrt(20)

[weights]
omega = auto          # client TV weight; auto = 5 * max ||x||_2
omega0 = auto         # head TV weight; auto = max_l (N_l omega + eta_l lambda gamma)

[problem]
p = 0.8               # feature density per cluster
s = 0.3               # ground-truth density
snr_db = -20          # dB
c1 = 0.9              # light-noise mixture weight
c2 = 0.1              # heavy-noise mixture weight
m_per_client = 1      # measurements per client
box = 5.0             # |w_i| <= box

[algorithm]
init = orthogonal     # orthogonal | spectral | zero
gamma_sign = -1       # sign of the dual term in the server average
baseline_steps = auto # auto = match the HFSAD cumulative client-update count
baseline_rho = 0.998  # geometric step decay
baseline_eta0 = auto  # auto = 1 / sqrt(total clients)

[scenario]
name = vs_baseline    # vs_baseline | vary_km | vary_pc | custom
trials = 100
seed = 0
"""

_AUTO = "auto"
KNOWN_KEYS = {
    "topology": {"l", "n", "m"},
    "loop": {"k_z", "k_m", "k_a", "p_c"},
    "schedule": {"c", "d", "alpha", "beta"},
    "weights": {"omega", "omega0"},
    "problem": {"p", "s", "snr_db", "c1", "c2", "m_per_client", "box"},
    "algorithm": {"init", "gamma_sign", "baseline_steps", "baseline_rho", "baseline_eta0"},
    "scenario": {"name", "trials", "seed"},
}


@dataclass(frozen=True)
class Config:
    run: RunConfig
    scenario: Scenario
    gen: GeneratorParams
    step_rule: StepRule
    baseline_steps: int | None = None
    omega: float | None = None
    omega0: float | None = None
    schedule: dict = field(default_factory=dict)

    def with_trials(self, trials):
        return replace(self, run=replace(self.run, trials=int(trials)))


def _get(parser, section, key, conv, default):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key).split("#", 1)[0].strip()
    if raw.lower() == _AUTO:
        return None
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})") from None


def _int_list(raw):
    return tuple(int(v) for v in raw.split(","))


def parse_config(text, source="<string>"):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    extra = set(parser.sections()) - set(KNOWN_KEYS)
    if extra:
        raise ConfigError(f"unknown section(s): {sorted(extra)}")
    for section in parser.sections():
        unknown = set(parser.options(section)) - KNOWN_KEYS[section]
        if unknown:
            raise ConfigError(f"[{section}] unknown key(s): {sorted(unknown)}")

    L = _get(parser, "topology", "L", int, 5)
    n_raw = _get(parser, "topology", "N", _int_list, (50,))
    if L is None or n_raw is None:
        raise ConfigError("topology values cannot be auto")
    if L < 1:
        raise ConfigError("L must be >= 1")
    if len(n_raw) == 1:
        n_raw = n_raw * L
    if len(n_raw) != L:
        raise ConfigError(f"N lists {len(n_raw)} cluster sizes but L = {L}")

    sched = {k: _get(parser, "schedule", k, float, None) for k in ("c", "d", "alpha", "beta")}
    for k, v in sched.items():
        if v is not None and not v > 0:
            raise ConfigError(f"schedule parameter {k} must be > 0")
    omega = _get(parser, "weights", "omega", float, None)
    omega0 = _get(parser, "weights", "omega0", float, None)
    for k, v in (("omega", omega), ("omega0", omega0)):
        if v is not None and v < 0:
            raise ConfigError(f"{k} must be >= 0")

    try:
        run_cfg = RunConfig(
            N_l=n_raw,
            M=_get(parser, "topology", "M", int, 25),
            K_z=_get(parser, "loop", "K_z", int, 1000),
            K_M=_get(parser, "loop", "K_M", int, 10),
            K_a=_get(parser, "loop", "K_a", int, 10),
            p_c=_get(parser, "loop", "p_c", float, 1.0),
            seed=_get(parser, "scenario", "seed", int, 0),
            trials=_get(parser, "scenario", "trials", int, 100),
            gamma_sign=float(_get(parser, "algorithm", "gamma_sign", int, -1)),
            init=_get(parser, "algorithm", "init", str, "orthogonal"),
        )
        gen = GeneratorParams(
            p=_get(parser, "problem", "p", float, 0.8),
            s=_get(parser, "problem", "s", float, 0.3),
            snr_db=_get(parser, "problem", "snr_db", float, -20.0),
            c1=_get(parser, "problem", "c1", float, 0.9),
            c2=_get(parser, "problem", "c2", float, 0.1),
            m_per_client=_get(parser, "problem", "m_per_client", int, 1),
            box=_get(parser, "problem", "box", float, 5.0),
        )
        step_rule = StepRule(eta0=_get(parser, "algorithm", "baseline_eta0", float, None),
                             rho=_get(parser, "algorithm", "baseline_rho", float, 0.998))
    except TypeError as exc:
        raise ConfigError(f"a required value was set to auto: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _validate_gen(gen)
    if run_cfg.init not in ("orthogonal", "spectral", "zero"):
        raise ConfigError(f"init must be orthogonal, spectral or zero, got {run_cfg.init!r}")

    name = _get(parser, "scenario", "name", str, "vs_baseline") or "vs_baseline"
    return Config(
        run=run_cfg,
        scenario=preset(name),
        gen=gen,
        step_rule=step_rule,
        baseline_steps=_get(parser, "algorithm", "baseline_steps", int, None),
        omega=omega,
        omega0=omega0,
        schedule=sched,
    )


def _validate_gen(gen):
    if not 0 <= gen.p <= 1:
        raise ConfigError("p must lie in [0, 1]")
    if not 0 < gen.s <= 1:
        raise ConfigError("s must lie in (0, 1]")
    if abs(gen.c1 + gen.c2 - 1) > 1e-12 or min(gen.c1, gen.c2) < 0:
        raise ConfigError("c1 + c2 must equal 1 with both >= 0")
    if gen.m_per_client < 1:
        raise ConfigError("m_per_client must be >= 1")
    if not gen.box > 0:
        raise ConfigError("box must be > 0")


def load_config(path=None):
    """Read a config file; ``None`` (or an empty file) gives the reference defaults."""
    if path is None:
        return parse_config("")
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


def write_template(path):
    Path(path).write_text(TEMPLATE)
    return path


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsRecord:
    scenario: str
    trial: int
    method: str
    variant: str
    global_iter: int
    cumulative_updates: int
    relative_error: float
    client_gap: float
    cluster_gap: float

    def __post_init__(self):
        if not self.relative_error >= 0:
            raise ValueError("relative_error must be >= 0")


class TrialError(RuntimeError):
    def __init__(self, trial, variant, cause, dump=None):
        super().__init__(f"trial {trial} (variant {variant}) failed: {cause!r}"
                         + (f"; instance saved to {dump}" if dump else ""))
        self.trial = trial
        self.dump = dump


def resolve_settings(config, run_cfg, instance):
    st = reference_settings(run_cfg, instance)
    sched = {"c": st.schedule.c, "d": st.schedule.d, "alpha": st.schedule.alpha,
             "beta": st.schedule.beta}
    sched.update({k: v for k, v in config.schedule.items() if v is not None})
    weights = replace(st.weights,
                      omega_client=st.weights.omega_client if config.omega is None else config.omega,
                      omega_cluster=st.weights.omega_cluster if config.omega0 is None else config.omega0)
    return replace(st, schedule=ScheduleParams(**sched), weights=weights)


def _trace_rows(scenario, trial, method, variant, trace):
    for rec in trace.records():
        yield MetricsRecord(scenario, trial, method, variant, rec.k0, rec.cumulative_updates,
                            rec.relative_error, rec.client_gap, rec.cluster_gap)


def run_one_trial(config, trial, dump_dir=None):
    """All variants of the scenario on one fresh instance."""
    scen = config.scenario
    base = config.run
    instance = generate_instance(base, config.gen, derive_rng(base.seed, trial, "data"))
    rows = []
    for label, overrides in scen.variants():
        try:
            run_cfg = replace(base, **overrides)
            st = resolve_settings(config, run_cfg, instance)
            w_init = initial_point(instance, run_cfg.init)
            trace = run(run_cfg, instance, trial=trial, settings=st, w_init=w_init)
            rows.extend(_trace_rows(scen.name, trial, "hfsad", label, trace))
            if scen.baseline:
                rows.extend(_baseline_rows(config, run_cfg, instance, st, w_init, trace,
                                           scen.name, trial, label))
        except Exception as exc:
            dump = None
            if dump_dir is not None:
                dump = save_instance(Path(dump_dir) / f"failed_trial_{trial}.npz", instance)
            raise TrialError(trial, label, exc, dump) from exc
    return rows


def _baseline_rows(config, run_cfg, instance, st, w_init, trace, scenario, trial, label):
    """Baseline sampled at HFSAD's cumulative update counts."""
    n_total = instance.n_clients
    steps = config.baseline_steps or int(math.ceil(trace.cumulative_updates[-1] / n_total))
    base = subgradient_baseline(instance, steps, config.step_rule, w_init, baseline_penalties(st))
    idx = np.minimum(trace.cumulative_updates // n_total, steps)
    for it, k in zip(trace.k0, idx):
        yield MetricsRecord(scenario, trial, "baseline", label, int(it),
                            int(base.cumulative_updates[k]), float(base.relative_error[k]), 0.0, 0.0)


def _run_trial_star(args):
    return run_one_trial(*args)


def run_trials(config, workers=1, dump_dir=None):
    """Fresh instance per trial; fail-fast; results folded in trial order."""
    trials = range(config.run.trials)
    jobs = [(config, t, dump_dir) for t in trials]
    if workers <= 1:
        chunks = [run_one_trial(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = []
            for res in pool.map(_run_trial_star, jobs):
                chunks.append(res)
    return sort_records([r for chunk in chunks for r in chunk])


def _variant_key(v):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def sort_records(records):
    return sorted(records, key=lambda r: (r.scenario, _variant_key(r.variant), r.trial,
                                          r.method, r.global_iter))


def summarize(records):
    """Mean and median relative error per (method, variant, global_iter)."""
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.variant, r.global_iter), []).append(r.relative_error)
    out = []
    for (method, variant, it), vals in sorted(groups.items(), key=lambda kv: (kv[0][0], _variant_key(kv[0][1]), kv[0][2])):
        arr = np.array(vals)
        out.append({"method": method, "variant": variant, "global_iter": it, "trials": len(arr),
                    "mean": float(arr.mean()), "median": float(np.median(arr))})
    return out


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def emit(records, fmt, path):
    """Write records as CSV (fixed columns, 17 significant digits) or JSON."""
    records = sort_records(records)
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in records:
                writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    elif fmt == "json":
        with open(path, "w") as fh:
            json.dump([asdict(r) for r in records], fh, indent=1)
            fh.write("\n")
    else:
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    return path


def read_csv(path):
    types = {f.name: f.type for f in fields(MetricsRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(MetricsRecord(**{k: types[k](v) for k, v in row.items()}))
    return out


def metadata(config):
    """Run metadata; deliberately free of timestamps so outputs are reproducible."""
    r = config.run
    return {
        "scenario": config.scenario.name,
        "variants": [label for label, _ in config.scenario.variants()],
        "sweep": config.scenario.sweep,
        "scenario_overrides": config.scenario.overrides,
        "trials": r.trials,
        "seed": r.seed,
        "N_l": list(r.N_l),
        "M": r.M,
        "K_z": r.K_z,
        "K_M": r.K_M,
        "K_a": r.K_a,
        "p_c": r.p_c,
        "init": r.init,
        "gamma_sign": r.gamma_sign,
        "generator": asdict(config.gen),
        "baseline": {"rule": config.step_rule.kind, "eta0": config.step_rule.eta0,
                     "rho": config.step_rule.rho, "steps": config.baseline_steps},
        "schedule_overrides": config.schedule,
        "omega": config.omega,
        "omega0": config.omega0,
    }


def write_outputs(records, config, out_dir, fmt="csv"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [emit(records, fmt, out_dir / f"records.{fmt}")]
    summary = out_dir / "summary.json"
    summary.write_text(json.dumps(summarize(records), indent=1) + "\n")
    meta = out_dir / "metadata.json"
    meta.write_text(json.dumps(metadata(config), indent=1, sort_keys=True) + "\n")
    return paths + [summary, meta]


__all__ = [
    "CSV_COLUMNS", "Config", "ConfigError", "MetricsRecord", "SCENARIOS", "Scenario",
    "TEMPLATE", "TrialError", "emit", "load_config", "parse_config", "preset", "read_csv",
    "run_one_trial", "run_trials", "sort_records", "summarize", "write_outputs", "write_template",
]
