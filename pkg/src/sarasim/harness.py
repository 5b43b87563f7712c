"""Scenario configs, per-seed runs, Monte-Carlo aggregation and the offload metric."""
from __future__ import annotations

import csv
import functools
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import baselines
from .datasets import build_pair_samples, load_ego_facebook, select_users, synth_ego_network
from .matching import Game, GameConfig, MatchState, run_sara, verify_two_sided_stability, welfare
from .phy import Band, SpectrumPlan, dbm_to_watts, random_topology, rate_table, sample_channels
from .social import SocialTieMatrix, TieHyper, infer_ties, select_sues

log = logging.getLogger(__name__)

ALGORITHMS = ("sara", "context_unaware", "central_aware", "central_unaware")
CONTEXT_AWARE = ("sara", "central_aware")
ENV_PREFIX = "SARASIM_"

EXIT_OK, EXIT_NONCONVERGED, EXIT_UNSTABLE = 0, 2, 3


class ConfigError(ValueError):
    pass


# TOML section -> keys; key names double as ScenarioConfig field names.
SCHEMA = {
    "network": ("n_scbs", "m_u", "m_s", "area_side_m"),
    "spectrum": ("n1", "n2", "n3", "rb_bandwidth_hz"),
    "radio": ("scbs_power_w", "sue_power_w", "noise_dbm", "pathloss_exponent", "d_min_m",
              "interference"),
    "weights": ("alpha", "beta", "nu", "kappa"),
    "offload": ("rho", "rho_unaware"),
    "social": ("source", "dataset_dir", "ego", "pool_users", "z_csv", "upsilon", "lambda_w",
               "lambda_rho", "tie_seed"),
    "run": ("algorithms", "seeds", "max_rounds", "workers"),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one Monte-Carlo experiment needs.

    ``source`` picks the tie matrix: ``"ego"`` infers it from an ego network
    (``dataset_dir = "synthetic"`` uses the built-in generated one), ``"csv"``
    reads ``z_csv``, ``"random"`` draws fresh uniform ties per seed. Weights
    left as None default to half the RB bandwidth.
    """

    n_scbs: int = 7
    m_u: int = 30
    m_s: int = 4
    area_side_m: float = 2000.0
    n1: int = 5
    n2: int = 3
    n3: int = 5
    rb_bandwidth_hz: float = 180e3
    scbs_power_w: float = 2.0
    sue_power_w: float = 0.01
    noise_dbm: float = -90.0
    pathloss_exponent: float = 3.0
    d_min_m: float = 1.0
    interference: str = "worst_case"
    alpha: Optional[float] = None
    beta: Optional[float] = None
    nu: Optional[float] = None
    kappa: Optional[float] = None
    rho: float = 0.5
    rho_unaware: float = 0.0
    source: str = "ego"
    dataset_dir: str = "synthetic"
    ego: str = "synthetic"
    pool_users: int = 80
    z_csv: Optional[str] = None
    upsilon: float = 1.0
    lambda_w: float = 0.5
    lambda_rho: float = 0.5
    tie_seed: int = 0
    algorithms: tuple = ALGORITHMS
    seeds: tuple = tuple(range(100))
    max_rounds: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        algs = (self.algorithms,) if isinstance(self.algorithms, str) else tuple(self.algorithms)
        object.__setattr__(self, "algorithms", algs)
        seeds = range(self.seeds) if isinstance(self.seeds, int) else self.seeds
        object.__setattr__(self, "seeds", tuple(int(s) for s in seeds))
        for a in algs:
            if a not in ALGORITHMS:
                raise ConfigError(f"run.algorithms: unknown algorithm {a!r}")
        if self.interference not in ("worst_case", "assigned_only"):
            raise ConfigError(f"radio.interference: expected worst_case or assigned_only, got {self.interference!r}")
        if self.source not in ("ego", "csv", "random"):
            raise ConfigError(f"social.source: expected ego, csv or random, got {self.source!r}")
        if self.source == "csv" and not self.z_csv:
            raise ConfigError("social.z_csv is required when social.source = 'csv'")
        if min(self.n_scbs, self.m_u, self.m_s, self.n1, self.n2, self.n3) < 0:
            raise ConfigError("network and spectrum counts must be nonnegative")
        if self.source == "ego" and self.m_s + self.m_u > self.pool_users:
            raise ConfigError(f"network.m_u + network.m_s exceeds social.pool_users ({self.pool_users})")

    @property
    def plan(self) -> SpectrumPlan:
        return SpectrumPlan(self.n1, self.n2, self.n3, self.rb_bandwidth_hz)

    @property
    def game_config(self) -> GameConfig:
        half = self.rb_bandwidth_hz / 2.0
        pick = lambda v: half if v is None else v  # noqa: E731
        return GameConfig(pick(self.alpha), pick(self.beta), pick(self.nu), pick(self.kappa),
                          self.max_rounds)

    @property
    def hyper(self) -> TieHyper:
        return TieHyper(self.upsilon, self.lambda_w, self.lambda_rho)

    def params(self) -> dict:
        """Scenario columns written ahead of the metrics in reports."""
        return {"n_scbs": self.n_scbs, "m_u": self.m_u, "m_s": self.m_s, "n1": self.n1,
                "n2": self.n2, "n3": self.n3, "rho": self.rho, "rho_unaware": self.rho_unaware,
                "interference": self.interference, "n_seeds": len(self.seeds)}

    def to_toml(self) -> str:
        out = []
        for section, keys in SCHEMA.items():
            out.append(f"[{section}]")
            for k in keys:
                v = getattr(self, k)
                if v is None:
                    continue
                if k == "seeds":
                    v = list(v)
                out.append(f"{k} = {_toml_value(v)}")
            out.append("")
        return "\n".join(out)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return "[" + ", ".join(_toml_value(x) for x in v) + "]"


def _coerce(key: str, value):
    kinds = {f.name: f.type for f in fields(ScenarioConfig)}
    kind = kinds[key]
    try:
        if value is None:
            return None
        if kind == "int":
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if kind in ("float", "Optional[float]"):
            return float(value)
        if kind == "Optional[int]":
            return int(value)
        if kind in ("str", "Optional[str]"):
            # SNAP ego ids are numeric, so ``ego = 0`` is accepted as "0"
            if isinstance(value, int) and not isinstance(value, bool):
                return str(value)
            if not isinstance(value, str):
                raise TypeError
            return value
        return value
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: invalid value {value!r} (expected {kind})") from None


def config_from_mapping(data: dict, base: ScenarioConfig = ScenarioConfig()) -> ScenarioConfig:
    """Merge a nested section/key mapping onto ``base``; unknown keys are errors."""
    updates = {}
    for section, body in data.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"config section {section!r} must be a table")
        for key, value in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            updates[key] = _coerce(key, value)
    return replace(base, **updates)


def env_overrides(environ=None) -> dict:
    """Nested overrides from ``SARASIM_<SECTION>_<KEY>`` variables.

    Values are read as TOML literals (``50``, ``0.1``, ``["sara"]``); anything
    that does not parse is taken as a plain string.
    """
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        section = next((s for s in SCHEMA if rest.startswith(s + "_")), None)
        if section is None or rest[len(section) + 1:] not in SCHEMA[section]:
            raise ConfigError(f"environment variable {name} does not name a config key")
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw
        out.setdefault(section, {})[rest[len(section) + 1:]] = value
    return out


def default_config_text() -> str:
    return resources.files("sarasim").joinpath("configs/default.toml").read_text()


def load_config(path=None, *, environ=None, use_env: bool = True) -> ScenarioConfig:
    """Built-in default config, then the file at ``path``, then environment overrides."""
    cfg = config_from_mapping(tomllib.loads(default_config_text()))
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = config_from_mapping(data, cfg)
    if use_env:
        cfg = config_from_mapping(env_overrides(environ), cfg)
    return cfg


# -- tie pool ----------------------------------------------------------------

@functools.lru_cache(maxsize=8)
def _ego_pool(dataset_dir: str, ego: str, pool_users: int, hyper: TieHyper, tie_seed: int):
    if dataset_dir == "synthetic":
        net = synth_ego_network(0)
    else:
        net = load_ego_facebook(dataset_dir, ego)
    users = select_users(net, pool_users)
    samples = build_pair_samples(net, users)
    fit = infer_ties(samples, hyper, tie_seed, n_users=len(users),
                     user_ids=[net.member_ids[u] for u in users])
    if not fit.converged:
        log.warning("tie inference for ego %s did not converge", ego)
    return fit.ties


def tie_pool(cfg: ScenarioConfig) -> Optional[SocialTieMatrix]:
    """The user pool's tie matrix, or None when ties are drawn per seed."""
    if cfg.source == "random":
        return None
    if cfg.source == "csv":
        return SocialTieMatrix.from_csv(cfg.z_csv)
    return _ego_pool(cfg.dataset_dir, str(cfg.ego), cfg.pool_users, cfg.hyper, cfg.tie_seed)


# -- instances ---------------------------------------------------------------

@dataclass
class Instance:
    """One seeded draw: who plays, where they stand and what the channels are."""

    cfg: ScenarioConfig
    seed: int
    game: Game
    channels: object
    topology: object
    pool_ids: list

    @property
    def z(self) -> np.ndarray:
        return self.game.z


def build_instance(cfg: ScenarioConfig, seed: int, pool: Optional[SocialTieMatrix] = None) -> Instance:
    """Draw UEs from the pool, drop SCBSs and users uniformly, sample fading.

    SUEs are the ``m_s`` most influential pool users and take part in every
    seed; the ``m_u`` plain UEs are drawn without replacement from the rest.
    """
    users_rng, topo_rng, chan_rng = (np.random.default_rng(s)
                                     for s in np.random.SeedSequence(seed).spawn(3))
    M = cfg.m_u + cfg.m_s
    if pool is None and cfg.source != "random":
        pool = tie_pool(cfg)
    if pool is None:
        z = users_rng.random((M, M))
        z = np.triu(z, 1) + np.triu(z, 1).T
        sues = select_sues(z, cfg.m_s)
        ids = list(range(M))
    else:
        sues_pool = select_sues(pool.z, cfg.m_s)
        rest = [i for i in range(len(pool)) if i not in set(sues_pool)]
        if cfg.m_u > len(rest):
            raise ConfigError(f"network.m_u = {cfg.m_u} exceeds the {len(rest)} non-serving pool users")
        chosen = users_rng.choice(rest, size=cfg.m_u, replace=False).tolist()
        ids = sorted(list(sues_pool) + chosen)
        z = pool.z[np.ix_(ids, ids)]
        sues = tuple(ids.index(s) for s in sues_pool)
    topology = random_topology(cfg.n_scbs, M, sues, cfg.area_side_m, topo_rng)
    channels = sample_channels(topology, cfg.plan, chan_rng, pathloss_exponent=cfg.pathloss_exponent,
                               d_min=cfg.d_min_m, noise_variance=dbm_to_watts(cfg.noise_dbm),
                               scbs_power=cfg.scbs_power_w, sue_power=cfg.sue_power_w)
    game = Game.from_network(topology, cfg.plan, channels, z, cfg.game_config)
    return Instance(cfg, seed, game, channels, topology, ids)


def run_algorithm(inst: Instance, algorithm: str):
    """(MatchState, RunTrace or None, game whose preferences the algorithm played)."""
    game = inst.game
    if algorithm == "sara":
        state, trace = run_sara(game)
        return state, trace, game
    if algorithm == "context_unaware":
        return baselines.context_unaware_matching(game), None, game.with_config(game.cfg.without_social())
    if algorithm == "central_aware":
        return baselines.centralized_context_aware(game), None, game
    if algorithm == "central_unaware":
        return baselines.centralized_context_unaware(game), None, game.with_config(game.cfg.without_social())
    raise ConfigError(f"unknown algorithm {algorithm!r}")


# -- metrics -----------------------------------------------------------------

def offload_probability(zbar, rho):
    """Chance that a cluster member finds its request in the SUE's cache."""
    return 1.0 / (1.0 + np.exp(-rho * np.asarray(zbar, dtype=float)))


def cluster_ties(game: Game, state: MatchState) -> dict:
    """Average member-to-SUE tie of every cluster; 0 for an SUE without members."""
    out = {}
    for k, s in enumerate(game.sue_ids):
        members = np.flatnonzero(state.a_mu[:, k])
        out[s] = float(game.z[members, s].mean()) if len(members) else 0.0
    return out


def cluster_avg_tie(game: Game, state: MatchState) -> float:
    """Mean of the cluster averages, over clusters with at least one member."""
    sizes = state.a_mu.sum(axis=0)
    ties = cluster_ties(game, state)
    vals = [ties[s] for k, s in enumerate(game.sue_ids) if sizes[k] > 0]
    return float(np.mean(vals)) if vals else 0.0


def expected_offload(game: Game, state: MatchState, rho: float) -> float:
    """Expected number of clustered UEs served from an SUE cache."""
    sizes = state.a_mu.sum(axis=0)
    ties = cluster_ties(game, state)
    return float(sum(sizes[k] * offload_probability(ties[s], rho)
                     for k, s in enumerate(game.sue_ids)))


def sum_rate(inst: Instance, state: MatchState) -> float:
    """Total achievable rate of matched users, in bit/s."""
    game = inst.game
    users = np.flatnonzero(state.current >= 0)
    if inst.cfg.interference == "worst_case":
        rate = game.rate
    else:
        active = {b: np.zeros(inst.channels.band_gains(b).shape[:2], dtype=bool) for b in Band}
        for r in state.current[users]:
            rb = game.blocks[r]
            row = inst.channels.owner_row(rb)
            active[rb.band][row, rb.index] = True
        rate = rate_table(inst.channels, game.blocks, inst.cfg.rb_bandwidth_hz, active)
    return float(rate[state.current[users], users].sum())


METRICS = ("avg_cluster_tie", "sum_rate", "avg_utility", "expected_offload", "rounds",
           "proposals", "n_d2d", "converged", "stability_ok")


@dataclass
class RunMetrics:
    algorithm: str
    seed: int
    avg_cluster_tie: float
    sum_rate: float
    avg_utility: float
    expected_offload: float
    rounds: int
    proposals: int
    n_d2d: int
    converged: bool
    stability_ok: bool

    def values(self) -> dict:
        return {k: getattr(self, k) for k in METRICS}


def measure(inst: Instance, algorithm: str, state: MatchState, played: Game) -> RunMetrics:
    game = inst.game
    rho = inst.cfg.rho if algorithm in CONTEXT_AWARE else inst.cfg.rho_unaware
    return RunMetrics(
        algorithm=algorithm,
        seed=inst.seed,
        avg_cluster_tie=cluster_avg_tie(game, state),
        sum_rate=sum_rate(inst, state),
        avg_utility=welfare(game, state.current) / max(game.n_users, 1),
        expected_offload=expected_offload(game, state, rho),
        rounds=int(state.round),
        proposals=int(state.info.get("proposals", 0)),
        n_d2d=int(state.a_mu.sum()),
        converged=bool(state.info.get("converged", True)),
        stability_ok=verify_two_sided_stability(played, state).stable,
    )


def run_seed(cfg: ScenarioConfig, seed: int, pool: Optional[SocialTieMatrix] = None) -> list:
    """Every configured algorithm on the same seeded instance."""
    inst = build_instance(cfg, seed, pool)
    out = []
    for alg in cfg.algorithms:
        state, _, played = run_algorithm(inst, alg)
        out.append(measure(inst, alg, state, played))
    return out


def run_scenario(cfg: ScenarioConfig, seed: int) -> RunMetrics:
    """Metrics of the first configured algorithm on one seed."""
    return run_seed(replace(cfg, algorithms=cfg.algorithms[:1]), seed)[0]


# -- aggregation -------------------------------------------------------------

@dataclass
class AggregateReport:
    """One row per (scenario, algorithm): parameters, metric means, 95% half-widths."""

    rows: list
    runs: list

    def row(self, algorithm: str, **params) -> dict:
        for r in self.rows:
            if r["algorithm"] == algorithm and all(r.get(k) == v for k, v in params.items()):
                return r
        raise KeyError((algorithm, params))

    def exit_code(self) -> int:
        checked = [m for m in self.runs if m.algorithm in ("sara", "context_unaware")]
        if any(not m.stability_ok for m in checked):
            return EXIT_UNSTABLE
        if any(not m.converged for m in self.runs if m.algorithm == "sara"):
            return EXIT_NONCONVERGED
        return EXIT_OK

    def __add__(self, other: "AggregateReport") -> "AggregateReport":
        return AggregateReport(self.rows + other.rows, self.runs + other.runs)


def mean_ci(values) -> tuple:
    """Sample mean and normal-approximation 95% half-width."""
    x = np.asarray(values, dtype=float)
    if len(x) == 0:
        return math.nan, math.nan
    half = 1.96 * x.std(ddof=1) / math.sqrt(len(x)) if len(x) > 1 else 0.0
    return float(x.mean()), float(half)


def aggregate(cfg: ScenarioConfig, runs: Sequence[RunMetrics]) -> list:
    rows = []
    for alg in cfg.algorithms:
        mine = [m for m in runs if m.algorithm == alg]
        row = {"algorithm": alg, **cfg.params()}
        cis = {}
        for k in METRICS:
            row[k], cis[f"{k}_ci95"] = mean_ci([float(getattr(m, k)) for m in mine])
        row.update(cis)
        rows.append(row)
    return rows


def _seed_job(args):
    cfg, seed, pool = args
    return run_seed(cfg, seed, pool)


def monte_carlo(cfg: ScenarioConfig, *, workers: Optional[int] = None) -> AggregateReport:
    """All seeds of ``cfg``; results are reduced in seed order, whatever the worker count."""
    pool = tie_pool(cfg)
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, s, pool) for s in cfg.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_seed = list(ex.map(_seed_job, jobs))
    else:
        per_seed = [_seed_job(j) for j in jobs]
    runs = [m for batch in per_seed for m in batch]
    return AggregateReport(aggregate(cfg, runs), runs)


def sweep(cfg: ScenarioConfig, param: str, values: Sequence, **kw) -> AggregateReport:
    """Monte-Carlo reports for each value of one config key, concatenated."""
    if param not in {f.name for f in fields(ScenarioConfig)}:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    report = AggregateReport([], [])
    for v in values:
        point = replace(cfg, **{param: _coerce(param, v)})
        sub = monte_carlo(point, **kw)
        for row in sub.rows:
            row["sweep_param"], row["sweep_value"] = param, v
        report = report + sub
    return report


# -- output ------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_columns(rows: Sequence[dict]) -> list:
    lead = ["algorithm"]
    if rows and "sweep_param" in rows[0]:
        lead += ["sweep_param", "sweep_value"]
    params = list(ScenarioConfig().params())
    return lead + params + list(METRICS) + [f"{k}_ci95" for k in METRICS]


def emit_csv(report: AggregateReport, path) -> None:
    """Scenario parameters, then metric means, then 95% half-widths."""
    cols = report_columns(report.rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in report.rows:
            w.writerow([_fmt(row.get(c, "")) for c in cols])


def emit_runs_csv(runs: Sequence[RunMetrics], path) -> None:
    cols = ["algorithm", "seed"] + list(METRICS)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for m in runs:
            d = asdict(m)
            w.writerow([_fmt(d[c]) for c in cols])


def emit_plot_data(report: AggregateReport, path, x: Optional[str] = None) -> None:
    """Long format: one line per (series, x, metric) with its mean and half-width."""
    rows = report.rows
    if x is None:
        x = "sweep_value" if rows and "sweep_value" in rows[0] else "m_u"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "x_name", "x", "metric", "y", "ci95"])
        for row in rows:
            xname = row.get("sweep_param", x) if x == "sweep_value" else x
            for k in METRICS:
                w.writerow([row["algorithm"], xname, _fmt(row[x]), k, _fmt(row[k]),
                            _fmt(row[f"{k}_ci95"])])


def read_report_csv(path) -> AggregateReport:
    """Rows of an ``emit_csv`` file, numbers parsed back to floats."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k, v in rec.items():
                try:
                    row[k] = int(v) if v.lstrip("-").isdigit() else float(v)
                except ValueError:
                    row[k] = v
            rows.append(row)
    return AggregateReport(rows, [])
