"""Named experiments over the simulation stack, with reproducible seeding,
optional process-level parallelism, and machine-readable result rows.

An experiment run is a pure function of ``(config, master_seed)``: replicates
and estimator chunks draw from counter-based substreams keyed by their index,
merged results are sorted before aggregation, and the emitted rows carry a
digest of the canonicalized config.  Worker count changes wall time only.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cluster_stats import (compute_cluster_extent, dominant_value_cdf,
                            exceedance_count)
from .errors import ConfigError, EmptyResult
from .failure_sets import FailureSet, degenerate_atom_rays, mu_overlap
from .moving_average import ModelSpec, operator_norm, validate_model
from .rare_event import (CHUNK_TRIALS, IndexSet, WindowKit,
                         condition_by_rejection, equivalents_chunk_counts,
                         equivalents_report, plant_single_jump,
                         single_vector_event_prob, symdiff_chunk_counts,
                         symdiff_ratio_from_counts, two_jump_pair_sum,
                         window_event_chunk_counts)
from .rng import CHUNK_SPACE, AUX_SPACE, substream
from .stat_tests import ks_one_sample, prokhorov_bound

EXPERIMENTS = ("cluster_law", "point_process", "equivalents",
               "symmetric_difference", "two_jump", "concentration")

REPLICATES_PER_TASK = 64


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description."""

    model: ModelSpec
    gamma: FailureSet
    experiment: str
    psi: FailureSet | None = None
    n_list: list = field(default_factory=lambda: [400])
    replicates: int = 1000
    master_seed: int = 0
    workers: int = 1
    output_path: str | None = None
    M: float = 2.0
    delta: float | None = None
    theta: float = 0.0
    censor_cap_factor: float = 2.0
    index_set: IndexSet = field(default_factory=IndexSet.full)
    conditioning: str = "rejection"           # rejection | planted
    max_attempts: int = 200_000

    def __post_init__(self):
        if self.psi is None:
            self.psi = self.gamma
        if self.delta is None:
            self.delta = 0.1 * self.gamma.delta0

    # -- construction ---------------------------------------------------------

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        try:
            return ExperimentConfig._from_dict(raw)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @staticmethod
    def _from_dict(raw: dict) -> "ExperimentConfig":
        for key in ("model", "gamma", "experiment"):
            if key not in raw:
                raise ConfigError(f"missing required config key: {key!r}")
        model = ModelSpec.from_config_dict(raw["model"])
        gamma = FailureSet.from_config_dict(raw["gamma"])
        psi = FailureSet.from_config_dict(raw["psi"]) if "psi" in raw else None
        kwargs = {}
        for key in ("n_list", "replicates", "master_seed", "workers",
                    "output_path", "M", "delta", "theta", "censor_cap_factor",
                    "conditioning", "max_attempts"):
            if key in raw:
                kwargs[key] = raw[key]
        if "index_set" in raw:
            kwargs["index_set"] = IndexSet.parse(raw["index_set"])
        return ExperimentConfig(model=model, gamma=gamma, psi=psi,
                                experiment=raw["experiment"], **kwargs)

    @staticmethod
    def from_toml(path: str) -> "ExperimentConfig":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"malformed config file {path}: {exc}") from exc
        return ExperimentConfig.from_dict(raw)

    # -- validation and identity ----------------------------------------------

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, "
                              f"got {self.experiment!r}")
        if not self.n_list:
            raise ConfigError("n_list must be nonempty")
        if any(int(n) < 1 for n in self.n_list):
            raise ConfigError("window lengths must be positive")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0.0 <= self.theta < 1.0:
            raise ConfigError("theta must lie in [0, 1)")
        if self.conditioning not in ("rejection", "planted"):
            raise ConfigError("conditioning must be 'rejection' or 'planted'")
        for name in ("gamma", "psi"):
            fset = getattr(self, name)
            if fset.dimension != self.model.dimension:
                raise ConfigError(f"{name} dimension {fset.dimension} != model "
                                  f"dimension {self.model.dimension}")
        try:
            validate_model(self.model)
        except Exception as exc:
            raise ConfigError(f"model validation failed: {exc}") from exc
        agg = self.model.aggregate
        atoms = self.model.noise.spectral.atoms
        for name in ("gamma", "psi"):
            bad = degenerate_atom_rays(agg, atoms, getattr(self, name))
            if bad:
                raise ConfigError(
                    f"{name}: spectral atoms {bad} meet the set boundary "
                    f"degenerately (tangent or near-parallel ray)")

    def canonical_dict(self) -> dict:
        return {"experiment": self.experiment,
                "model": self.model.to_config_dict(),
                "gamma": self.gamma.to_config_dict(),
                "psi": self.psi.to_config_dict(),
                "n_list": [int(n) for n in self.n_list],
                "replicates": int(self.replicates),
                "master_seed": int(self.master_seed),
                "M": float(self.M), "delta": float(self.delta),
                "theta": float(self.theta),
                "censor_cap_factor": float(self.censor_cap_factor),
                "index_set": self.index_set.describe(),
                "conditioning": self.conditioning,
                "max_attempts": int(self.max_attempts)}

    def digest(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True,
                          separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class ResultRow:
    """One statistic from one experiment at one window length."""

    experiment: str
    n: int
    stat: str
    value: float
    err: float | None
    pvalue: float | None
    seed: int
    runtime_ms: int
    config_hash: str


CSV_COLUMNS = ["experiment", "n", "stat", "value", "err", "pvalue", "seed",
               "runtime_ms", "config_hash"]


# -- runner -------------------------------------------------------------------

def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Dispatch the configured experiment and return sorted result rows."""
    config.validate()
    digest = config.digest()
    rows: list[ResultRow] = []
    if config.experiment == "concentration":
        t0 = time.perf_counter()
        stats = _run_concentration(config)
        ms = int(1000 * (time.perf_counter() - t0))
        rows += [_row(config, digest, n, stat, ms) for n, stat in stats]
    else:
        runner = {"cluster_law": _run_conditioned,
                  "point_process": _run_conditioned,
                  "equivalents": _run_equivalents,
                  "symmetric_difference": _run_symdiff,
                  "two_jump": _run_two_jump}[config.experiment]
        for n in config.n_list:
            t0 = time.perf_counter()
            stats = runner(config, int(n))
            ms = int(1000 * (time.perf_counter() - t0))
            rows += [_row(config, digest, int(n), stat, ms) for stat in stats]
    rows.sort(key=lambda r: (r.experiment, r.n, r.stat))
    return rows


def _row(config, digest, n, stat, ms) -> ResultRow:
    name, value, err, pvalue = stat
    return ResultRow(experiment=config.experiment, n=n, stat=name,
                     value=float(value),
                     err=None if err is None else float(err),
                     pvalue=None if pvalue is None else float(pvalue),
                     seed=config.master_seed, runtime_ms=ms, config_hash=digest)


# -- conditioned experiments (cluster_law / point_process) ---------------------

def _run_conditioned(config: ExperimentConfig, n: int):
    cap = int(round(config.censor_cap_factor * n))
    payload = {"config": config.canonical_dict(), "n": n, "cap": cap}
    results = _parallel_tasks(config, _replicate_task, payload, config.replicates,
                              REPLICATES_PER_TASK)
    recs = [r for task in results for r in task]
    recs.sort(key=lambda r: r["replicate"])

    spec, gamma, psi = _rebuild(config.canonical_dict())
    stats = []
    attempts = np.array([r["attempts"] for r in recs])
    stats.append(("mean_attempts", attempts.mean(), None, None))
    stats.append(("acceptance_rate", len(recs) / attempts.sum(), None, None))
    stats.append(("acceptance_rate_estimate",
                  n * single_vector_event_prob(spec, gamma, n), None, None))
    censored = np.array([r["censored"] for r in recs])
    stats.append(("censored_fraction", censored.mean(), None, None))

    if config.experiment == "cluster_law":
        ok = ~censored
        jp = np.array([r["j_plus"] for r in recs])[ok]
        jm = np.array([r["j_minus"] for r in recs])[ok]
        d_ks, p_ks = ks_one_sample(jp / n, lambda x: np.clip(x, 0.0, 1.0))
        stats.append(("extent_ks_uniform_D", d_ks, None, None))
        stats.append(("extent_ks_uniform_pvalue", p_ks, None, p_ks))
        sums = (jp - jm) / n
        stats.append(("extent_sum_mean", sums.mean(),
                      sums.std(ddof=1) / math.sqrt(len(sums)), None))
        stats.append(("extent_sum_var", sums.var(ddof=1), None, None))
        jpp = np.array([r["j_plus_psi"] if r["j_plus_psi"] is not None else -1
                        for r in recs])
        zero_frac = (jpp == 0).mean()
        stats.append(("psi_zero_fraction", zero_frac,
                      math.sqrt(zero_frac * (1 - zero_frac) / len(recs)), None))
        mu, _ = mu_overlap(spec.noise, spec.aggregate, gamma, psi)
        stats.append(("psi_zero_target", 1.0 - mu, None, None))
    else:
        locs = np.array([r["dominant_loc"] for r in recs])
        d_loc, p_loc = ks_one_sample(locs, lambda x: np.clip(x, 0.0, 1.0))
        stats.append(("dominant_loc_ks_D", d_loc, None, None))
        stats.append(("dominant_loc_ks_pvalue", p_loc, None, p_loc))
        outside = np.array([not (0 <= r["dominant_index"] < n) for r in recs])
        stats.append(("dominant_outside_window_fraction", outside.mean(), None, None))
        if spec.dimension == 1:
            mags = np.array([r["dominant_value"][0] for r in recs])
            cdf = dominant_value_cdf(spec, gamma)
            d_mag, p_mag = ks_one_sample(mags, cdf)
            stats.append(("dominant_mag_ks_D", d_mag, None, None))
            stats.append(("dominant_mag_ks_pvalue", p_mag, None, p_mag))
        ones = np.array([r["exceed_count"] == 1 for r in recs])
        stats.append(("single_exceedance_fraction", ones.mean(),
                      math.sqrt(max(ones.mean() * (1 - ones.mean()), 1e-12)
                                / len(recs)), None))
    return stats


def _replicate_task(payload: dict, lo: int, hi: int):
    cfg = payload["config"]
    n, cap = payload["n"], payload["cap"]
    spec, gamma, psi = _rebuild(cfg)
    kit = WindowKit(spec, n)
    threshold = 0.5 * n * gamma.delta0 / operator_norm(spec.aggregate)
    # extraction windows cannot exceed the simulated scan range
    m_extract = min(cfg["M"], cfg["censor_cap_factor"])
    out = []
    for r in range(lo, hi):
        rng = substream(cfg["master_seed"], r)
        if cfg["conditioning"] == "rejection":
            sample = condition_by_rejection(spec, gamma, n, (-cap, cap),
                                            max_attempts=cfg["max_attempts"],
                                            rng=rng, kit=kit)
        else:
            attempts = 0
            while True:
                sample = plant_single_jump(spec, gamma, n, (-cap, cap),
                                           rng=rng, kit=kit)
                attempts += 1
                if sample.membership_ok:
                    break
                if attempts >= 1000:
                    raise RuntimeError("planted sampler failed 1000 times")
            sample = _with_attempts(sample, attempts)
        rec = compute_cluster_extent(sample, psi, censor_cap=cap, M=m_extract)
        out.append({"replicate": r,
                    "j_plus": rec.j_plus, "j_minus": rec.j_minus,
                    "j_plus_psi": rec.j_plus_psi, "j_minus_psi": rec.j_minus_psi,
                    "censored": rec.censored,
                    "dominant_index": rec.dominant_index,
                    "dominant_loc": rec.dominant_location,
                    "dominant_value": rec.dominant_value.tolist(),
                    "attempts": sample.attempts,
                    "exceed_count": exceedance_count(sample, threshold,
                                                     M=min(2.0, cfg["censor_cap_factor"]))})
    return out


def _with_attempts(sample, attempts):
    from dataclasses import replace
    return replace(sample, attempts=attempts)


# -- estimator experiments ------------------------------------------------------

def _run_equivalents(config: ExperimentConfig, n: int):
    payload = {"config": config.canonical_dict(), "n": n, "mode": "equivalents"}
    counts = _merge_counts(_parallel_tasks(config, _chunk_task, payload,
                                           config.replicates, CHUNK_TRIALS))
    spec, gamma, _ = _rebuild(config.canonical_dict())
    report = equivalents_report(spec, gamma, n, counts, config.index_set,
                                config.M, config.delta)
    stats = []
    for name in ("q1", "q2", "q3", "q4", "q5", "q3_empirical"):
        est, se = getattr(report, name)
        stats.append((name, est, se, None))
    for name, (val, se) in sorted(report.ratios.items()):
        stats.append((f"ratio_{name.replace('/', '_')}", val, se, None))
    return stats


def _run_symdiff(config: ExperimentConfig, n: int):
    payload = {"config": config.canonical_dict(), "n": n, "mode": "symdiff"}
    counts = _merge_counts(_parallel_tasks(config, _chunk_task, payload,
                                           config.replicates, CHUNK_TRIALS))
    spec, gamma, _ = _rebuild(config.canonical_dict())
    ratio, se = symdiff_ratio_from_counts(spec, gamma, n, counts)
    return [("symdiff_ratio", ratio, se, None),
            ("theta", config.theta, None, None)]


def _run_two_jump(config: ExperimentConfig, n: int):
    payload = {"config": config.canonical_dict(), "n": n, "mode": "window_event"}
    counts = _merge_counts(_parallel_tasks(config, _chunk_task, payload,
                                           config.replicates, CHUNK_TRIALS))
    spec, gamma, _ = _rebuild(config.canonical_dict())
    hits, trials = int(counts[0]), int(counts[1])
    den = hits / trials
    den_se = math.sqrt(den * (1 - den) / trials)
    num = two_jump_pair_sum(spec, n, config.M, config.delta)
    ratio = num / den if den > 0 else math.inf
    se = num * den_se / (den * den) if den > 0 else math.inf
    return [("two_jump_ratio", ratio, se, None),
            ("two_jump_pair_sum", num, None, None),
            ("window_event_prob", den, den_se, None)]


def _chunk_task(payload: dict, lo: int, hi: int):
    cfg = payload["config"]
    n = payload["n"]
    spec, gamma, _ = _rebuild(cfg)
    kit = WindowKit(spec, n)
    mode = payload["mode"]
    chunk_id = lo // CHUNK_TRIALS
    rng = substream(cfg["master_seed"], CHUNK_SPACE + chunk_id)
    trials = hi - lo
    if mode == "equivalents":
        idx = IndexSet.parse(cfg["index_set"])
        return equivalents_chunk_counts(kit, gamma, n, idx.size(n), cfg["M"],
                                        cfg["delta"], trials, rng)
    if mode == "symdiff":
        return symdiff_chunk_counts(kit, gamma, n, cfg["theta"], trials, rng)
    return window_event_chunk_counts(kit, gamma, n, trials, rng)


def _merge_counts(task_results) -> np.ndarray:
    total = None
    for counts in task_results:
        total = counts.copy() if total is None else total + counts
    return total


# -- concentration experiment ----------------------------------------------------

def _run_concentration(config: ExperimentConfig, n_configs: int = 10,
                       trials: int = 1_000_000):
    """Randomized bounded-variable configurations checked against the
    concentration bound; summands are symmetric uniforms on [-a_i, a_i]."""
    stats = []
    violations = 0
    for k in range(n_configs):
        rng = substream(config.master_seed, AUX_SPACE + k)
        m = int(rng.integers(20, 121))
        scales = 10.0 ** rng.uniform(-1.0, 0.0, size=m)
        scales[0] = 1.0                        # one dominant summand
        c = float(scales.max())
        total_var = float((scales ** 2).sum() / 3.0)
        if k % 2 == 0:
            t = float(rng.uniform(3.0, 4.5)) * math.sqrt(total_var)
        else:
            t = float(rng.uniform(2.8, 6.0)) * total_var / c
        bound = prokhorov_bound(c, t, total_var)
        hits = 0
        done = 0
        block = 200_000
        while done < trials:
            b = min(block, trials - done)
            sums = rng.uniform(-1.0, 1.0, size=(b, m)) @ scales
            hits += int((sums > t).sum())
            done += b
        emp = hits / trials
        bad = int(emp > bound)
        violations += bad
        stats.append((m, (f"cfg{k:02d}_bound", bound, None, None)))
        stats.append((m, (f"cfg{k:02d}_empirical", emp,
                          math.sqrt(emp * (1 - emp) / trials), None)))
        stats.append((m, (f"cfg{k:02d}_violation", bad, None, None)))
    stats.append((0, ("violations_total", violations, None, None)))
    return stats


# -- task scheduling --------------------------------------------------------------

def _parallel_tasks(config: ExperimentConfig, fn, payload: dict, total: int,
                    per_task: int):
    """Split  [0, total) into fixed-size ranges and map `fn` over them.

    Fixed range boundaries keep substream indices independent of the worker
    count; results come back ordered by range start.
    """
    ranges = [(lo, min(lo + per_task, total)) for lo in range(0, total, per_task)]
    if config.workers <= 1 or len(ranges) == 1:
        return [fn(payload, lo, hi) for lo, hi in ranges]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = [pool.submit(fn, payload, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]


def _rebuild(cfg: dict):
    spec = ModelSpec.from_config_dict(cfg["model"])
    gamma = FailureSet.from_config_dict(cfg["gamma"])
    psi = FailureSet.from_config_dict(cfg["psi"])
    return spec, gamma, psi


# -- reports -----------------------------------------------------------------------

def emit_report(rows: list[ResultRow], format: str = "csv",
                path: str | None = None) -> str:
    """Serialize rows as csv / json / summary text; optionally write to `path`.

    Summary mode judges rows that carry a p-value (PASS when p > 0.01) and
    violation counters (PASS when zero); it reports FAIL lines for the rest
    to scan by eye.  Returns the serialized text.
    """
    if not rows:
        raise EmptyResult("no result rows to emit")
    if format == "csv":
        text = _to_csv(rows)
    elif format == "json":
        text = json.dumps([_row_dict(r) for r in rows], indent=2) + "\n"
    elif format == "summary":
        text = summarize(rows)[0]
    else:
        raise ValueError(f"unknown report format {format!r}")
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _row_dict(r: ResultRow) -> dict:
    return {"experiment": r.experiment, "n": r.n, "stat": r.stat,
            "value": r.value, "err": r.err, "pvalue": r.pvalue,
            "seed": r.seed, "runtime_ms": r.runtime_ms,
            "config_hash": r.config_hash}


def _fmt(x) -> str:
    return "" if x is None else repr(x)


def _to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        buf.write(",".join([r.experiment, str(r.n), r.stat, repr(r.value),
                            _fmt(r.err), _fmt(r.pvalue), str(r.seed),
                            str(r.runtime_ms), r.config_hash]) + "\n")
    return buf.getvalue()


def parse_csv(text: str) -> list[ResultRow]:
    """Inverse of the csv emitter (used for round-trip checks and tooling)."""
    lines = text.strip().split("\n")
    if lines[0] != ",".join(CSV_COLUMNS):
        raise ValueError("unexpected result CSV header")
    out = []
    for line in lines[1:]:
        parts = line.split(",")
        out.append(ResultRow(
            experiment=parts[0], n=int(parts[1]), stat=parts[2],
            value=float(parts[3]),
            err=None if parts[4] == "" else float(parts[4]),
            pvalue=None if parts[5] == "" else float(parts[5]),
            seed=int(parts[6]), runtime_ms=int(parts[7]), config_hash=parts[8]))
    return out


def summarize(rows, p_floor: float = 0.01) -> tuple[str, bool]:
    """Pass/fail text for judgeable rows; returns (text, any_fail)."""
    lines = []
    any_fail = False
    for r in rows:
        verdict = ""
        if r.pvalue is not None:
            ok = r.pvalue > p_floor
            verdict = "PASS" if ok else "FAIL"
            any_fail |= not ok
        elif r.stat.endswith("violation") or r.stat == "violations_total":
            ok = r.value == 0
            verdict = "PASS" if ok else "FAIL"
            any_fail |= not ok
        err = f" +/- {r.err:.3g}" if r.err is not None else ""
        pv = f"  p={r.pvalue:.4g}" if r.pvalue is not None else ""
        lines.append(f"[{r.experiment} n={r.n}] {r.stat} = {r.value:.6g}{err}{pv}"
                     f"{('  ' + verdict) if verdict else ''}")
    return "\n".join(lines) + "\n", any_fail
