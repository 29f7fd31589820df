"""Monte Carlo experiments: BER and sum rate versus transmit power, AO convergence traces.

Every trial owns a generator seeded by (master seed, power index, trial index),
so results do not depend on how trials are split across worker processes.
Aggregates are sums over per-trial arrays taken in trial order.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import baselines
from .channel import LinkBudget, complex_gaussian, dbm_to_w, draw_channel
from .mpa import MPAConfig
from .optimizer import OptimizerConfig, alternating_optimize
from .oracle import exhaustive_best
from .rates import Allocation, sum_rate_strong, sum_rate_weak
from .receiver import decode_hd
from .scma_core import CodebookSet, canonical_factor_graph, load_codebook, words_to_bits

SCHEMES = ("hd-noma", "scma6", "scma12", "pd-noma12")
METRICS = ("ber_strong", "ber_weak", "ber_all", "sum_rate", "objective")
# with noise disabled the decoders scale their likelihoods by this fraction of sigma^2
NOISELESS_DECODER_SCALE = 1e-6
CSV_HEADER = ("scheme", "power_dbm", "metric", "value", "trials", "seed")
TRACE_HEADER = ("power_dbm", "seed", "trial", "iter", "objective", "stage")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    schemes: tuple = SCHEMES
    power_dbm_min: float = 30.0
    power_dbm_max: float = 40.0
    power_dbm_step: float = 2.0
    trials: int = 2000
    seed: int = 0
    workers: int = 1
    J_s: int = 6
    J_w: int = 6
    K: int = 4
    d_f: int = 2
    bw_hz: float = 1e6
    d_strong_km: float = 0.3
    d_weak_km: float = 0.8
    mpa_iters: int = 6
    mpa_variant: str = "sumprod"
    genie_sic: bool = False
    noiseless: bool = False
    codebook: str | None = None
    penalty: float | None = None
    qos_bps_hz: float | None = None
    tol: float = 1e-4
    max_iters: int = 20
    oracle: bool = False
    p_grid: int = 200

    def __post_init__(self):
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown scheme(s) {bad}; choose from {', '.join(SCHEMES)}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.power_dbm_step <= 0:
            raise ConfigError("power step must be positive")
        if self.power_dbm_max < self.power_dbm_min:
            raise ConfigError("power_dbm_max is below power_dbm_min")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if min(self.bw_hz, self.d_strong_km, self.d_weak_km) <= 0:
            raise ConfigError("bandwidth and distances must be positive")
        if self.tol <= 0 or self.max_iters < 1 or self.p_grid < 2:
            raise ConfigError("tol must be positive, max_iters >= 1, p_grid >= 2")
        try:
            MPAConfig(self.mpa_iters, self.mpa_variant)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def powers_dbm(self) -> np.ndarray:
        n = int(np.floor((self.power_dbm_max - self.power_dbm_min) / self.power_dbm_step + 1e-9)) + 1
        return self.power_dbm_min + self.power_dbm_step * np.arange(n)

    @property
    def mpa(self) -> MPAConfig:
        return MPAConfig(self.mpa_iters, self.mpa_variant)

    def budget(self, power_w: float) -> LinkBudget:
        return LinkBudget(self.bw_hz, self.d_strong_km, self.d_weak_km, power_w)

    def optimizer(self, power_w: float) -> OptimizerConfig:
        return OptimizerConfig(
            max_power=power_w,
            qos_threshold=self.qos_bps_hz,
            penalty_weight=self.penalty,
            d_f_strong=self.d_f,
            d_f_weak=self.d_f,
            inner_tol=self.tol,
            outer_tol=self.tol,
            max_outer_iters=self.max_iters,
        )


@dataclass(frozen=True)
class SweepRow:
    scheme: str
    power_dbm: float
    metric: str
    value: float
    trials: int
    seed: int

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite value for {self.scheme}/{self.metric}")

    def cells(self):
        return (self.scheme, f"{self.power_dbm:.10g}", self.metric, f"{self.value:.10g}", str(self.trials), str(self.seed))


def trial_rng(seed: int, power_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(power_index, trial)))


def _run(fn, tasks, workers: int):
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _chunks(cfg: SimConfig, n_powers: int):
    size = max(1, -(-cfg.trials // (4 * cfg.workers)))
    return [
        (cfg, pi, start, min(start + size, cfg.trials))
        for pi in range(n_powers)
        for start in range(0, cfg.trials, size)
    ]


# -- BER -------------------------------------------------------------------


@dataclass(frozen=True)
class _Systems:
    books: CodebookSet
    scma12: baselines.Scma12
    pd: np.ndarray


def _systems(cfg: SimConfig) -> _Systems:
    books = load_codebook(cfg.codebook)
    if books.K != cfg.K or books.J != cfg.J_s or cfg.J_w != cfg.J_s:
        raise ConfigError(f"codebook is {books.J} users x {books.K} subcarriers; run needs {cfg.J_s} x {cfg.K} per group")
    return _Systems(books, baselines.scma12_system(cfg.K, cfg.d_f, books.M), baselines.pd_noma_codewords(books.M, cfg.K))


# error-count layout per trial: one (strong, weak) pair per scheme
_BER_SLOTS = {s: i for i, s in enumerate(SCHEMES)}


def ber_trial(cfg: SimConfig, systems: _Systems, power_index: int, trial: int) -> np.ndarray:
    """Bit errors (scheme, group) for one channel draw and one codeword per user."""
    P = dbm_to_w(cfg.powers_dbm[power_index])
    p = P / cfg.d_f
    rng = trial_rng(cfg.seed, power_index, trial)
    H = draw_channel(rng, cfg.budget(P), cfg.J_s, cfg.J_w, cfg.K)
    M = systems.books.M
    bps = int(np.log2(M))
    ws = rng.integers(0, M, cfg.J_s)
    ww = rng.integers(0, M, cfg.J_w)
    noise = np.zeros(cfg.K, complex) if cfg.noiseless else complex_gaussian(rng, cfg.K, H.noise_variance)
    noise2 = np.zeros(cfg.K, complex) if cfg.noiseless else complex_gaussian(rng, cfg.K, H.noise_variance)
    nv = H.noise_variance * (NOISELESS_DECODER_SCALE if cfg.noiseless else 1.0)
    bits_s, bits_w = words_to_bits(ws, bps), words_to_bits(ww, bps)
    js, jw = np.arange(cfg.J_s), np.arange(cfg.J_w)
    cw = systems.books.codewords
    out = np.zeros((len(SCHEMES), 2), dtype=np.int64)

    def errors(dec_s, dec_w):
        return (
            int(np.sum(words_to_bits(dec_s, bps) != bits_s)),
            int(np.sum(words_to_bits(dec_w, bps) != bits_w)),
        )

    sig_s = np.sqrt(p) * np.sum(H.strong * cw[js, ws], axis=0)
    sig_w = np.sqrt(p) * np.sum(H.weak * cw[jw, ww], axis=0)
    if "hd-noma" in cfg.schemes:
        y = sig_s + sig_w + noise
        genie = cw[js, ws] if cfg.genie_sic else None
        d = decode_hd(y, replace(H, noise_variance=nv), systems.books, systems.books, p, p, mpa=cfg.mpa, genie_strong=genie)
        out[_BER_SLOTS["hd-noma"]] = errors(d.strong.decisions, d.weak.decisions)
    if "scma6" in cfg.schemes:
        # the two groups as separate six-user systems on their own resources
        ds = baselines.decode_scma(sig_s + noise, systems.books, H.strong, p, nv, cfg.mpa)
        dw = baselines.decode_scma(sig_w + noise2, systems.books, H.weak, p, nv, cfg.mpa)
        out[_BER_SLOTS["scma6"]] = errors(ds.decisions, dw.decisions)
    if "scma12" in cfg.schemes:
        b12 = systems.scma12.books.codewords
        words = np.concatenate([ws, ww])
        h12 = baselines.stacked_channels(H)
        y = np.sqrt(p) * np.sum(h12 * b12[np.arange(len(words)), words], axis=0) + noise
        d = baselines.decode_scma(y, systems.scma12.books, h12, p, nv, cfg.mpa)
        out[_BER_SLOTS["scma12"]] = errors(d.decisions[: cfg.J_s], d.decisions[cfg.J_s:])
    if "pd-noma12" in cfg.schemes:
        words = np.concatenate([ws, ww])
        h12 = baselines.stacked_channels(H)
        y = np.sqrt(p) * np.sum(h12 * systems.pd[words], axis=0) + noise
        dec = baselines.decode_pd_noma(y, h12, p, nv, systems.pd)
        out[_BER_SLOTS["pd-noma12"]] = errors(dec[: cfg.J_s], dec[cfg.J_s:])
    return out


def _ber_chunk(task):
    cfg, pi, start, stop = task
    systems = _systems(cfg)
    return pi, np.stack([ber_trial(cfg, systems, pi, t) for t in range(start, stop)])


def ber_counts(cfg: SimConfig) -> np.ndarray:
    """Per-trial bit errors, shape (powers, trials, schemes, 2)."""
    _systems(cfg)  # fail fast on a bad codebook
    powers = cfg.powers_dbm
    results = _run(_ber_chunk, _chunks(cfg, len(powers)), cfg.workers)
    per_power = [[] for _ in powers]
    for pi, arr in results:
        per_power[pi].append(arr)
    return np.stack([np.concatenate(chunks) for chunks in per_power])


def run_ber_experiment(cfg: SimConfig) -> list[SweepRow]:
    counts = ber_counts(cfg)
    bps = int(np.log2(load_codebook(cfg.codebook).M))
    bits_s = cfg.trials * cfg.J_s * bps
    bits_w = cfg.trials * cfg.J_w * bps
    rows = []
    for pi, dbm in enumerate(cfg.powers_dbm):
        for scheme in cfg.schemes:
            e_s, e_w = (int(v) for v in counts[pi, :, _BER_SLOTS[scheme]].sum(axis=0))
            for metric, value in (
                ("ber_strong", e_s / bits_s),
                ("ber_weak", e_w / bits_w),
                ("ber_all", (e_s + e_w) / (bits_s + bits_w)),
            ):
                rows.append(SweepRow(scheme, float(dbm), metric, value, cfg.trials, cfg.seed))
    return rows


# -- sum rate --------------------------------------------------------------

# per-trial rate columns; hd-noma has an objective (SR^s) and a total
RATE_COLUMNS = (
    ("hd-noma", "objective"),
    ("hd-noma", "sum_rate"),
    ("hd-noma-equal", "objective"),
    ("hd-noma-equal", "sum_rate"),
    ("hd-noma-oracle", "objective"),
    ("hd-noma-oracle", "sum_rate"),
    ("scma6", "sum_rate"),
    ("scma12", "sum_rate"),
    ("pd-noma12", "sum_rate"),
)


def sumrate_trial(cfg: SimConfig, power_index: int, trial: int) -> np.ndarray:
    P = dbm_to_w(cfg.powers_dbm[power_index])
    H = draw_channel(trial_rng(cfg.seed, power_index, trial), cfg.budget(P), cfg.J_s, cfg.J_w, cfg.K)
    out = np.full(len(RATE_COLUMNS), np.nan)
    col = {c: i for i, c in enumerate(RATE_COLUMNS)}
    if "hd-noma" in cfg.schemes:
        ocfg = cfg.optimizer(P)
        res = alternating_optimize(H, ocfg)
        out[col["hd-noma", "objective"]] = res.objective
        out[col["hd-noma", "sum_rate"]] = res.objective + res.weak_rate
        Fs = canonical_factor_graph(cfg.J_s, cfg.K, cfg.d_f)
        Fw = canonical_factor_graph(cfg.J_w, cfg.K, cfg.d_f)
        eq = Allocation(P / cfg.d_f, P / cfg.d_f, Fs, Fw)
        out[col["hd-noma-equal", "objective"]] = sum_rate_strong(eq, H)
        out[col["hd-noma-equal", "sum_rate"]] = sum_rate_strong(eq, H) + sum_rate_weak(eq, H)
        if cfg.oracle:
            o = exhaustive_best(H, ocfg, cfg.p_grid)
            out[col["hd-noma-oracle", "objective"]] = o.objective
            out[col["hd-noma-oracle", "sum_rate"]] = o.objective + o.weak_rate
    if "scma6" in cfg.schemes:
        out[col["scma6", "sum_rate"]] = baselines.sum_rate_scma6(H, P, cfg.d_f)
    if "scma12" in cfg.schemes:
        out[col["scma12", "sum_rate"]] = baselines.sum_rate_scma12(H, P, cfg.d_f)
    if "pd-noma12" in cfg.schemes:
        out[col["pd-noma12", "sum_rate"]] = baselines.sum_rate_pd_noma(H, P)
    return out


def _rate_chunk(task):
    cfg, pi, start, stop = task
    return pi, np.stack([sumrate_trial(cfg, pi, t) for t in range(start, stop)])


def sumrate_values(cfg: SimConfig) -> np.ndarray:
    """Per-trial rates, shape (powers, trials, len(RATE_COLUMNS)); NaN where not run."""
    powers = cfg.powers_dbm
    results = _run(_rate_chunk, _chunks(cfg, len(powers)), cfg.workers)
    per_power = [[] for _ in powers]
    for pi, arr in results:
        per_power[pi].append(arr)
    return np.stack([np.concatenate(chunks) for chunks in per_power])


def run_sumrate_sweep(cfg: SimConfig) -> list[SweepRow]:
    vals = sumrate_values(cfg)
    rows = []
    for pi, dbm in enumerate(cfg.powers_dbm):
        for ci, (scheme, metric) in enumerate(RATE_COLUMNS):
            column = vals[pi, :, ci]
            if np.all(np.isnan(column)):
                continue
            rows.append(SweepRow(scheme, float(dbm), metric, float(np.mean(column)), cfg.trials, cfg.seed))
    return rows


# -- convergence -----------------------------------------------------------


def _trace_chunk(task):
    cfg, pi, start, stop = task
    P = dbm_to_w(cfg.powers_dbm[pi])
    out = []
    for t in range(start, stop):
        H = draw_channel(trial_rng(cfg.seed, pi, t), cfg.budget(P), cfg.J_s, cfg.J_w, cfg.K)
        res = alternating_optimize(H, cfg.optimizer(P))
        rows = [(t, n, v, s) for n, v, s in res.trace.rows()]
        rows.append((t, res.trace.outer_iterations, res.objective, "final"))
        out.append(rows)
    return pi, out


def run_convergence_trace(cfg: SimConfig) -> list[tuple]:
    """Rows (power_dbm, seed, trial, iter, objective, stage); the last row per run is the binary result."""
    powers = cfg.powers_dbm
    results = _run(_trace_chunk, _chunks(cfg, len(powers)), cfg.workers)
    rows = []
    for pi, runs in results:
        for run in runs:
            rows.extend((float(powers[pi]), cfg.seed, t, n, v, s) for t, n, v, s in run)
    return rows


# -- output and config files -----------------------------------------------


def rows_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def trace_to_csv(rows: list[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for dbm, seed, trial, n, v, stage in rows:
        w.writerow((f"{dbm:.10g}", seed, trial, n, f"{v:.10g}", stage))
    return buf.getvalue()


def write_text(text: str, out: str | Path | None):
    if out is None or str(out) == "-":
        print(text, end="")
    else:
        Path(out).write_text(text)


_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment; dashes in keys become underscores."""
    types = {f.name: f.type for f in fields(SimConfig)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "scheme":
            key = "schemes"
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = coerce(key, value)
    return out


def coerce(key: str, value: str):
    kind = {f.name: f.type for f in fields(SimConfig)}[key]
    try:
        if key == "schemes":
            return parse_schemes(value)
        if kind == "bool":
            return _BOOL[value.lower()]
        if kind == "int":
            return int(value, 0)
        if kind == "float":
            return float(value)
        if kind == "float | None":
            return None if value.lower() in ("", "none", "auto") else float(value)
        return value or None
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value {value!r} for {key}") from exc


def parse_schemes(value: str) -> tuple:
    if value.strip() == "all":
        return SCHEMES
    return tuple(s.strip() for s in value.split(",") if s.strip())


def load_config(path: str | Path | None, overrides: dict | None = None, base: SimConfig | None = None) -> SimConfig:
    values = asdict(base or SimConfig())
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        values.update(parse_config_text(text))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values["schemes"] = tuple(values["schemes"])
    return SimConfig(**values)


def with_powers(cfg: SimConfig, powers: list[float]) -> SimConfig:
    """Single-point or evenly spaced power lists as min/max/step."""
    powers = sorted(powers)
    step = powers[1] - powers[0] if len(powers) > 1 else 1.0
    return replace(cfg, power_dbm_min=powers[0], power_dbm_max=powers[-1], power_dbm_step=step)
