"""Noise model, Monte-Carlo revival trials and the experiment campaigns.

Every trial draws its randomness from ``SeedSequence([seed, point, trial])``
split into independent streams for topology, flags and noise, so results do
not depend on how trials are scheduled across worker threads.
"""

from __future__ import annotations

import io
import itertools
import logging
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from . import dynamics as dyn
from .numtheory import log_lcm, necklace_count, psi_prediction, random_aperiodic
from .state import BlockLabels, SpinState
from .topology import (
    Network,
    add_adversarial_edges,
    dense_network,
    mark_anti_majority,
    sparse_network,
)

log = logging.getLogger(__name__)

EXPERIMENTS = ("fig1a", "fig1b", "adversarial_nodes", "global_convergence", "lcm_growth", "period_law")
DEFAULT_DELTA = 1.0 - math.exp(-2.0)


@dataclass(frozen=True)
class NoiseSpec:
    p: float
    seed: Any = None

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"flip probability must lie in [0, 1], got {self.p}")


def _flip(spins: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    flips = rng.random(spins.size) < p
    return np.where(flips, -spins, spins).astype(np.int8)


def flip_noise(x: SpinState, spec: NoiseSpec, rng: np.random.Generator | None = None) -> SpinState:
    """Negate every spin independently with probability ``spec.p``."""
    gen = rng if rng is not None else np.random.default_rng(spec.seed)
    return SpinState._from_spins_unchecked(_flip(x.spins(), spec.p, gen))


@dataclass(frozen=True)
class TrialRecord:
    revived: bool
    T: int | None
    phase: int | None
    ties: int
    flips: int


def trial_revival(
    net: Network,
    orbit: dyn.ReferenceOrbit,
    spec: NoiseSpec,
    horizon: int | None = None,
    mode: str = "exact",
    k: int = 0,
    ignore=None,
    window: int | None = None,
    rng: np.random.Generator | None = None,
) -> TrialRecord:
    """Perturb ``orbit.state_at(0)`` and check revival within ``horizon`` (default: longest cycle)."""
    if net.partition != orbit.partition:
        raise ValueError("network and orbit use different partitions")
    if horizon is None:
        horizon = max(orbit.partition.cycle_lengths)
    gen = rng if rng is not None else np.random.default_rng(spec.seed)
    clean = orbit.spins_at(0)
    noisy = _flip(clean, spec.p, gen)
    flips = int(np.count_nonzero(noisy != clean))
    if mode == "exact":
        T, phase, ties = dyn._run_exact(net, orbit, noisy, horizon)
        return TrialRecord(T is not None, T, phase, ties, flips)
    if mode == "weak":
        keep = dyn._keep_mask(orbit.partition, ignore)
        res, ties = dyn._run_weak(net, orbit, noisy, k, horizon, keep, window)
        return TrialRecord(res.tracked, res.T, res.s, ties, flips)
    raise ValueError(f"unknown mode {mode!r}")


def _parse_lengths(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())


@dataclass
class CampaignConfig:
    """All knobs of a campaign; unused keys are ignored by a given experiment.

    Units: ``p_values`` and ``delta`` are probabilities in [0, 1]; lengths,
    ``d_values``, ``h``, ``k_values``, ``counts``, ``horizon`` and ``window``
    are counts of blocks, neurons, edges or synchronous steps.
    """

    experiment: str
    seed: int
    lengths: tuple[int, ...] = ()
    d_values: tuple[int, ...] = ()
    h: int = 3
    p_values: tuple[float, ...] = ()
    k_values: tuple[int, ...] = ()
    counts: tuple[int, ...] = ()
    trials: int = 50
    horizon: int | None = None
    window: int | None = None
    tolerance: int = 0
    labels: str = "plus"
    kind: str = "sparse"
    criterion: str = ""
    exhaustive: bool = False
    resample_topology: bool = True
    m_values: tuple[int, ...] = ()
    b: int | None = None
    b_exponent: float = 0.3
    delta: float = DEFAULT_DELTA
    repetitions: int = 20
    full_range: bool = False
    length_sets: tuple[tuple[int, ...], ...] = ()
    random_sets: int = 0
    max_total: int = 24
    label_limit: int = 0
    threads: int = 1
    record_timing: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        for k, v in _DEFAULTS.get(self.experiment, {}).items():
            if not getattr(self, k):
                setattr(self, k, v)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if any(not 0.0 <= p <= 1.0 for p in self.p_values):
            raise ValueError("every p must lie in [0, 1]")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.labels not in ("plus", "random"):
            raise ValueError("labels must be 'plus' or 'random'")
        if self.kind not in ("sparse", "dense"):
            raise ValueError("kind must be 'sparse' or 'dense'")

    def as_dict(self) -> dict:
        return asdict(self)


_DEFAULTS: dict[str, dict[str, Any]] = {
    "fig1a": {"lengths": (200,), "d_values": (250, 500, 1000, 2000), "p_values": (0.1, 0.3, 0.4)},
    "fig1b": {"lengths": (50, 75), "d_values": (2000,), "k_values": (0, 10, 50), "p_values": (0.1, 0.3, 0.45)},
    "adversarial_nodes": {"lengths": (200,), "d_values": (2000,), "counts": (0, 10, 50), "p_values": (0.45,)},
    "global_convergence": {"lengths": (20,), "d_values": (100, 1000, 10000)},
    "lcm_growth": {"m_values": (1000, 10000)},
    "period_law": {"length_sets": ((3, 4), (5,), (2, 3, 5)), "d_values": (1,)},
}


def config_from_mapping(raw: dict[str, str], source: str = "<config>") -> CampaignConfig:
    """Build a config from string values, reporting problems with their key path."""
    kinds = {f.name: f.type for f in fields(CampaignConfig)}
    out: dict[str, Any] = {}
    for key, text in raw.items():
        if key not in kinds:
            raise ConfigError(f"{source}: unknown key '{key}'")
        typ = kinds[key]
        try:
            out[key] = _convert(typ, text)
        except ValueError as exc:
            raise ConfigError(f"{source}: key '{key}': {exc}") from None
    for req in ("experiment", "seed"):
        if req not in out:
            raise ConfigError(f"{source}: missing required key '{req}'")
    try:
        return CampaignConfig(**out)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


class ConfigError(ValueError):
    pass


def _convert(typ: str, text: str):
    text = text.strip()
    if typ == "str":
        return text
    if typ == "int":
        return int(text)
    if typ == "bool":
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if typ == "float":
        return float(text)
    if typ == "int | None":
        return None if text.lower() in ("", "none", "default") else int(text)
    if typ == "tuple[int, ...]":
        return _parse_lengths(text)
    if typ == "tuple[float, ...]":
        return tuple(float(v) for v in text.split(",") if v.strip())
    if typ == "tuple[tuple[int, ...], ...]":
        return tuple(tuple(int(v) for v in grp.split(",")) for grp in text.split(";") if grp.strip())
    raise ValueError(f"unsupported type {typ}")


@dataclass
class CampaignTable:
    experiment: str
    param_names: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    seed: int = 0
    record_timing: bool = False

    COLUMNS_TAIL = ("p", "trials", "revived", "revival_rate", "stderr", "mean_T", "ties_total", "seed", "wall_ms")

    @property
    def header(self) -> tuple[str, ...]:
        return ("experiment", *self.param_names, *self.COLUMNS_TAIL)

    def add(self, params: dict, p, trials: int, revived: int, times: Sequence[int], ties: int, wall_ms: float):
        rate = revived / trials
        stderr = math.sqrt(rate * (1.0 - rate) / trials)
        if revived == 0:
            log.warning("%s %s p=%s: zero successes, stderr reported as 0", self.experiment, params, p)
        row = {"experiment": self.experiment, **params}
        row.update(
            p=p,
            trials=trials,
            revived=revived,
            revival_rate=rate,
            stderr=stderr,
            mean_T=(sum(times) / len(times)) if times else None,
            ties_total=ties,
            seed=self.seed,
            wall_ms=wall_ms,
            zero_success=revived == 0,
        )
        self.rows.append(row)
        return row

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.header) + "\n")
        for row in self.rows:
            cells = []
            for col in self.header:
                val = row.get(col)
                if col == "wall_ms" and not self.record_timing:
                    val = None
                cells.append(_fmt(val))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def summary(self) -> str:
        cols = [c for c in self.header if c not in ("experiment", "seed", "wall_ms")]
        lines = ["  ".join(f"{c:>12}" for c in cols)]
        for row in self.rows:
            mark = " *" if row.get("zero_success") else ""
            lines.append("  ".join(f"{_fmt(row.get(c)):>12}" for c in cols) + mark)
        return "\n".join(lines)


def _fmt(val) -> str:
    if val is None:
        return ""
    if isinstance(val, bool):
        return "1" if val else "0"
    if isinstance(val, float):
        return f"{val:.10g}"
    if isinstance(val, (tuple, list)):
        return ";".join(str(v) for v in val)
    return str(val)


def _streams(seed: int, point: int, trial: int) -> list[np.random.Generator]:
    """Independent generators for topology, flags and noise of one trial."""
    ss = np.random.SeedSequence([seed, point, trial])
    return [np.random.default_rng(child) for child in ss.spawn(3)]


def _map_trials(fn: Callable[[int], Any], count: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _labels(cfg: CampaignConfig, lengths: Sequence[int], rng: np.random.Generator) -> BlockLabels:
    if cfg.labels == "plus":
        return BlockLabels(tuple((1,) * ln for ln in lengths))
    return BlockLabels(tuple(random_aperiodic(ln, rng) for ln in lengths))


def _revival_points(
    cfg: CampaignConfig,
    params: list[dict],
    build: Callable[[dict, list[np.random.Generator]], tuple[Network, Any]],
    mode: str,
) -> CampaignTable:
    """Shared loop of the three noise-revival campaigns."""
    names = tuple(k for k in params[0] if k != "p")
    table = CampaignTable(cfg.experiment, names, seed=cfg.seed, record_timing=cfg.record_timing)
    fixed: dict[int, tuple[Network, Any]] = {}
    for point, par in enumerate(params):
        lengths = cfg.lengths
        horizon = cfg.horizon or max(lengths)

        def one(trial: int, point=point, par=par):
            rngs = _streams(cfg.seed, point, trial)
            if cfg.resample_topology:
                net, ignore = build(par, rngs)
            else:
                if point not in fixed:
                    fixed[point] = build(par, _streams(cfg.seed, point, 2**32 - 1))
                net, ignore = fixed[point]
            orbit = dyn.ReferenceOrbit(net.partition, _labels(cfg, lengths, rngs[1]))
            return trial_revival(
                net, orbit, NoiseSpec(par["p"]), horizon, mode=mode, k=cfg.tolerance,
                ignore=ignore, window=cfg.window, rng=rngs[2],
            )

        t0 = time.perf_counter()
        recs = _map_trials(one, cfg.trials, cfg.threads)
        wall = (time.perf_counter() - t0) * 1000.0
        table.add(
            {k: v for k, v in par.items() if k != "p"},
            par["p"],
            cfg.trials,
            sum(r.revived for r in recs),
            [r.T for r in recs if r.revived],
            sum(r.ties for r in recs),
            wall,
        )
    return table


def run_fig1a(cfg: CampaignConfig) -> CampaignTable:
    """Single sparse block cycle, exact revival over a (d, p) grid."""
    if not cfg.d_values or not cfg.p_values:
        raise ValueError("fig1a needs d_values and p_values")
    ell = ";".join(map(str, cfg.lengths))
    params = [{"ell": ell, "d": d, "h": cfg.h, "p": p} for d in cfg.d_values for p in cfg.p_values]

    def build(par, rngs):
        return sparse_network(cfg.lengths, par["d"], cfg.h, rngs[0]), None

    return _revival_points(cfg, params, build, "exact")


def run_fig1b(cfg: CampaignConfig) -> CampaignTable:
    """Sparse architecture with ``k`` randomly rewired neurons per block, weak revival."""
    if not cfg.d_values or not cfg.p_values:
        raise ValueError("fig1b needs d_values and p_values")
    for d in cfg.d_values:
        if max(cfg.k_values or (0,)) > d:
            raise ValueError(f"k={max(cfg.k_values)} exceeds block size {d}")
    ell = ";".join(map(str, cfg.lengths))
    params = [
        {"ell": ell, "d": d, "h": cfg.h, "k": k, "p": p}
        for d in cfg.d_values
        for k in cfg.k_values or (0,)
        for p in cfg.p_values
    ]

    def build(par, rngs):
        net = sparse_network(cfg.lengths, par["d"], cfg.h, rngs[0])
        net = add_adversarial_edges(net, par["k"], rngs[1])
        return net, net.flagged

    return _revival_points(cfg, params, build, "weak")


def run_adversarial_nodes(cfg: CampaignConfig) -> CampaignTable:
    """Sparse cycle with anti-majority neurons, weak revival ignoring those neurons."""
    if not cfg.d_values or not cfg.p_values:
        raise ValueError("adversarial_nodes needs d_values and p_values")
    ell = ";".join(map(str, cfg.lengths))
    params = [
        {"ell": ell, "d": d, "h": cfg.h, "count": c, "p": p}
        for d in cfg.d_values
        for c in cfg.counts or (0,)
        for p in cfg.p_values
    ]

    def build(par, rngs):
        net = sparse_network(cfg.lengths, par["d"], cfg.h, rngs[0])
        net = mark_anti_majority(net, par["count"], rngs[1])
        return net, net.anti_majority

    return _revival_points(cfg, params, build, "weak")


def _monochromatic_time(net: Network, spins: np.ndarray, horizon: int) -> int | None:
    d = net.partition.block_size
    for t in range(horizon + 1):
        sums = spins.reshape(-1, d).sum(axis=1, dtype=np.int64)
        if np.all(np.abs(sums) == d):
            return t
        if t < horizon:
            spins, _ = dyn.next_spins(net, spins)
    return None


def run_global_convergence(cfg: CampaignConfig) -> CampaignTable:
    """Convergence from uniformly random (or all) initial states.

    ``criterion="monochromatic"`` (sparse default) asks for every block to be
    single-signed by the horizon; ``"periodic"`` (dense default) asks for the
    trajectory to enter a cycle with transient at most the horizon.
    """
    criterion = cfg.criterion or ("periodic" if cfg.kind == "dense" else "monochromatic")
    if criterion not in ("monochromatic", "periodic"):
        raise ValueError(f"unknown criterion {criterion!r}")
    horizon = cfg.horizon or max(cfg.lengths)
    ell = ";".join(map(str, cfg.lengths))
    table = CampaignTable(
        cfg.experiment, ("kind", "criterion", "ell", "d", "h"), seed=cfg.seed, record_timing=cfg.record_timing
    )
    for point, d in enumerate(cfg.d_values):
        n = d * sum(cfg.lengths)
        if cfg.exhaustive and n > 20:
            raise ValueError(f"exhaustive enumeration needs n <= 20, got {n}")
        count = 2**n if cfg.exhaustive else cfg.trials
        dense = dense_network(cfg.lengths, d) if cfg.kind == "dense" else None

        def one(trial: int, point=point, d=d, n=n, dense=dense):
            rngs = _streams(cfg.seed, point, trial)
            net = dense if dense is not None else sparse_network(cfg.lengths, d, cfg.h, rngs[0])
            if cfg.exhaustive:
                bits = (trial >> np.arange(n)) & 1
                x0 = (2 * bits - 1).astype(np.int8)
            else:
                x0 = np.where(rngs[2].random(n) < 0.5, -1, 1).astype(np.int8)
            if criterion == "monochromatic":
                return _monochromatic_time(net, x0, horizon)
            rep = dyn.detect_cycle(net, SpinState._from_spins_unchecked(x0), horizon + math.lcm(*cfg.lengths))
            if rep.horizon_hit or rep.transient > horizon:
                return None
            return rep.transient

        t0 = time.perf_counter()
        times = _map_trials(one, count, cfg.threads)
        wall = (time.perf_counter() - t0) * 1000.0
        hits = [t for t in times if t is not None]
        table.add(
            {"kind": cfg.kind, "criterion": criterion, "ell": ell, "d": d, "h": cfg.h if cfg.kind == "sparse" else ""},
            None, count, len(hits), hits, 0, wall,
        )
    return table


def run_lcm_growth(cfg: CampaignConfig) -> CampaignTable:
    """Log-lcm of random subsets of {b..m} against the asymptotic prediction.

    Each element of ``{b, ..., m}`` is kept independently with probability
    ``delta``; with ``full_range`` the whole interval is used and compared to
    ``m``. ``revived`` counts repetitions with a non-empty sample.
    """
    table = CampaignTable(
        cfg.experiment,
        ("m", "b", "delta", "psi_mean", "prediction", "ratio_mean", "ratio_sd", "empty"),
        seed=cfg.seed,
        record_timing=cfg.record_timing,
    )
    for point, m in enumerate(cfg.m_values):
        if cfg.full_range:
            b = cfg.b or 1
        else:
            b = cfg.b if cfg.b is not None else math.ceil(m**cfg.b_exponent)
        if not 1 <= b <= m:
            raise ValueError(f"need 1 <= b <= m, got b={b}, m={m}")
        reps = 1 if cfg.full_range else cfg.repetitions
        pred = float(m) if cfg.full_range else psi_prediction(m, cfg.delta)
        t0 = time.perf_counter()
        psis, empty = [], 0
        for r in range(reps):
            pool = np.arange(b, m + 1)
            if not cfg.full_range:
                pool = pool[_streams(cfg.seed, point, r)[0].random(pool.size) < cfg.delta]
            if pool.size == 0:
                empty += 1
                log.warning("lcm_growth m=%d rep=%d: empty sample, psi = 0", m, r)
            psis.append(log_lcm(pool.tolist()))
        wall = (time.perf_counter() - t0) * 1000.0
        ratios = np.array(psis) / pred
        table.add(
            {
                "m": m, "b": b, "delta": None if cfg.full_range else cfg.delta,
                "psi_mean": float(np.mean(psis)), "prediction": pred,
                "ratio_mean": float(ratios.mean()), "ratio_sd": float(ratios.std(ddof=1)) if reps > 1 else 0.0,
                "empty": empty,
            },
            None, reps, reps - empty, [], 0, wall,
        )
    return table


def _aperiodic_strings(length: int) -> list[tuple[int, ...]]:
    from .numtheory import minimal_period

    out = []
    for bits in itertools.product((1, -1), repeat=length):
        if minimal_period(bits) == length:
            out.append(bits)
    return out


def _random_length_set(rng: np.random.Generator, max_total: int) -> tuple[int, ...]:
    lengths: list[int] = []
    total = 0
    target = int(rng.integers(2, max_total + 1))
    while total + 2 <= target:
        ln = int(rng.integers(2, min(target - total, 12) + 1))
        lengths.append(ln)
        total += ln
    return tuple(lengths)


def run_period_law(cfg: CampaignConfig) -> CampaignTable:
    """Check that aperiodic monochromatic states cycle with period lcm(lengths), T = 0.

    Labelings are exhaustive when their number is at most ``label_limit``
    (0 means always exhaustive), otherwise ``label_limit`` random ones.
    ``revived`` counts agreeing labelings; ``violations`` counts the rest.
    """
    table = CampaignTable(
        cfg.experiment, ("lengths", "d", "labelings", "violations"), seed=cfg.seed, record_timing=cfg.record_timing
    )
    sets = list(cfg.length_sets)
    gen = np.random.default_rng([cfg.seed, 2**31])
    sets += [_random_length_set(gen, cfg.max_total) for _ in range(cfg.random_sets)]
    point = 0
    for lengths in sets:
        lcm = math.lcm(*lengths)
        total = math.prod(necklace_count(2, ln) for ln in lengths)
        for d in cfg.d_values:
            net = dense_network(lengths, d)
            rng = _streams(cfg.seed, point, 0)[1]
            if cfg.label_limit and total > cfg.label_limit:
                labelings = [
                    tuple(random_aperiodic(ln, rng) for ln in lengths) for _ in range(cfg.label_limit)
                ]
            else:
                labelings = list(itertools.product(*(_aperiodic_strings(ln) for ln in lengths)))

            def one(i: int, labelings=labelings, net=net):
                x0 = SpinState._from_spins_unchecked(
                    np.repeat(np.concatenate([np.array(s, dtype=np.int8) for s in labelings[i]]), net.partition.block_size)
                )
                rep = dyn.detect_cycle(net, x0, lcm + 1, max_states=0)
                return rep.transient == 0 and rep.period == lcm

            t0 = time.perf_counter()
            ok = _map_trials(one, len(labelings), cfg.threads)
            wall = (time.perf_counter() - t0) * 1000.0
            bad = len(ok) - sum(ok)
            if bad:
                log.error("period law violated for lengths %s, d=%d: %d labelings", lengths, d, bad)
            table.add(
                {"lengths": lengths, "d": d, "labelings": len(labelings), "violations": bad},
                None, len(labelings), sum(ok), [0] * sum(ok), 0, wall,
            )
            point += 1
    return table


RUNNERS: dict[str, Callable[[CampaignConfig], CampaignTable]] = {
    "fig1a": run_fig1a,
    "fig1b": run_fig1b,
    "adversarial_nodes": run_adversarial_nodes,
    "global_convergence": run_global_convergence,
    "lcm_growth": run_lcm_growth,
    "period_law": run_period_law,
}


def run_campaign(cfg: CampaignConfig) -> CampaignTable:
    return RUNNERS[cfg.experiment](cfg)
