"""Seeded stochastic simulation of the three-photon source.

Per pulse the attenuated laser emits ``n ~ Poisson(mu)`` photons in ``|+>``
and the crystal emits ``k ~ Poisson(p_e)`` pairs in ``(|HV> + |VH>)/sqrt(2)``.
Photons are routed through the PBS by polarization, survive coupling and
detection independently, and every output path ends in a polarizer and a
threshold detector. Each of the ``2^3`` analyzer outcomes of a setting is its
own acquisition run of ``n_pulses`` pulses, as in the experiment, so the
eight counts of a record are independent.

Only the post-selected photons are treated quantum mechanically: when the
surviving photons are exactly one EPR pair plus one laser photon in a
GHZ-forming arrangement, the triple is measured in the partially coherent
GHZ state; every other surviving photon passes its polarizer independently.

Sampling is exact but aggregated. Pulses are grouped in fixed blocks of
``BLOCK_PULSES``; within a block, the number of pulses that put at least one
surviving photon on every path is drawn per emission class from a
multinomial, and only those pulses are followed further. Each block owns a
counter-based Philox stream keyed by ``(seed, setting/delay tag, outcome,
block)``, so results do not depend on how blocks are scheduled.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .ghz import CountRecord, NoiseSpec, noisy_ghz
from .polarization import MeasurementSetting, outcome_probabilities
from .rates import SourceParams, ratio_R

BLOCK_PULSES = 1 << 40
TAIL_MASS = 1e-16
# emission classes less likely than this per pulse are folded into vacuum
CLASS_FLOOR = 1e-20
ZZZ = MeasurementSetting.parse("ZZZ")
XXX = MeasurementSetting.parse("XXX")


@dataclass(frozen=True)
class SimConfig:
    params: SourceParams
    n_pulses: int
    seed: int
    setting: MeasurementSetting = ZZZ
    delay: float = 0.0
    # caps on photon numbers; the removed probability mass becomes vacuum
    max_pairs: int | None = None
    max_sps_photons: int | None = None

    def __post_init__(self) -> None:
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ValueError(f"n_pulses must be a positive integer, got {self.n_pulses!r}")
        object.__setattr__(self, "n_pulses", int(self.n_pulses))
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.setting.n_qubits != 3:
            raise ValueError("the source produces three photons; use a 3-qubit setting")
        if not math.isfinite(self.delay):
            raise ValueError("delay must be finite")
        for name in ("max_pairs", "max_sps_photons"):
            cap = getattr(self, name)
            if cap is not None and cap < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def duration(self) -> float:
        return self.n_pulses / self.params.rep_rate

    def coherence(self) -> float:
        p = self.params
        return p.v_hom_max * math.exp(-((self.delay / p.coherence_length) ** 2))


def _number_pmf(mean: float, cap: int | None) -> np.ndarray:
    if mean == 0:
        return np.array([1.0])
    if mean > 50:
        raise ValueError(f"mean photon number {mean} is too large to simulate")
    pmf = [math.exp(-mean)]
    n = 0
    # past n = 2*mean the Poisson tail is bounded by the last term
    while (n <= 2 * mean or pmf[-1] > TAIL_MASS) and (cap is None or n < cap):
        n += 1
        pmf.append(pmf[-1] * mean / n)
    return np.array(pmf)


@dataclass(frozen=True)
class _EmissionClass:
    """Pulses with k pairs (a of them H1V2') and n laser photons (h of them H)."""

    k: int
    a: int
    n: int
    h: int
    # photon polarization per slot on each path: +1 H, -1 V
    pols: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)


def _make_class(k: int, a: int, n: int, h: int) -> _EmissionClass:
    path1 = np.array([1] * a + [-1] * (k - a))
    # path 2: H partners of V1H2' pairs (pairs a..k-1), then V laser photons
    path2 = np.array([1] * (k - a) + [-1] * (n - h))
    # path 3: V partners of H1V2' pairs (pairs 0..a-1), then H laser photons
    path3 = np.array([-1] * a + [1] * h)
    return _EmissionClass(k, a, n, h, (path1, path2, path3))


class _Source:
    """Emission classes and their armed probabilities for one parameter set."""

    def __init__(self, params: SourceParams, max_pairs: int | None, max_sps: int | None):
        self.eta = params.eta_paths
        pair_pmf = _number_pmf(params.p_e, max_pairs)
        sps_pmf = _number_pmf(params.mu, max_sps)
        classes, probs, base = [], [], []
        for k in range(1, len(pair_pmf)):
            for a in range(k + 1):
                pa = pair_pmf[k] * math.comb(k, a) / 2**k
                for n in range(len(sps_pmf)):
                    for h in range(n + 1):
                        sizes = (k, (k - a) + (n - h), a + h)
                        if 0 in sizes:
                            continue
                        armed = np.prod([1 - (1 - e) ** m for e, m in zip(self.eta, sizes)])
                        prob = pa * sps_pmf[n] * math.comb(n, h) / 2**n * armed
                        if prob > CLASS_FLOOR:
                            classes.append(_make_class(k, a, n, h))
                            probs.append(prob)
                            base.append(prob / armed)
        self.classes = classes
        self.base = np.array(base)
        total = float(sum(probs))
        self.pvals = np.array(probs + [max(0.0, 1.0 - total)])


def _stream_tag(setting: MeasurementSetting, delay: float) -> int:
    return zlib.crc32(f"{setting}|{delay!r}".encode())


def _block_rng(seed: int, tag: int, outcome: int, block: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=(tag, outcome, block))
    return np.random.Generator(np.random.Philox(seq))


def _survivors(rng: np.random.Generator, count: int, n_slots: int, eta: float) -> np.ndarray:
    """Survival pattern of ``n_slots`` photons conditioned on at least one surviving."""
    weights = (1.0 - eta) ** np.arange(n_slots)
    cdf = np.cumsum(weights) / weights.sum()
    first = np.minimum(np.searchsorted(cdf, rng.random(count), side="right"), n_slots - 1)
    later = rng.random((count, n_slots)) < eta
    slots = np.arange(n_slots)
    return np.where(slots > first[:, None], later, slots == first[:, None])


class _Run:
    """Everything needed to sample one setting at one delay."""

    def __init__(self, config: SimConfig, source: _Source | None = None):
        self.config = config
        self.source = source or _Source(config.params, config.max_pairs, config.max_sps_photons)
        spec = NoiseSpec(coherence=config.coherence(), phase=config.params.phase)
        self.coherent_probs = outcome_probabilities(noisy_ghz(spec), config.setting)
        self.nz = np.array([axis.bloch[2] for axis in config.setting.axes])
        self.tag = _stream_tag(config.setting, config.delay)

    @cached_property
    def n_blocks(self) -> int:
        return -(-self.config.n_pulses // BLOCK_PULSES)

    def block_events(self, outcome: int, block: int) -> int:
        cfg = self.config
        pulses = min(BLOCK_PULSES, cfg.n_pulses - block * BLOCK_PULSES)
        rng = _block_rng(cfg.seed, self.tag, outcome, block)
        armed = rng.multinomial(pulses, self.source.pvals)[:-1]
        signs = np.array([1 - 2 * ((outcome >> (2 - i)) & 1) for i in range(3)])
        events = 0
        for cls, count in zip(self.source.classes, armed):
            if count:
                events += self._class_events(rng, cls, int(count), signs, outcome)
        return events

    def _class_events(self, rng, cls: _EmissionClass, count: int, signs: np.ndarray, outcome: int) -> int:
        alive = [_survivors(rng, count, len(p), e) for p, e in zip(cls.pols, self.source.eta)]
        click = np.ones(count)
        for i, (pols, mask) in enumerate(zip(cls.pols, alive)):
            passes = 0.5 * (1.0 + signs[i] * pols * self.nz[i])
            blocked = np.where(mask, 1.0 - passes, 1.0).prod(axis=1)
            click *= 1.0 - blocked
        coherent = self._coherent_rows(cls, alive)
        if coherent is not None:
            click = np.where(coherent, self.coherent_probs[outcome], click)
        return int(np.count_nonzero(rng.random(count) < click))

    @staticmethod
    def _coherent_rows(cls: _EmissionClass, alive: list[np.ndarray]) -> np.ndarray | None:
        if cls.n == 0:
            return None
        single = np.all([m.sum(axis=1) == 1 for m in alive], axis=0)
        if not single.any():
            return None
        j1, j2, j3 = (m.argmax(axis=1) for m in alive)
        k, a = cls.k, cls.a
        # H1V2' pair j with a V laser photon on path 2, or V1H2' pair j with an H laser photon on path 3
        hv = (j1 < a) & (j3 == j1) & (j2 >= k - a)
        vh = (j1 >= a) & (j2 == j1 - a) & (j3 >= a)
        return single & (hv | vh)


def simulate(config: SimConfig, *, max_workers: int | None = None) -> CountRecord:
    """Counts for every analyzer outcome of ``config.setting``.

    ``max_workers`` spreads (outcome, block) jobs over threads; the result is
    identical for any worker count.
    """
    run = _Run(config)
    return _simulate_run(run, max_workers)


def _simulate_run(run: _Run, max_workers: int | None) -> CountRecord:
    jobs = [(o, b) for o in range(8) for b in range(run.n_blocks)]
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            results = list(pool.map(lambda job: run.block_events(*job), jobs))
    else:
        results = [run.block_events(*job) for job in jobs]
    counts = np.zeros(8, dtype=np.int64)
    for (outcome, _), events in zip(jobs, results):
        counts[outcome] += events
    return CountRecord(run.config.setting, counts, run.config.duration)


_OUTCOME_SIGNS = np.array([[1 - 2 * ((o >> (2 - i)) & 1) for i in range(3)] for o in range(8)])


def _expected_clicks(run: _Run, cls: _EmissionClass) -> np.ndarray:
    """Probability that a pulse of class ``cls`` registers each of the 8 outcomes."""
    eta = run.source.eta
    signs = _OUTCOME_SIGNS
    incoherent = np.ones(8)
    for i, pols in enumerate(cls.pols):
        passes = 0.5 * (1.0 + np.outer(signs[:, i] * run.nz[i], pols))
        incoherent *= 1.0 - np.prod(1.0 - eta[i] * passes, axis=1)
    # exactly one survivor per path, forming a GHZ triple: swap the
    # independent-photon probability for the coherent one
    only = np.prod([e * (1 - e) ** (len(p) - 1) for e, p in zip(eta, cls.pols)])
    n_hv = cls.a * (cls.n - cls.h)
    n_vh = (cls.k - cls.a) * cls.h
    if only == 0 or n_hv + n_vh == 0:
        return incoherent

    def product_pass(pols: tuple[int, int, int]) -> np.ndarray:
        return np.prod(0.5 * (1.0 + signs * np.array(pols) * run.nz), axis=1)

    correction = n_hv * (run.coherent_probs - product_pass((1, -1, -1)))
    correction += n_vh * (run.coherent_probs - product_pass((-1, 1, 1)))
    return incoherent + only * correction


def expected_record(config: SimConfig) -> CountRecord:
    """Mean counts of :func:`simulate` for ``config``, computed in closed form."""
    run = _Run(config)
    clicks = np.array([_expected_clicks(run, cls) for cls in run.source.classes]).reshape(-1, 8)
    counts = config.n_pulses * (run.source.base @ clicks)
    return CountRecord(config.setting, counts, config.duration)


def expected_settings(config: SimConfig, settings: Sequence[MeasurementSetting]) -> list[CountRecord]:
    return [expected_record(replace(config, setting=s)) for s in settings]


def simulate_settings(config: SimConfig, settings: Sequence[MeasurementSetting]) -> list[CountRecord]:
    source = _Source(config.params, config.max_pairs, config.max_sps_photons)
    return [
        _simulate_run(_Run(replace(config, setting=s), source), None) for s in settings
    ]


@dataclass(frozen=True)
class HomCurve:
    delays: np.ndarray = field(repr=False)
    threefold_rate: np.ndarray = field(repr=False)
    rate_error: np.ndarray = field(repr=False)
    fitted_visibility: float
    outcome: str = ""

    def __post_init__(self) -> None:
        if not (len(self.delays) == len(self.threefold_rate) == len(self.rate_error)):
            raise ValueError("delays and rates must have equal length")
        if np.any(np.asarray(self.threefold_rate) < 0):
            raise ValueError("rates must be nonnegative")


def suppressed_outcome(phase: float = 0.0) -> int:
    """First +/- outcome whose ideal GHZ probability is smallest."""
    probs = outcome_probabilities(noisy_ghz(NoiseSpec(phase=phase)), XXX)
    return int(np.argmin(np.round(probs, 12)))


def fit_visibility(delays: np.ndarray, counts: np.ndarray, coherence_length: float) -> float:
    """Relative depth (or height) of a Gaussian feature at zero delay.

    Weighted least squares of ``N(d) = B + A exp(-(d/l_c)^2)``; returns
    ``|A| / B``. When no delay probes the overlap region the template column
    is numerically zero and the minimum-norm solution gives ``A = 0``.
    """
    delays = np.asarray(delays, dtype=float)
    counts = np.asarray(counts, dtype=float)
    template = np.exp(-((delays / coherence_length) ** 2))
    weights = 1.0 / np.sqrt(np.maximum(counts, 1.0))
    design = np.column_stack([np.ones_like(template), template]) * weights[:, None]
    (base, amp), *_ = np.linalg.lstsq(design, counts * weights, rcond=1e-3)
    if base <= 0:
        return 0.0
    return float(min(abs(amp) / base, 1.0))


def hom_scan(config: SimConfig, delays: Sequence[float], outcome: int | str | None = None) -> HomCurve:
    """Threefold rate of one +/- outcome versus prism delay, with its visibility."""
    delays = np.asarray(list(delays), dtype=float)
    if delays.size == 0:
        raise ValueError("hom_scan needs at least one delay")
    if outcome is None:
        outcome = suppressed_outcome(config.params.phase)
    elif isinstance(outcome, str):
        outcome = XXX.outcome_index(outcome)
    source = _Source(config.params, config.max_pairs, config.max_sps_photons)
    counts = []
    for d in delays:
        run = _Run(replace(config, setting=XXX, delay=float(d)), source)
        counts.append(sum(run.block_events(outcome, b) for b in range(run.n_blocks)))
    counts = np.array(counts, dtype=float)
    duration = config.duration
    return HomCurve(
        delays=delays,
        threefold_rate=counts / duration,
        rate_error=np.sqrt(counts) / duration,
        fitted_visibility=fit_visibility(delays, counts, config.params.coherence_length),
        outcome=XXX.outcome_labels()[outcome],
    )


@dataclass(frozen=True)
class MuSweepRow:
    mu: float
    r_est: float
    r_sigma: float
    visibility_est: float
    r_analytic: float
    desired_counts: int
    undesired_counts: int


def ratio_from_record(record: CountRecord) -> tuple[float, float]:
    """Desired/undesired ratio and its Poisson error from a Z-basis record."""
    desired = record.counts[3] + record.counts[4]
    undesired = record.total - desired
    if undesired <= 0 or desired <= 0:
        return (math.inf if undesired <= 0 and desired > 0 else 0.0), math.inf
    r = desired / undesired
    return float(r), float(r * math.sqrt(1 / desired + 1 / undesired))


def sweep_mu(base: SimConfig, mu_values: Sequence[float]) -> list[MuSweepRow]:
    if len(mu_values) == 0:
        raise ValueError("sweep_mu needs at least one mu value")
    rows = []
    for mu in mu_values:
        cfg = replace(base, params=base.params.with_(mu=float(mu)), setting=ZZZ)
        record = simulate(cfg)
        r, s = ratio_from_record(record)
        vis = 1.0 if math.isinf(r) else min(max((r - 1) / (r + 1), 0.0), 1.0)
        desired = int(record.counts[3] + record.counts[4])
        rows.append(
            MuSweepRow(
                mu=float(mu),
                r_est=r,
                r_sigma=s,
                visibility_est=vis,
                r_analytic=ratio_R(float(mu), base.params.p_e),
                desired_counts=desired,
                undesired_counts=int(record.total) - desired,
            )
        )
    return rows


def best_mu(rows: Sequence[MuSweepRow]) -> MuSweepRow:
    return max(rows, key=lambda row: row.r_est)
