"""GHZ-specific analysis: target states, Mermin test, fidelity and witness.

The target three-photon state is ``(|HVV> + e^{i phase} |VHH>) / sqrt(2)``.
Expectation values estimated from coincidence counts carry first-order
Poisson error bars: every count is treated as an independent Poisson
variable and propagated through the estimator by the delta method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .polarization import (
    DensityMatrix,
    MeasurementSetting,
    PureState,
    as_density,
    equatorial,
    expectation,
    parity_signs,
)

HVV = 0b011
VHH = 0b100

LR_BOUND = 2.0
QM_BOUND = 4.0

# (setting, sign) pairs of the Mermin combination
MERMIN_TERMS: tuple[tuple[str, int], ...] = (("XXX", 1), ("YXY", 1), ("YYX", 1), ("XYY", -1))


def bell_state() -> PureState:
    """(|HV> + |VH>)/sqrt(2) for photons 1 and 2."""
    amps = np.zeros(4, dtype=complex)
    amps[0b01] = amps[0b10] = 1 / math.sqrt(2)
    return PureState(2, amps)


def ghz_state(phase: float = 0.0) -> PureState:
    amps = np.zeros(8, dtype=complex)
    amps[HVV] = 1 / math.sqrt(2)
    amps[VHH] = complex(math.cos(phase), math.sin(phase)) / math.sqrt(2)
    return PureState(3, amps)


def ghz_projector(phase: float = 0.0) -> np.ndarray:
    return ghz_state(phase).density().elements


@dataclass(frozen=True)
class NoiseSpec:
    """Three-parameter noise family around the target GHZ state.

    ``coherence`` scales the HVV/VHH off-diagonal terms, ``colored_weight``
    mixes in the incoherent HVV/VHH mixture, ``white_weight`` mixes in I/8.
    """

    coherence: float = 1.0
    colored_weight: float = 0.0
    white_weight: float = 0.0
    phase: float = 0.0

    def __post_init__(self) -> None:
        for name in ("coherence", "colored_weight", "white_weight"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        if self.colored_weight + self.white_weight > 1.0 + 1e-12:
            raise ValueError("colored_weight + white_weight must not exceed 1")
        if not math.isfinite(self.phase):
            raise ValueError("phase must be finite")


def noisy_ghz(spec: NoiseSpec) -> DensityMatrix:
    coherent = ghz_projector(spec.phase).copy()
    coherent[HVV, VHH] *= spec.coherence
    coherent[VHH, HVV] *= spec.coherence
    colored = np.zeros((8, 8), dtype=complex)
    colored[HVV, HVV] = colored[VHH, VHH] = 0.5
    keep = 1.0 - spec.colored_weight - spec.white_weight
    rho = keep * coherent + spec.colored_weight * colored + spec.white_weight * np.eye(8) / 8
    return DensityMatrix(3, rho)


def calibrate_noise(
    target_fidelity: float,
    *,
    coherence: float | None = None,
    white_weight: float | None = None,
    phase: float = 0.0,
) -> NoiseSpec:
    """Pick the member of the (coherence, white_weight) family with the given fidelity.

    Exactly one of ``coherence`` / ``white_weight`` is fixed by the caller and
    the other is solved from F = (1 - w)(1 + c)/2 + w/8.
    """
    if (coherence is None) == (white_weight is None):
        raise ValueError("fix exactly one of coherence or white_weight")
    F = float(target_fidelity)
    if white_weight is not None:
        w = float(white_weight)
        if w >= 1.0:
            raise ValueError("white_weight must be below 1 to solve for coherence")
        c = 2.0 * (F - w / 8.0) / (1.0 - w) - 1.0
    else:
        c = float(coherence)
        # F = (1 - w)(1 + c)/2 + w/8  =>  w = ((1 + c)/2 - F) / ((1 + c)/2 - 1/8)
        top = (1.0 + c) / 2.0
        w = (top - F) / (top - 0.125)
    if not (-1e-12 <= c <= 1.0 + 1e-12 and -1e-12 <= w <= 1.0 + 1e-12):
        raise ValueError(
            f"fidelity {F} is unreachable in this family (coherence={c:.4f}, white_weight={w:.4f})"
        )
    return NoiseSpec(coherence=min(max(c, 0.0), 1.0), white_weight=min(max(w, 0.0), 1.0), phase=phase)


@dataclass(frozen=True)
class CountRecord:
    """Coincidence counts for one measurement setting.

    ``counts[o]`` is the number of events for outcome index ``o``. Counts may
    be non-integer when a record holds expected rather than observed counts.
    """

    setting: MeasurementSetting
    counts: np.ndarray = field(repr=False)
    duration: float = 1.0

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=float)
        if counts.shape != (2**self.setting.n_qubits,):
            raise ValueError(
                f"setting {self.setting} needs {2**self.setting.n_qubits} counts, got {counts.size}"
            )
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise ValueError("counts must be finite and nonnegative")
        if not (self.duration > 0):
            raise ValueError("duration must be positive")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def rates(self) -> np.ndarray:
        return self.counts / self.duration


def weighted_mean_with_error(counts: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """Value and Poisson error of sum(w_i N_i) / sum(N_i)."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("record has zero total counts")
    value = float(np.dot(weights, counts) / total)
    grad = (np.asarray(weights, dtype=float) - value) / total
    sigma = float(math.sqrt(np.dot(grad**2, counts)))
    return value, sigma


def correlation_from_counts(record: CountRecord) -> tuple[float, float]:
    return weighted_mean_with_error(record.counts, parity_signs(record.setting.n_qubits))


@dataclass(frozen=True)
class MerminResult:
    e_xxx: float
    e_yxy: float
    e_yyx: float
    e_xyy: float
    m_value: float
    sigma: float | None = None
    significance: float | None = None
    term_sigmas: tuple[float, float, float, float] | None = None

    def __post_init__(self) -> None:
        combined = self.e_xxx + self.e_yxy + self.e_yyx - self.e_xyy
        if abs(combined - self.m_value) > 1e-12:
            raise ValueError("m_value is inconsistent with the four correlators")
        if abs(self.m_value) > QM_BOUND + 1e-9:
            raise ValueError(f"|M| = {abs(self.m_value)} exceeds the quantum bound of 4")

    @property
    def violates_local_realism(self) -> bool:
        return abs(self.m_value) > LR_BOUND

    def as_dict(self) -> dict:
        return {
            "e_xxx": self.e_xxx,
            "e_yxy": self.e_yxy,
            "e_yyx": self.e_yyx,
            "e_xyy": self.e_xyy,
            "m_value": self.m_value,
            "sigma": self.sigma,
            "significance": self.significance,
        }


def _mermin_from_terms(values: dict[str, float]) -> float:
    return values["XXX"] + values["YXY"] + values["YYX"] - values["XYY"]


def mermin_exact(rho: PureState | DensityMatrix) -> MerminResult:
    rho = as_density(rho)
    if rho.n_qubits != 3:
        raise ValueError(f"the Mermin test needs a 3-qubit state, got {rho.n_qubits} qubits")
    values = {name: expectation(rho, MeasurementSetting.parse(name)) for name, _ in MERMIN_TERMS}
    return MerminResult(
        e_xxx=values["XXX"],
        e_yxy=values["YXY"],
        e_yyx=values["YYX"],
        e_xyy=values["XYY"],
        m_value=_mermin_from_terms(values),
    )


def _index_records(records: Sequence[CountRecord], wanted: Sequence[MeasurementSetting]) -> list[CountRecord]:
    found: list[CountRecord | None] = [None] * len(wanted)
    for record in records:
        for i, setting in enumerate(wanted):
            if record.setting == setting:
                if found[i] is not None:
                    raise ValueError(f"duplicate record for setting {setting}")
                found[i] = record
                break
        else:
            raise ValueError(f"unexpected setting {record.setting}")
    missing = [str(s) for s, r in zip(wanted, found) if r is None]
    if missing:
        raise ValueError(f"missing records for settings: {', '.join(missing)}")
    return found  # type: ignore[return-value]


def mermin_from_counts(records: Sequence[CountRecord]) -> MerminResult:
    """Mermin value from four records (XXX, YXY, YYX, XYY), any order."""
    settings = [MeasurementSetting.parse(name) for name, _ in MERMIN_TERMS]
    ordered = _index_records(records, settings)
    values, sigmas = {}, []
    for (name, _), record in zip(MERMIN_TERMS, ordered):
        if record.total <= 0:
            raise ValueError(f"record for {name} has no counts")
        values[name], s = correlation_from_counts(record)
        sigmas.append(s)
    m = _mermin_from_terms(values)
    sigma = float(math.sqrt(sum(s * s for s in sigmas)))
    significance = (m - LR_BOUND) / sigma if sigma > 0 else math.inf
    return MerminResult(
        e_xxx=values["XXX"],
        e_yxy=values["YXY"],
        e_yyx=values["YYX"],
        e_xyy=values["XYY"],
        m_value=m,
        sigma=sigma,
        significance=significance,
        term_sigmas=tuple(sigmas),  # type: ignore[arg-type]
    )


def fidelity_direct(rho: PureState | DensityMatrix, phase: float = 0.0) -> float:
    rho = as_density(rho)
    if rho.n_qubits != 3:
        raise ValueError(f"fidelity needs a 3-qubit state, got {rho.n_qubits} qubits")
    value = np.trace(rho.elements @ ghz_projector(phase))
    return float(value.real)


def fidelity_settings(phase: float = 0.0) -> list[MeasurementSetting]:
    """Lab-frame settings for the local fidelity estimate.

    After flipping photons 2 and 3 the target is (|HHH> + e^{i phase}|VVV>)/sqrt(2),
    whose projector is 1/2 (|HHH><HHH| + |VVV><VVV|) plus
    1/6 sum_k (-1)^k M_k (x) M_k (x) M_k with M_k at angle k*pi/3. The phase is
    absorbed by rotating photon 1's angle, and the flip turns angle t into -t
    on photons 2 and 3.
    """
    settings = [MeasurementSetting.parse("ZZZ")]
    for k in range(3):
        t = k * math.pi / 3
        settings.append(MeasurementSetting((equatorial(t + phase), equatorial(-t), equatorial(-t))))
    return settings


def fidelity_local(records: Sequence[CountRecord], phase: float = 0.0) -> tuple[float, float]:
    """GHZ fidelity and its Poisson error from four local-measurement records."""
    settings = fidelity_settings(phase)
    zzz, *equators = _index_records(records, settings)
    pop_weights = np.zeros(8)
    pop_weights[[HVV, VHH]] = 0.5
    value, sigma_pop = weighted_mean_with_error(zzz.counts, pop_weights)
    variance = sigma_pop**2
    for k, record in enumerate(equators):
        corr, s = correlation_from_counts(record)
        value += (-1) ** k * corr / 6.0
        variance += (s / 6.0) ** 2
    return float(value), float(math.sqrt(variance))


def witness_value(fidelity: float) -> float:
    """Expectation of 1/2 - |GHZ><GHZ|; negative means genuine GHZ entanglement."""
    if not (0.0 <= fidelity <= 1.0):
        raise ValueError(f"fidelity must lie in [0, 1], got {fidelity!r}")
    return 0.5 - fidelity


@dataclass(frozen=True)
class Certificate:
    fidelity: float
    witness: float
    fidelity_sigma: float | None = None
    significance: float | None = None

    @property
    def entangled(self) -> bool:
        return self.witness < 0

    def as_dict(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "fidelity_sigma": self.fidelity_sigma,
            "witness": self.witness,
            "witness_sigma": self.fidelity_sigma,
            "significance": self.significance,
            "entangled": self.entangled,
        }


def certify(fidelity: float, sigma: float | None = None) -> Certificate:
    # sampled estimates can land slightly outside [0, 1]
    w = 0.5 - fidelity
    significance = None
    if sigma is not None:
        significance = abs(w) / sigma if sigma > 0 else math.inf
    return Certificate(fidelity=fidelity, witness=w, fidelity_sigma=sigma, significance=significance)
