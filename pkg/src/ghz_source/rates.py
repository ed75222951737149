"""Closed-form count rates for the SPDC pair + weak-coherent-pulse GHZ source.

Photon routing at the polarizing beam splitter (H transmitted, V reflected):
the EPR partner 2' goes to output 2 if H and output 3 if V, while the
attenuated-laser photon 3' goes to output 3 if H and output 2 if V. Path 1
receives only the other EPR photon.

All rates are leading order in mu and p_e with the e^{-mu} vacuum factor
dropped, and assume an ideal PBS and no insertion loss beyond the coupling
and detection efficiencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ghz import HVV, VHH
from .polarization import DensityMatrix, MeasurementSetting

# l_c = lambda^2 / d_lambda for 3 nm filters at 780 nm
DEFAULT_COHERENCE_LENGTH = 780e-9**2 / 3e-9

COMPONENT_LABELS = tuple(MeasurementSetting.parse("ZZZ").outcome_labels())
DESIRED = (HVV, VHH)
SYMMETRY_PAIRS = ((0b011, 0b100), (0b010, 0b110), (0b001, 0b101), (0b000, 0b111))


@dataclass(frozen=True)
class SourceParams:
    rep_rate: float = 80e6
    mu: float = 0.21
    p_e: float = 0.022
    eta_c: float = 0.2
    eta_d: float = 0.5
    v_hom_max: float = 1.0
    coherence_length: float = DEFAULT_COHERENCE_LENGTH
    phase: float = 0.0
    # per-path (1, 2, 3) total efficiencies; None means eta_c * eta_d on every path
    path_efficiency: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if not (self.rep_rate > 0 and math.isfinite(self.rep_rate)):
            raise ValueError(f"rep_rate must be positive, got {self.rep_rate!r}")
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be nonnegative, got {self.mu!r}")
        if not (0.0 <= self.p_e <= 1.0):
            raise ValueError(f"p_e must lie in [0, 1], got {self.p_e!r}")
        for name in ("eta_c", "eta_d", "v_hom_max"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        if not (self.coherence_length > 0):
            raise ValueError("coherence_length must be positive")
        if not math.isfinite(self.phase):
            raise ValueError("phase must be finite")
        if self.path_efficiency is not None:
            etas = tuple(float(e) for e in self.path_efficiency)
            if len(etas) != 3 or not all(0.0 <= e <= 1.0 for e in etas):
                raise ValueError("path_efficiency needs three values in [0, 1]")
            object.__setattr__(self, "path_efficiency", etas)

    @property
    def eta_paths(self) -> np.ndarray:
        if self.path_efficiency is not None:
            return np.array(self.path_efficiency)
        return np.full(3, self.eta_c * self.eta_d)

    def with_(self, **changes) -> SourceParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class SinglesAndPairs:
    """Detected singles and twofold rates in Hz."""

    sps_h: float
    sps_v: float
    sps_hv: float
    sps_vh: float
    epr_h1: float
    epr_v1: float
    epr_h2: float
    epr_v2: float
    epr_h1v2: float
    epr_v1h2: float

    @property
    def pair_total(self) -> float:
        return self.epr_h1v2 + self.epr_v1h2

    def as_dict(self) -> dict:
        out = {name: getattr(self, name) for name in self.__dataclass_fields__}
        out["pair_total"] = self.pair_total
        return out


def singles_and_pairs(params: SourceParams) -> SinglesAndPairs:
    f, mu, p = params.rep_rate, params.mu, params.p_e
    e1, e2, e3 = params.eta_paths
    # 3' H exits on path 3, 3' V on path 2; 2' H on path 2, 2' V on path 3
    return SinglesAndPairs(
        sps_h=0.5 * f * mu * e3,
        sps_v=0.5 * f * mu * e2,
        sps_hv=f * mu**2 * e2 * e3 / 8,
        sps_vh=f * mu**2 * e2 * e3 / 8,
        epr_h1=0.5 * f * p * e1,
        epr_v1=0.5 * f * p * e1,
        epr_h2=0.5 * f * p * e2,
        epr_v2=0.5 * f * p * e3,
        epr_h1v2=0.5 * f * p * e1 * e3,
        epr_v1h2=0.5 * f * p * e1 * e2,
    )


@dataclass(frozen=True)
class ThreefoldTable:
    """Threefold rates (Hz) indexed like Z-basis outcomes: 0 = HHH ... 7 = VVV."""

    rates: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        rates = np.array(self.rates, dtype=float)
        if rates.shape != (8,):
            raise ValueError("a threefold table has exactly 8 components")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError("threefold rates must be finite and nonnegative")
        rates.setflags(write=False)
        object.__setattr__(self, "rates", rates)

    def __getitem__(self, label: str) -> float:
        return float(self.rates[COMPONENT_LABELS.index(label)])

    @property
    def desired(self) -> float:
        return float(self.rates[list(DESIRED)].sum())

    @property
    def undesired(self) -> float:
        return float(self.rates.sum() - self.desired)

    @property
    def total(self) -> float:
        return float(self.rates.sum())

    @property
    def ratio(self) -> float:
        return self.desired / self.undesired if self.undesired > 0 else math.inf

    def as_dict(self) -> dict[str, float]:
        return {label: float(r) for label, r in zip(COMPONENT_LABELS, self.rates)}


def threefold_components(params: SourceParams, *, poisson_exact: bool = False) -> ThreefoldTable:
    """The eight threefold coincidence rates.

    ``poisson_exact`` puts back the e^{-mu} vacuum factor on the components
    that need an attenuated-laser photon. It does not add the higher-order
    multi-photon terms, so it is not closer to the per-pulse simulation.
    """
    f, mu, p = params.rep_rate, params.mu, params.p_e
    eta3 = float(np.prod(params.eta_paths))
    sps = math.exp(-mu) if poisson_exact else 1.0
    desired = 0.25 * f * p * mu * eta3 * sps
    split_sps = f * p * mu**2 * eta3 / 8 * sps
    double_pair = 0.25 * f * p**2 * eta3
    triple = f * p**2 * mu * eta3 / 8 * sps
    rates = np.empty(8)
    for (a, b), value in zip(SYMMETRY_PAIRS, (desired, split_sps, double_pair, triple)):
        rates[a] = rates[b] = value
    return ThreefoldTable(rates)


def ratio_R(mu: float, p_e: float) -> float:
    """Desired-to-undesired threefold ratio 2 mu / (mu^2 + 2 p_e + p_e mu)."""
    if mu < 0 or not (0.0 <= p_e <= 1.0):
        raise ValueError(f"need mu >= 0 and 0 <= p_e <= 1, got mu={mu!r}, p_e={p_e!r}")
    if mu == 0 and p_e == 0:
        raise ValueError("R is undefined for mu = p_e = 0")
    return 2.0 * mu / (mu * mu + 2.0 * p_e + p_e * mu)


def optimal_mu(p_e: float) -> float:
    if not (p_e > 0):
        raise ValueError(f"optimal_mu needs p_e > 0, got {p_e!r}")
    return math.sqrt(2.0 * p_e)


def predicted_hv_visibility(params: SourceParams) -> float:
    R = ratio_R(params.mu, params.p_e)
    return min(max((R - 1.0) / (R + 1.0), 0.0), 1.0)


def effective_state(params: SourceParams) -> DensityMatrix:
    """Three-photon state with the threefold populations and partial GHZ coherence."""
    table = threefold_components(params)
    if table.total <= 0:
        raise ValueError("all threefold rates vanish; no post-selected state exists")
    pops = table.rates / table.total
    rho = np.diag(pops).astype(complex)
    coherence = params.v_hom_max * math.sqrt(pops[HVV] * pops[VHH])
    rho[VHH, HVV] = coherence * complex(math.cos(params.phase), math.sin(params.phase))
    rho[HVV, VHH] = np.conj(rho[VHH, HVV])
    return DensityMatrix(3, rho)


def calibrate_v_hom(params: SourceParams, target_fidelity: float) -> float:
    """v_hom_max that makes ``effective_state(params)`` reach ``target_fidelity``."""
    table = threefold_components(params)
    if table.total <= 0:
        raise ValueError("all threefold rates vanish; nothing to calibrate")
    pops = table.rates / table.total
    geometric = math.sqrt(pops[HVV] * pops[VHH])
    if geometric == 0:
        raise ValueError("no desired components; fidelity does not depend on v_hom_max")
    v = (target_fidelity - 0.5 * (pops[HVV] + pops[VHH])) / geometric
    if not (-1e-12 <= v <= 1.0 + 1e-12):
        raise ValueError(f"fidelity {target_fidelity} needs v_hom_max={v:.4f}, outside [0, 1]")
    return min(max(v, 0.0), 1.0)
