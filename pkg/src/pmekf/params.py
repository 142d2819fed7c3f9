"""Model constants, subject anthropometrics, and the packed parameter vector.

All gas-exchange constants live in ModelParams. A few quantities are derived
rather than stored (ventilation-controller offset, transport-delay constant,
inspired partial pressures, the BTPS-to-STPD factor); they are recomputed
whenever the primitive fields change, so a parameter file only ever overrides
primitives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

# Packed layout consumed by the numeric kernels (compiled and pure-Python
# backends share it). Order matters; keep in sync with _kernels.pyx.
PVEC_FIELDS = (
    "v_a", "v_t", "p_s", "rq", "lambda1", "lambda2", "tau",
    "g_p_o2", "g_p_co2", "k1", "k_t", "k2", "k3", "k4",
    "lambda_conv", "p_i_o2", "p_i_co2", "f_i_o2", "f_i_co2",
    "p_denom", "btps_to_stpd", "c_a_o2_basal", "p_a_co2_basal",
    "mp_o2_floor", "sv_min", "sv_max",
)
NPVEC = len(PVEC_FIELDS)


@dataclass(frozen=True)
class SubjectProfile:
    """Anthropometrics and the efficiency assignment used by the kinetic model."""

    body_mass_kg: float = 70.0
    skeletal_muscle_mass_kg: float = 26.5
    leg_mass_fraction: float = 0.16        # per leg, thigh+shank+foot
    efficiency_default: float = 0.06
    efficiency_cycling: float = 0.02

    def __post_init__(self):
        if self.body_mass_kg <= 0 or self.skeletal_muscle_mass_kg <= 0:
            raise ValueError("masses must be positive")
        if not (0 < self.leg_mass_fraction < 0.5):
            raise ValueError("leg_mass_fraction must lie in (0, 0.5)")
        for mu in (self.efficiency_default, self.efficiency_cycling):
            if not (0 < mu <= 1):
                raise ValueError(f"efficiency must lie in (0, 1], got {mu}")

    @property
    def leg_mass_kg(self) -> float:
        return self.leg_mass_fraction * self.body_mass_kg

    @property
    def upper_mass_kg(self) -> float:
        return self.body_mass_kg - 2.0 * self.leg_mass_kg

    def efficiency_for(self, label: str) -> float:
        if label and "cycl" in label.lower():
            return self.efficiency_cycling
        return self.efficiency_default


@dataclass(frozen=True)
class ModelParams:
    """Constants of the gas-exchange model.

    Units: volumes in L, pressures in mmHg, flows in L/s, blood gas content
    in L gas per L blood, stroke volume in L/beat, heart rate input in
    beats per second.
    """

    v_a: float = 3.0                 # alveolar gas volume
    v_t: float = 25.0                # tissue volume; overridden per subject
    rho: float = 1060.0              # skeletal muscle density, kg/m^3
    p_s: float = 0.024               # pulmonary shunt fraction
    rq: float = 0.8                  # respiratory quotient
    lambda1: float = 0.02            # stroke-volume contractility slope
    lambda2: float = 0.08975         # baseline stroke volume
    tau: float = 1.0                 # controller time constant, s
    g_p_o2: float = 30.0             # ventilation gain on arterial O2 content
    g_p_co2: float = 0.02            # ventilation gain on alveolar CO2 pressure
    k2: float = 0.2                  # O2 dissociation asymptote
    k3: float = 0.046                # O2 dissociation steepness, 1/mmHg
    k4: float = 0.012                # CO2 dissociation slope, L/L per mmHg
    lambda_conv: float = 863.0       # STPD content -> BTPS pressure conversion
    p_atm: float = 760.0
    p_h2o: float = 47.0
    f_i_o2: float = 0.2094
    f_i_co2: float = 0.0004
    c_a_o2_basal: float = 0.197      # basal arterial O2 content
    p_a_co2_basal: float = 40.0      # basal alveolar/arterial CO2 pressure
    hr_basal_bpm: float = 70.0
    delay_basal_s: float = 6.0       # transport delay at basal cardiac output
    mp_o2_floor: float = 0.25 / 60.0  # lower clamp of the SV log argument, L/s
    sv_min: float = 0.04
    sv_max: float = 0.20

    def __post_init__(self):
        if not (0 < self.p_s < 1):
            raise ValueError("p_s must lie in (0, 1)")
        if min(self.v_a, self.v_t, self.tau) <= 0:
            raise ValueError("v_a, v_t and tau must be positive")
        if self.p_h2o >= self.p_atm:
            raise ValueError("p_h2o must be below p_atm")
        if min(self.k2, self.k3, self.k4) <= 0:
            raise ValueError("k2, k3, k4 must be positive")
        if self.mp_o2_floor <= 0:
            raise ValueError("mp_o2_floor must be positive")
        if not (0 < self.sv_min < self.sv_max):
            raise ValueError("need 0 < sv_min < sv_max")
        if not (0 < self.c_a_o2_basal < self.k2):
            raise ValueError("c_a_o2_basal must lie in (0, k2)")

    # ---- derived quantities -------------------------------------------------

    @property
    def p_denom(self) -> float:
        return self.p_atm - self.p_h2o

    @property
    def p_i_o2(self) -> float:
        return self.f_i_o2 * self.p_denom

    @property
    def p_i_co2(self) -> float:
        return self.f_i_co2 * self.p_denom

    @property
    def btps_to_stpd(self) -> float:
        return self.p_denom / self.p_atm * 273.0 / 310.0

    @property
    def k1(self) -> float:
        # Offset pinning ventilation to zero at basal conditions.
        return self.g_p_o2 * self.c_a_o2_basal - self.g_p_co2 * self.p_a_co2_basal

    @property
    def u_basal(self) -> float:
        return self.hr_basal_bpm / 60.0

    @property
    def q_basal(self) -> float:
        return self.u_basal * self.lambda2

    @property
    def k_t(self) -> float:
        return self.delay_basal_s * self.q_basal

    def with_subject(self, profile: SubjectProfile) -> "ModelParams":
        v_t = 1000.0 * profile.skeletal_muscle_mass_kg / self.rho
        return replace(self, v_t=v_t)

    def replace(self, **kwargs) -> "ModelParams":
        return replace(self, **kwargs)

    def pack(self) -> np.ndarray:
        """Flatten into the kernel parameter vector."""
        vec = np.empty(NPVEC)
        for i, name in enumerate(PVEC_FIELDS):
            vec[i] = getattr(self, name)
        return vec


def params_from_mapping(mapping: dict[str, str | float],
                        base: ModelParams | None = None) -> ModelParams:
    """Build ModelParams from key/value overrides; unknown keys are an error."""
    base = base or ModelParams()
    valid = {f.name for f in fields(ModelParams)}
    overrides = {}
    for key, raw in mapping.items():
        if key not in valid:
            raise ValueError(f"unknown model parameter {key!r}")
        overrides[key] = float(raw)
    return base.replace(**overrides)


def basal_state(params: ModelParams) -> np.ndarray:
    """The resting fixed point of the process model.

    Alveolar O2 pressure is placed where the dissociation curve meets the
    basal arterial content, venous contents sit at dissociation equilibrium,
    and ventilation is zero; all five derivatives vanish there when the
    delayed inputs equal their basal values.
    """
    root = math.sqrt(params.c_a_o2_basal / params.k2)
    x1 = -math.log(1.0 - root) / params.k3
    x2 = params.p_a_co2_basal
    x3 = params.c_a_o2_basal
    x4 = params.k4 * x2
    return np.array([x1, x2, x3, x4, 0.0])
