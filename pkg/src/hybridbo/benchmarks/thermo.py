"""Antoine vapor pressure and NRTL activity-coefficient correlations.

Parameter values ship in a versioned key-value data file and are validated
at load time (normal-boiling-point consistency for the Antoine set,
nonrandomness factors inside (0, 1) over the temperature box).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..errors import ContractViolation, ThermoDomainError
from ..model import parse_keyvalue_file

__all__ = ["ThermoParams", "load_thermo_params", "antoine_psat", "nrtl_gamma1"]


@dataclass(frozen=True)
class ThermoParams:
    # Antoine, log10(p_sat/Pa) = a1 - b1/(c1 + T)
    a1: float
    b1: float
    c1: float
    # NRTL tau_ij = a_ij + b_ij/T, alpha_ij = c_ij + d_ij (T - 273.15)
    a12: float
    a21: float
    b12: float
    b21: float
    c12: float
    c21: float
    d12: float
    d21: float
    t_min: float
    t_max: float


def default_params_path():
    return resources.files("hybridbo.benchmarks").joinpath(
        "data/thermo_water_acetic_acid.params"
    )


def load_thermo_params(path=None) -> ThermoParams:
    """Load and validate a thermo parameter file."""
    if path is None:
        path = default_params_path()
    kv = parse_keyvalue_file(path)
    p = ThermoParams(
        a1=float(kv["antoine.a1_log10_pa"]),
        b1=float(kv["antoine.b1_k"]),
        c1=float(kv["antoine.c1_k"]),
        a12=float(kv["nrtl.a12"]),
        a21=float(kv["nrtl.a21"]),
        b12=float(kv["nrtl.b12_k"]),
        b21=float(kv["nrtl.b21_k"]),
        c12=float(kv["nrtl.c12"]),
        c21=float(kv["nrtl.c21"]),
        d12=float(kv["nrtl.d12_per_k"]),
        d21=float(kv["nrtl.d21_per_k"]),
        t_min=float(kv["validity.temperature_min_k"]),
        t_max=float(kv["validity.temperature_max_k"]),
    )
    if not p.t_min < p.t_max:
        raise ContractViolation("invalid thermo validity range")
    boil = antoine_psat(373.15, p)
    if abs(boil - 101325.0) > 0.02 * 101325.0:
        raise ContractViolation(
            f"Antoine parameters fail the boiling-point check: p_sat(373.15 K) = {boil:.1f} Pa"
        )
    T_grid = np.linspace(max(p.t_min, 300.0), min(p.t_max, 450.0), 25)
    for T in T_grid:
        a12 = p.c12 + p.d12 * (T - 273.15)
        a21 = p.c21 + p.d21 * (T - 273.15)
        if not (0.0 < a12 < 1.0 and 0.0 < a21 < 1.0):
            raise ContractViolation("NRTL nonrandomness factor outside (0, 1)")
    return p


def _check_range(T, p: ThermoParams):
    T = np.asarray(T, dtype=float)
    if np.any(T < p.t_min) or np.any(T > p.t_max):
        raise ThermoDomainError(
            f"temperature outside validity range [{p.t_min}, {p.t_max}] K"
        )


def antoine_psat(T, params: ThermoParams):
    """Saturation pressure of water in Pa; strictly increasing in T."""
    _check_range(T, params)
    T = np.asarray(T, dtype=float)
    out = 10.0 ** (params.a1 - params.b1 / (params.c1 + T))
    return float(out) if out.ndim == 0 else out


def nrtl_gamma1(T, x1, params: ThermoParams):
    """Activity coefficient of component 1 from the binary NRTL model."""
    _check_range(T, params)
    T = np.asarray(T, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if np.any(x1 < 0.0) or np.any(x1 > 1.0):
        raise ContractViolation("mole fraction outside [0, 1]")
    x2 = 1.0 - x1
    tau12 = params.a12 + params.b12 / T
    tau21 = params.a21 + params.b21 / T
    alpha12 = params.c12 + params.d12 * (T - 273.15)
    alpha21 = params.c21 + params.d21 * (T - 273.15)
    G12 = np.exp(-alpha12 * tau12)
    G21 = np.exp(-alpha21 * tau21)
    ln_g1 = x2**2 * (
        tau21 * (G21 / (x1 + x2 * G21)) ** 2 + tau12 * G12 / (x2 + x1 * G12) ** 2
    )
    out = np.exp(ln_g1)
    return float(out) if out.ndim == 0 else out
