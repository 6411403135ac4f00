"""Monte Carlo worst-case hedging under time-changed Gaussian and Poisson noises."""

from .ensemble import Ensemble, simulate_ensemble
from .girsanov import ScenarioShift, density_path
from .hedge import Claim, hedge_claim, risk_measure, verify_saddle
from .intensity import CIRIntensity, ConstantIntensity, IntensitySpec, PiecewiseIntensity, TimeGrid
from .market import MarketCoefficients
from .noise import JumpMeasureSpec
from .regression import F, G, markov_basis

__version__ = "0.1.0"

__all__ = [
    "CIRIntensity",
    "Claim",
    "ConstantIntensity",
    "Ensemble",
    "F",
    "G",
    "IntensitySpec",
    "JumpMeasureSpec",
    "MarketCoefficients",
    "PiecewiseIntensity",
    "ScenarioShift",
    "TimeGrid",
    "density_path",
    "hedge_claim",
    "markov_basis",
    "risk_measure",
    "simulate_ensemble",
    "verify_saddle",
]
