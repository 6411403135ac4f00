from tchedge.ensemble import simulate_ensemble
from tchedge.intensity import CIRIntensity, ConstantIntensity, IntensitySpec, TimeGrid
from tchedge.market import MarketCoefficients
from tchedge.noise import JumpMeasureSpec

NU2 = JumpMeasureSpec((0.1, -0.08), (0.6, 0.4))


def small_ensemble(n_paths=4000, n_steps=16, seed=3, gamma=(0.1, -0.08), alpha=0.07, cir=True, lam_H=1.0):
    lam_B = CIRIntensity(2.0, 1.0, 0.3, 1.0) if cir else ConstantIntensity(1.0)
    spec = IntensitySpec(lam_B, ConstantIntensity(lam_H))
    coeffs = MarketCoefficients(0.03, alpha, 0.2, list(gamma))
    return simulate_ensemble(TimeGrid(1.0, n_steps), spec, NU2, coeffs, n_paths, seed)
