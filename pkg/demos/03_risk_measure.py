"""How much does hedging reduce worst-case risk?

Run:  python demos/03_risk_measure.py

The risk measure takes the largest expected loss over a family of scenarios
built around the worst-case one. We compare an unhedged short call with the
hedged position, and confirm the two algebraic properties that make the
numbers meaningful: scaling the position scales the risk, and adding cash
lowers it one for one.
"""

from tchedge import CIRIntensity, Claim, ConstantIntensity, F, IntensitySpec, JumpMeasureSpec, MarketCoefficients, TimeGrid
from tchedge import hedge_claim, risk_measure, simulate_ensemble
from tchedge.hedge import scenario_family

ens = simulate_ensemble(
    TimeGrid(1.0, 32),
    IntensitySpec(CIRIntensity(2.0, 1.0, 0.3, 1.0), ConstantIntensity(1.0)),
    JumpMeasureSpec((0.1, -0.08), (0.6, 0.4)),
    MarketCoefficients(0.03, 0.07, 0.2, [0.1, -0.08]),
    20_000,
    seed=5,
)
res = hedge_claim(ens, Claim("call", {"strike": 100.0}), F)
family = scenario_family(res.scenario, (0.0, 0.5, 1.0, 1.5), (0.0, 0.2))
disc = ens.discount[:, -1]

short = -disc * res.claim
hedged = disc * (res.wealth[:, -1] - res.claim)
for name, x in (("unhedged short call", short), ("hedged position", hedged)):
    r = risk_measure(x, family, ens)
    print(f"{name:22s} rho_0 = {float(r.value):8.4f}   (worst member {int(r.argmax)} of {len(family)})")

rho = float(risk_measure(hedged, family, ens).value)
print(f"\nscaling by 3:  {float(risk_measure(3 * hedged, family, ens).value):.4f} vs 3 x {rho:.4f} = {3 * rho:.4f}")
print(f"adding 1 cash: {float(risk_measure(hedged + 1, family, ens).value):.4f} vs {rho - 1:.4f}")
