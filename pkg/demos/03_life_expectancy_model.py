"""
Life expectancy projection
==========================

Calibrate the hierarchical gain model on a synthetic world with a known
untreated-infection coefficient, then push a fan of HnA paths through the
fitted model to project female e0 with regime-dependent noise.
"""

import numpy as np

from hivproj.e0model import (
    HnaSeries,
    McmcSettings,
    calibrate_e0_model,
    simulate_e0_trajectories,
)
from hivproj.synthetic import synthetic_e0_world

e0_hist, hna_hist, truth = synthetic_e0_world(80, master_seed=3)
settings = McmcSettings(chains=2, iterations=6000, burn_in=3000,
                        target_draws=600)
result = calibrate_e0_model(e0_hist, hna_hist, master_seed=1,
                            settings=settings)

beta_hat = float(np.median(result.beta_draws))
lo, hi = np.quantile(result.beta_draws, [0.05, 0.95])
print(f"true HnA coefficient:   {truth['beta_hna']:.5f}")
print(f"posterior median:       {beta_hat:.5f}  (90% CI {lo:.5f} .. {hi:.5f})")
print(f"epidemic countries:     {len(result.model.epidemic)} of "
      f"{len(result.countries)}")
print(f"epidemic variance factor: {result.model.epidemic_factor:.2f}")
print(f"mean country-block acceptance: {result.acceptance.mean():.2f}")

# project one epidemic country forward under a declining-prevalence path
country = sorted(result.model.epidemic)[0]
starts = np.arange(2010, 2105, 5)
hiv = np.clip(18.0 * np.exp(-(starts - 2010) / 60.0), 0.0, 99.0)
art = np.clip(60.0 + (starts - 2010) * 0.4, 0.0, 95.0)
paths = [HnaSeries(country=country, period_starts=starts, hiv=hiv, art=art)
         for _ in range(500)]
e0_start = e0_hist[country][1][-1]
fan = simulate_e0_trajectories(result.model, country, paths, e0_start,
                               master_seed=7)

print(f"\n{country}: e0 fan from {e0_start:.1f} years in 2010")
print("period   10%    50%    90%")
for j, period in enumerate(fan.period_starts):
    if period % 20 == 15:
        q10, q50, q90 = np.percentile(fan.e0[:, j], [10, 50, 90])
        print(f"{period}  {q10:5.1f}  {q50:5.1f}  {q90:5.1f}")
