"""
Full probabilistic population projection
========================================

Calibrate both models on a synthetic world, then combine per-trajectory
prevalence, life expectancy and fertility into cohort-component population
trajectories to 2100 with quantile summaries.
"""

import numpy as np

from hivproj.e0model import McmcSettings
from hivproj.pipeline import (
    ProjectionSettings,
    calibrate_models,
    project_all,
    quantile_tables,
)
from hivproj.synthetic import synthetic_bundle

bundle, truth = synthetic_bundle(4, master_seed=2025, n_trajectories=300,
                                 epidemic_share=0.5)
print("countries:", ", ".join(bundle.countries()))
print("epidemic: ", ", ".join(sorted(truth["epidemic"])))

mcmc = McmcSettings(chains=2, iterations=6000, burn_in=3000, target_draws=600)
e0_result, basis = calibrate_models(bundle, calibration_end=2015,
                                    master_seed=4, mcmc=mcmc)
print(f"fitted HnA coefficient: {e0_result.model.beta_hna:.5f} "
      f"(truth {truth['beta_hna']:.5f})")

settings = ProjectionSettings(base_year=2015, horizon=2100,
                              n_trajectories=300, master_seed=99)
projections = project_all(bundle, e0_result.model, basis, settings)
tables = quantile_tables(projections)

country = bundle.countries()[0]
total = tables[country]["total_population"]
print(f"\n{country}: total population (millions), median with 95% interval")
print("year     2.5%    median   97.5%")
for i, year in enumerate(total.labels):
    if year % 20 == 15:
        row = total.values[i] / 1e6
        print(f"{year}   {row[0]:7.2f}  {row[2]:7.2f}  {row[4]:7.2f}")

e0_table = tables[country]["e0_female"]
print(f"\n{country}: female e0, median with 80% interval")
for i, year in enumerate(e0_table.labels):
    if year % 20 == 15:
        row = e0_table.values[i]
        print(f"{year}   {row[1]:5.1f}  {row[2]:5.1f}  {row[3]:5.1f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    result, _ = projections[country]
    years = result.pyramid_years
    fan = result.indicators["total_population"] / 1e6
    fig, ax = plt.subplots(figsize=(7, 4))
    for k in range(0, 300, 30):
        ax.plot(years, fan[k], color="gray", lw=0.5, alpha=0.5)
    ax.plot(years, np.median(fan, axis=0), color="crimson", lw=2)
    ax.plot(years, np.percentile(fan, 2.5, axis=0), "r:", lw=1)
    ax.plot(years, np.percentile(fan, 97.5, axis=0), "r:", lw=1)
    ax.set_xlabel("year")
    ax.set_ylabel("total population (millions)")
    ax.set_title(f"{country}: probabilistic projection")
    fig.tight_layout()
    fig.savefig("demos_total_population.png", dpi=120)
    print("\nwrote demos_total_population.png")
except ImportError:
    pass
