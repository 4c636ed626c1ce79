"""
HIV prevalence trajectories
===========================

Run the three-compartment epidemic model forward with its decaying
recruitment and transmission parameters, fan it out into a trajectory
sample, re-center the fan on a designated median path, and average the
result into five-year periods.
"""

import numpy as np

from hivproj.prevalence import (
    EppParams,
    aggregate_five_year,
    decay_parameters,
    sample_epp_fan,
    scale_trajectories,
    simulate_epp,
)

params = EppParams(r0=0.20, phi0=0.10, not_at_risk=0.20, susceptible=0.65,
                   infected=0.15, t0=2015, survival_years=14.0)

# the decay assumptions: recruitment halves every 20 years, transmission
# every 30
for year in (2015, 2035, 2045, 2075):
    r, phi = decay_parameters(params, year)
    print(f"{year}: r = {r:.4f}, phi = {phi:.4f}")

years, median_path = simulate_epp(params, 2100)
print(f"\nmedian-model prevalence: {median_path[0]:.1f}% in {years[0]}, "
      f"{median_path[years == 2050][0]:.1f}% in 2050, "
      f"{median_path[-1]:.1f}% in {years[-1]}")

# a 200-trajectory fan from jittered parameters, re-centered on the median
_, raw = sample_epp_fan(params, 2100, n_trajectories=200, master_seed=11,
                        country="BWA")
tset = scale_trajectories("BWA", years, median_path, raw)
lo, mid, hi = np.percentile(tset.samples, [10, 50, 90], axis=0)
print("\nscaled fan at selected years (10%, 50%, 90%):")
for year in (2020, 2050, 2080, 2100):
    i = int(np.nonzero(years == year)[0][0])
    print(f"  {year}: {lo[i]:5.1f}  {mid[i]:5.1f}  {hi[i]:5.1f}")

five = aggregate_five_year(tset, np.arange(2015, 2100, 5))
print("\nfive-year period means (median trajectory):")
print(np.array2string(np.median(five.samples, axis=0), precision=1))

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for k in range(0, 200, 20):
        ax.plot(years, tset.samples[k], color="gray", lw=0.5, alpha=0.6)
    ax.plot(years, mid, color="crimson", lw=2, label="median")
    ax.fill_between(years, lo, hi, color="crimson", alpha=0.15,
                    label="80% band")
    ax.set_xlabel("year")
    ax.set_ylabel("adult HIV prevalence (%)")
    ax.legend()
    fig.tight_layout()
    fig.savefig("demos_prevalence_fan.png", dpi=120)
    print("\nwrote demos_prevalence_fan.png")
except ImportError:
    pass
