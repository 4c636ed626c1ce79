"""
Abridged life tables
====================

Build a life table from age-specific mortality rates, read off the summary
indices, and derive the survivorship ratios that drive the cohort-component
projection.
"""

import numpy as np

from hivproj.lifetable import (
    AgeGrid,
    MortalitySchedule,
    build_life_table,
    summary_index,
    survivorship_ratios,
)

# a schedule typical of a high-prevalence setting: heavy infant mortality,
# a pronounced adult hump, Gompertz-style old-age rise
mids = np.concatenate(([0.5, 3.0], np.arange(7.5, 100.0, 5.0), [102.5]))
mx = 0.07 * np.exp(-mids / 1.5) + 5e-4 + 2.2e-5 * np.exp(0.095 * mids)
mx[6:10] *= np.array([2.0, 3.2, 3.4, 2.4])  # ages 25-44
schedule = MortalitySchedule(sex="female", mx=mx)

table = build_life_table(schedule)

labels = AgeGrid.ABRIDGED_22.labels()
print("age     mx        qx        lx        Lx        ex")
for i in range(22):
    print(f"{labels[i]:>6}  {table.schedule.mx[i]:.6f}  {table.qx[i]:.6f}"
          f"  {table.lx[i]:9.0f} {table.Lx[i]:9.0f}  {table.ex[i]:6.2f}")

print()
for index in ("e0", "q5_0", "q45_15", "q35_10"):
    print(f"{index:8s} = {summary_index(table, index):.4f}")

ratios = survivorship_ratios(table)
print("\nfive-year survivorship ratios (last entry pools the open group):")
print(np.array2string(ratios, precision=4))
