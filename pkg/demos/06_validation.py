"""
Out-of-sample validation
========================

Hold out the most recent period of a synthetic world, recalibrate on the
truncated data, and score the predictive distributions: mean absolute error
of the medians for four mortality indices and coverage of the 80/90/95
percent intervals.
"""

import numpy as np

from hivproj.e0model import McmcSettings
from hivproj.synthetic import synthetic_bundle
from hivproj.validate import HoldoutSpec, run_holdout

bundle, truth = synthetic_bundle(6, master_seed=77, n_trajectories=400)

# score total-population coverage against one independently drawn future
obs_bundle, _ = synthetic_bundle(6, master_seed=77, n_trajectories=2,
                                 trajectory_seed=123)
from hivproj.pipeline import ProjectionSettings, project_all  # noqa: E402

spec = HoldoutSpec(calibration_end=2010, evaluation_period=2010)
mcmc = McmcSettings(chains=2, iterations=6000, burn_in=3000, target_draws=600)

truth_settings = ProjectionSettings(base_year=2010, horizon=2015,
                                    n_trajectories=2, master_seed=5)
futures = project_all(obs_bundle, truth["e0_model"], truth["basis"],
                      truth_settings)
for country, (result, _) in futures.items():
    end = result.pyramid(0, 2015)
    bundle.observed_population[country] = (end.female.copy(), end.male.copy())

result = run_holdout(spec, bundle, master_seed=11, n_trajectories=400,
                     mcmc=mcmc)
print(result.report.text_summary())

print("\npredicted vs observed female e0 for the held-out period:")
for country in result.countries:
    predicted = float(np.median(result.e0_samples[country]))
    observed = result.observed_e0[country]
    print(f"  {country}: median {predicted:5.1f}  observed {observed:5.1f}")
