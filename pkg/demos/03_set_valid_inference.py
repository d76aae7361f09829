"""Confidence statements on one simulated sample of 1000 units.

Three routes: the modified projection (a simultaneous region for the slope
and the effect bounds), the perturbed bootstrap (an interval for one bound),
and normal intervals for the nonparametric bounds. Draw counts are kept
small so the script runs in under a minute; raise them for real work.
"""

from panelbounds import (
    BootstrapPlan,
    EffectQuery,
    GridConfig,
    OutcomeBounds,
    StaticDgp,
    SupportIndex,
    cell_frequencies,
    generate,
    modified_projection,
    np_bounds_ci,
    perturbed_bootstrap,
    scalar_beta_grid,
)

n = 1000
data = generate(StaticDgp(2, 0.5, 1.0, "logit"), n, seed=1)
cells = cell_frequencies(data, SupportIndex.full_binary(2))
grid = GridConfig(beta_grid=scalar_beta_grid(0.4, 1.6, 0.05))

region = modified_projection(cells, n, level=0.95, grid=grid, draws=500, seed=1)
betas = region.member_betas[:, 0]
print(f"slope region [{betas.min():.2f}, {betas.max():.2f}] from {region.accepted} of {region.draws} candidates")
for k, (lo, hi) in enumerate(zip(region.effect_lower, region.effect_upper)):
    print(f"  history {k}: effect in [{lo:.4f}, {hi:.4f}]")

plan = BootstrapPlan(R=10, inner_reps=50, seed=1)
pb = perturbed_bootstrap(cells, n, "upper:0", plan, grid)
print(f"upper bound for the never-treated history: {pb.theta_hat:.4f}, interval [{pb.lower:.4f}, {pb.upper:.4f}]")

ci = np_bounds_ci(data, EffectQuery(1, 0), OutcomeBounds(), level=0.95, method="normal")
print(f"nonparametric bounds {ci.estimate[0]:.4f} .. {ci.estimate[1]:.4f}, 95% region [{ci.region[0]:.4f}, {ci.region[1]:.4f}]")
