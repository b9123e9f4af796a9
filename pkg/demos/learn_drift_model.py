"""Learn the jet-engine drift field from noisy samples and bound the error.

The two drift components are modeled as independent GPs with squared
exponential kernels. After conditioning on 35 noisy measurements we bound
the posterior standard deviation over the whole operating box, which is
the quantity that calibrates the error box used everywhere downstream.
The sample sweep at the end shows the bound contracting as data arrives.
"""

from pathlib import Path

import numpy as np

from gpbarrier import benchmark, gp
from gpbarrier.plots import std_sweep_plot, vector_field_plot

OUT = Path(__file__).resolve().parent / "out"
OUT.mkdir(exist_ok=True)

posterior, data, system, problem = benchmark.benchmark_model()
print(f"conditioned on N={data.n_samples} samples, noise std {data.noise_std}")

for j, kernel in enumerate(posterior.kernels):
    print(f"  output {j + 1}: signal var {kernel.signal_var:.4f}, "
          f"lengthscales {np.round(kernel.lengthscales, 4).tolist()}")

bound = gp.max_std_bound(posterior, problem.state_box, per_dim=201)
print(f"state-space-wide std bound: {np.round(bound.values, 6).tolist()} "
      f"(grid margins {np.round(bound.margins, 6).tolist()})")

# truth is available here, so measure the actual worst error of the mean
grid = problem.state_box.grid(201)
err = np.abs(posterior.mean(grid) - system.drift(grid)).max(axis=0)
print(f"actual worst |mean - drift| on the grid: {np.round(err, 6).tolist()}")

sweep = benchmark.std_bound_sweep(sample_sizes=(5, 10, 20, 35, 50, 100))
print("sample sweep (max std bound):")
for n, values in sweep.items():
    print(f"  N={n:4d}: {values.max():.6f}")

vector_field_plot(posterior, problem, OUT / "drift_field.svg")
std_sweep_plot(sweep, OUT / "std_sweep.svg")
print(f"figures written to {OUT}")
