"""
GP regression with composable kernels
=====================================

Fit a noisy sine with an RBF kernel, then let the likelihood pick the
hyperparameters.
"""

import numpy as np

from hybridgp import RBF, GPDataset, NoiseModel, log_marginal_likelihood, posterior, train

rng = np.random.default_rng(0)
t = np.linspace(0, 20, 40)
y = np.sin(t / 2) + rng.normal(0, 0.1, t.size)
data = GPDataset.from_series(t, y)

# a deliberately poor guess first
guess = RBF(scale=1.0, length=0.3)
print("log evidence at the guess:", log_marginal_likelihood(guess, NoiseModel(0.01), data))

# multi-start L-BFGS over log-parameters, noise included
fit = train(guess, data, restarts=3, noise=NoiseModel(0.01), rng=rng)
hp = fit.hyperparameters
print("fitted:", hp.kernel, "noise variance", round(hp.noise.sigma2, 4))
print("log evidence after training:", fit.log_marginal)

# predictions and 2-sigma bands just past the data
query = np.array([20.0, 22.0, 24.0])
post = posterior(hp.kernel, hp.noise, data, query)
for q, m, v in zip(query, post.mean, post.variance):
    print(f"t={q:4.1f}  mean {m:+.3f}  truth {np.sin(q / 2):+.3f}  2sd {2 * np.sqrt(v):.3f}")
