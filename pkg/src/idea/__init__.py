"""Intrinsic dimension estimation with a gated-bottleneck autoencoder.

The package has three layers:

* a small reverse-mode autodiff engine over float64 numpy arrays
  (:mod:`idea.engine`) plus the autoencoder built on it
  (:mod:`idea.model`, :mod:`idea.objective`, :mod:`idea.trainer`),
* classical nearest-neighbour / PCA estimators for cross-checking
  (:mod:`idea.baselines`) and synthetic dataset generators
  (:mod:`idea.datasets`),
* velocity-profile analysis tools built on shifted Legendre moments
  (:mod:`idea.flow`) and a command line front end (:mod:`idea.cli`).
"""

__version__ = "0.1.0"

__all__ = [
    "TrainConfig",
    "EstimateReport",
    "estimate_dimension",
    "run_training",
    "__version__",
]


def __getattr__(name):
    # lazy so that `import idea.engine` works without pulling the trainer stack
    if name in ("TrainConfig", "EstimateReport", "estimate_dimension", "run_training"):
        from idea import trainer

        return getattr(trainer, name)
    raise AttributeError(f"module 'idea' has no attribute {name!r}")
