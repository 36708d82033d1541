"""Perturbed gradient descent with structured covariance noise.

Core modules: ``quadratic`` (test problems and step schedules), ``covariance``
(noise matrices), ``network`` and ``fisher`` (per-example gradients and Fisher
estimators), ``optimizer`` (the perturbed update and training loops),
``diagnostics`` and ``stability``. ``harness`` holds data, config, CSV and SVG
plumbing; ``cli`` runs the experiment suites.
"""

__version__ = "0.1.0"
