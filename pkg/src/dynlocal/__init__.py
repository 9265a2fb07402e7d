"""Local functionals of moving, birth-death point clouds on the flat torus.

Modules
-------
torus       periodic geometry
process     marked Poisson representation and the event-driven simulator
functional  local interaction functionals and their fast evaluation
moments     overlap integrals and closed-form moments
limits      damping integrals, limit covariances and regime classification
estimator   trajectory batches, covariance estimators and distributional checks
cli         the ``dynlocal`` command
"""

__version__ = "0.1.0"
