"""Explicit memory mechanisms built on orthogonal-polynomial history
compression: nonlinear (Volterra) readouts, salience-warped measures,
continuous-address associative memory, multiscale representation, and
forecast-induced predictive memory."""

__version__ = "0.1.0"
