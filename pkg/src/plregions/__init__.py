"""Linear-region complexity of piecewise-linear networks."""
