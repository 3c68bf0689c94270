"""octava: quantitative morphology of en face angiography MIP images."""

__version__ = "0.1.0"
