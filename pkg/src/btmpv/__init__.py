"""Behind-the-meter PV / native demand disaggregation from hourly net-demand data."""

__version__ = "0.1.0"
