from .scenario import (
    DEFAULT_AZIMUTH_MIX,
    ScenarioConfig,
    build_panel,
    customer_scale,
    fleet,
    pvwatts_surrogate,
    scenario_clouds,
    simulate_native_load,
    simulate_pv,
    training_clouds,
)
from .solar import SolarModel
from .weather import CloudField, CloudParams, simulate_clouds

__all__ = [
    "DEFAULT_AZIMUTH_MIX",
    "CloudField",
    "CloudParams",
    "ScenarioConfig",
    "SolarModel",
    "build_panel",
    "customer_scale",
    "fleet",
    "pvwatts_surrogate",
    "scenario_clouds",
    "simulate_clouds",
    "simulate_native_load",
    "simulate_pv",
    "training_clouds",
]
