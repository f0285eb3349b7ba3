from .faults import FaultSchedule, InvalidScheduleError, SplitEvent, inject_faults

from .fleet import DevicePlan, Fleet, FleetConfig, generate_fleet, render_device
from .profiles import CLASSES, REGULAR, WORKER_DEDICATED, WORKER_ORGANIC, BehaviorProfile, build_profiles

__all__ = [
    "BehaviorProfile",
    "CLASSES",
    "DevicePlan",
    "FaultSchedule",
    "Fleet",
    "FleetConfig",
    "InvalidScheduleError",
    "SplitEvent",
    "REGULAR",
    "WORKER_DEDICATED",
    "WORKER_ORGANIC",
    "build_profiles",
    "generate_fleet",
    "inject_faults",
    "render_device",
]
