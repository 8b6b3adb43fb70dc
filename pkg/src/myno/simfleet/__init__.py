"""Simulated device fleet and the desk-scale experiment harness."""

from myno.simfleet.clock import Clock, ManualClock, ScaledClock, SystemClock
from myno.simfleet.device import (
    DEFAULT_INTERVALS,
    EventSchedule,
    Outbound,
    SimDevice,
    UnknownSensor,
)
from myno.simfleet.fleet import DeviceRunner, Fleet
from myno.simfleet.experiment import ExperimentReport, ExperimentSpec, run_experiment

__all__ = [
    "Clock",
    "DEFAULT_INTERVALS",
    "DeviceRunner",
    "EventSchedule",
    "ExperimentReport",
    "ExperimentSpec",
    "Fleet",
    "ManualClock",
    "Outbound",
    "ScaledClock",
    "SimDevice",
    "SystemClock",
    "UnknownSensor",
    "run_experiment",
]
