from telelab.gateway.sessions import (
    Expired,
    Gateway,
    GatewayConfig,
    LatencyProfile,
    OutsideWindow,
    PermissionDenied,
    PermissionProfile,
    Session,
    SlotNotBooked,
    TestbedBusy,
)
from telelab.gateway.delay import DelayLine

__all__ = [
    "DelayLine",
    "Expired",
    "Gateway",
    "GatewayConfig",
    "LatencyProfile",
    "OutsideWindow",
    "PermissionDenied",
    "PermissionProfile",
    "Session",
    "SlotNotBooked",
    "TestbedBusy",
]
