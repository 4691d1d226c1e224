from telelab.safety.monitor import (
    AlertEvent,
    Decision,
    EStopState,
    ReleaseRefused,
    SafetyConfig,
    SafetyMonitor,
    SafetyVerdict,
    Watchdog,
    check_cmd_vel,
    check_joint_cmd,
)

__all__ = [
    "AlertEvent",
    "Decision",
    "EStopState",
    "ReleaseRefused",
    "SafetyConfig",
    "SafetyMonitor",
    "SafetyVerdict",
    "Watchdog",
    "check_cmd_vel",
    "check_joint_cmd",
]
