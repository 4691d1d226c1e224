from telelab.sim.arm import ArmConfig, dh_transform, fk, fk_frames, load_arm_config, quat_from_matrix
from telelab.sim.world import (
    SchemaError,
    TaskObject,
    UnreachableStart,
    World,
    WorldSpec,
    apply_cmd_vel,
    apply_gripper,
    apply_joint_cmd,
    evaluate_task,
    load_world,
    load_world_file,
    render_snapshot,
    step,
)
from telelab.sim.lidar import LidarParams, scan_lidar
from telelab.sim.runner import SimRunner

__all__ = [
    "ArmConfig",
    "LidarParams",
    "SchemaError",
    "SimRunner",
    "TaskObject",
    "UnreachableStart",
    "World",
    "WorldSpec",
    "apply_cmd_vel",
    "apply_gripper",
    "apply_joint_cmd",
    "dh_transform",
    "evaluate_task",
    "fk",
    "fk_frames",
    "load_arm_config",
    "load_world",
    "load_world_file",
    "quat_from_matrix",
    "render_snapshot",
    "scan_lidar",
    "step",
]
