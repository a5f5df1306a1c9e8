"""Boosted UKF: rigid-body simulation, reliability-weighted flow matching and
nonlinear filtering with a virtual-sensor correction."""

from ._core import (  # noqa: F401
    RngStream,
    __version__,
    build_dataset,
    euler_rhs,
    gaussian_summary,
    ot_interpolate,
    preprocess,
    propagate,
    quat_mul,
    run_filter,
    target_velocity,
    theta_map,
    theta_unmap,
    time_encoding,
    torque_at,
)
