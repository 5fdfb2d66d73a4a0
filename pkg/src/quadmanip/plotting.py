"""SVG figures of desired vs actual signals from a telemetry table."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .simengine import Telemetry  # noqa: E402

# group -> list of (actual column, desired column or None, axis label)
CHANNELS: dict[str, list[tuple[str, str | None, str]]] = {
    "position": [("X", "X_ref", "X [m]"), ("Y", "Y_ref", "Y [m]"), ("Z", "Z_ref", "Z [m]")],
    "attitude": [
        ("phi", "phi_des", "phi [rad]"),
        ("theta", "theta_des", "theta [rad]"),
        ("psi", "psi_ref", "psi [rad]"),
    ],
    "joints": [("theta1", "theta1_ref", "theta1 [rad]"), ("theta2", "theta2_ref", "theta2 [rad]")],
    "end_effector": [
        ("ee_x", "ee_x_ref", "x [m]"),
        ("ee_y", "ee_y_ref", "y [m]"),
        ("ee_z", "ee_z_ref", "z [m]"),
        ("ee_phi", "ee_phi_ref", "phi [rad]"),
        ("ee_theta", "ee_theta_ref", "theta [rad]"),
        ("ee_psi", "ee_psi_ref", "psi [rad]"),
    ],
    "rotors": [(f"omega{i}", None, f"Omega{i} [rad/s]") for i in range(1, 5)],
}

_STYLE = {
    "svg.hashsalt": "quadmanip",
    "svg.fonttype": "path",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 8,
}


def payload_events(tel: Telemetry) -> list[tuple[float, bool]]:
    """``(time, attached_after)`` for every payload flag change."""
    flag = tel.column("payload")
    t = tel.column("t")
    return [(float(t[k]), bool(flag[k] > 0)) for k in np.flatnonzero(np.diff(flag)) + 1]


def plot_group(tel: Telemetry, group: str, path) -> Path:
    if group not in CHANNELS:
        raise KeyError(group)
    rows = CHANNELS[group]
    t = tel.column("t")
    events = payload_events(tel)
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(len(rows), 1, sharex=True, figsize=(7.0, 1.6 * len(rows) + 0.6))
        axes = np.atleast_1d(axes)
        for ax, (act, ref, label) in zip(axes, rows):
            if ref is not None:
                ax.plot(t, tel.column(ref), "--", color="tab:gray", lw=1.0, label="desired")
            ax.plot(t, tel.column(act), color="tab:blue", lw=1.0, label="actual")
            for te, attached in events:
                ax.axvline(te, color="tab:red" if attached else "tab:green", lw=0.8, ls=":")
            ax.set_ylabel(label)
        axes[0].legend(loc="upper right", fontsize=7)
        if events:
            top = axes[0]
            for te, attached in events:
                top.annotate("pick" if attached else "place", (te, 1.0), xycoords=("data", "axes fraction"),
                             xytext=(2, -10), textcoords="offset points", fontsize=7)
        axes[-1].set_xlabel("t [s]")
        fig.suptitle(f"{tel.name}: {group.replace('_', ' ')}")
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path


def plot_telemetry(tel: Telemetry, out_dir, groups=None) -> list[Path]:
    """One SVG per channel group; returns the written paths."""
    groups = list(groups or ("position", "attitude", "joints", "end_effector"))
    unknown = [g for g in groups if g not in CHANNELS]
    if unknown:
        raise KeyError(", ".join(unknown))
    if len(tel) == 0:
        raise ValueError("telemetry has no frames")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [plot_group(tel, g, out / f"{tel.name}_{g}.svg") for g in groups]
