"""
Visualization Utilities

"""

import matplotlib.pyplot as plt
import matplotlib.patches as mpatches
import pandas as pd
import numpy as np
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging

from .errors import MissingLandmark
from .feature_engineering import Label
from .frame_records import FrameRecord
from .geometry_core import LEFT_KNEE, RIGHT_KNEE, ROI_TARGET_HEIGHT, ROI_TARGET_WIDTH, fit_bed_model, head_point

logger = logging.getLogger(__name__)

# COCO limbs drawn for the skeleton overlay
SKELETON_EDGES = (
    (5, 7), (7, 9), (6, 8), (8, 10),
    (5, 6), (5, 11), (6, 12), (11, 12),
    (11, 13), (13, 15), (12, 14), (14, 16),
    (0, 1), (0, 2), (1, 3), (2, 4),
)


def plot_scene(
    frame: FrameRecord,
    output_path: str = 'scene.png',
    label: Optional[Label] = None,
    title: Optional[str] = None,
    figsize: Tuple[int, int] = (10, 8),
    dpi: int = 150
):
    """
    Draw a frame with the fitted bed lines, skeleton, head and knees.

    Args:
        frame: Frame to draw
        output_path: Path to save the plot
        label: Optional label shown in the title
        title: Optional title override
        figsize: Figure size
        dpi: DPI for output image
    """
    logger.info(f"Plotting scene for session '{frame.session}' at ts={frame.ts}...")

    fig, ax = plt.subplots(figsize=figsize, dpi=dpi)

    bed = fit_bed_model(frame.bed_contour)
    contour = np.asarray(frame.bed_contour)
    ax.scatter(contour[:, 0], contour[:, 1], s=6, color='gray', alpha=0.6, label='Bed contour')

    corners = np.array(bed.corners + (bed.corners[0],))
    ax.plot(corners[:, 0], corners[:, 1], color='black', linewidth=1, alpha=0.5)
    for line, color, name in (
        (bed.left_line, 'tab:blue', 'Left line'),
        (bed.middle_line, 'tab:gray', 'Middle line'),
        (bed.right_line, 'tab:orange', 'Right line'),
    ):
        ax.plot([line.start.x, line.end.x], [line.start.y, line.end.y], color=color, linewidth=2,
                linestyle='--' if line is bed.middle_line else '-', label=name)

    skeleton = frame.skeleton()
    xy = skeleton.coordinates()
    for a, b in SKELETON_EDGES:
        ax.plot([xy[a, 0], xy[b, 0]], [xy[a, 1], xy[b, 1]], color='tab:purple', linewidth=1.5, alpha=0.7)
    ax.scatter(xy[:, 0], xy[:, 1], s=12, color='tab:purple', zorder=3)

    # Head and knees are the landmarks the side rule and distances use
    landmarks = [xy[LEFT_KNEE], xy[RIGHT_KNEE]]
    try:
        head = head_point(skeleton)
        landmarks.append(np.array(head))
    except MissingLandmark as e:
        logger.warning(f"No head landmark to draw: {e}")
    landmarks = np.array(landmarks)
    ax.scatter(landmarks[:, 0], landmarks[:, 1], s=80, color='tab:green', edgecolors='black', zorder=4,
               label='Head / knees')

    ax.set_xlim(0, max(frame.image_w, ROI_TARGET_WIDTH))
    ax.set_ylim(max(frame.image_h, ROI_TARGET_HEIGHT), 0)
    ax.set_aspect('equal')

    if title is None:
        title = f"Session {frame.session}, ts={frame.ts:g}"
        if label is not None:
            title += f" ({label.value})"
    ax.set_title(title, fontsize=14, fontweight='bold')
    ax.set_xlabel('x (px)', fontsize=12)
    ax.set_ylabel('y (px)', fontsize=12)
    ax.grid(True, alpha=0.3)
    ax.legend(loc='upper right', fontsize=8)

    plt.tight_layout()
    plt.savefig(output_path, dpi=dpi, bbox_inches='tight')
    logger.info(f"Saved scene plot to: {output_path}")
    plt.close()


def plot_ablation_results(
    ablation_df: pd.DataFrame,
    output_path: str = 'ablation.png',
    figsize: Tuple[int, int] = (10, 6),
    dpi: int = 150
):
    """
    Bar chart of mean cross-validation accuracy per feature set.

    Args:
        ablation_df: DataFrame from eval_harness.ablation_frame
        output_path: Path to save the plot
        figsize: Figure size
        dpi: DPI for output image
    """
    logger.info("Plotting ablation results...")

    fig, ax = plt.subplots(figsize=figsize, dpi=dpi)

    positions = np.arange(len(ablation_df))
    means = ablation_df['mean_accuracy'].to_numpy() * 100
    stds = ablation_df['std_accuracy'].to_numpy() * 100
    bars = ax.bar(positions, means, yerr=stds, capsize=5, color=plt.cm.viridis(np.linspace(0.2, 0.8, len(means))),
                  edgecolor='black', alpha=0.85)
    for bar, value in zip(bars, means):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height(), f"{value:.2f}",
                ha='center', va='bottom', fontsize=10)

    ax.set_xticks(positions)
    ax.set_xticklabels([d.replace(' + ', '\n+ ') for d in ablation_df['features']], fontsize=9)
    ax.set_ylim(max(0.0, means.min() - 10), 100.5)
    ax.set_title('Cross-Validation Accuracy by Feature Set', fontsize=14, fontweight='bold')
    ax.set_ylabel('Mean accuracy (%)', fontsize=12)
    ax.grid(True, axis='y', alpha=0.3)

    plt.tight_layout()
    plt.savefig(output_path, dpi=dpi, bbox_inches='tight')
    logger.info(f"Saved ablation chart to: {output_path}")
    plt.close()


def _raised_intervals(alerts: Sequence[Dict[str, Any]], end_ts: float) -> List[Tuple[float, float]]:
    intervals = []
    start = None
    for alert in alerts:
        if alert['kind'] == 'raised':
            start = alert['ts']
        elif start is not None:
            intervals.append((start, alert['ts']))
            start = None
    if start is not None:
        intervals.append((start, end_ts))
    return intervals


def plot_alert_timeline(
    records: Sequence[Dict[str, Any]],
    output_path: str = 'alert_timeline.png',
    threshold: float = 0.5,
    figsize: Tuple[int, int] = (12, 4),
    dpi: int = 150
):
    """
    Plot per-session probabilities over time with raised-alert intervals shaded.

    Args:
        records: Monitor output records (scores, alerts, diagnostics)
        output_path: Path to save the plot
        threshold: Decision threshold drawn as a reference line
        figsize: Figure size per session row
        dpi: DPI for output image
    """
    logger.info("Plotting alert timeline...")

    scores = pd.DataFrame([r for r in records if r['type'] == 'score'])
    if scores.empty:
        logger.warning("No score records to plot")
        return
    sessions = sorted(scores['session'].unique())

    fig, axes = plt.subplots(len(sessions), 1, figsize=(figsize[0], figsize[1] * len(sessions)), dpi=dpi,
                             squeeze=False)

    for ax, session in zip(axes[:, 0], sessions):
        session_scores = scores[scores['session'] == session]
        alerts = [r for r in records if r['type'] == 'alert' and r['session'] == session]

        for start, end in _raised_intervals(alerts, float(session_scores['ts'].max())):
            ax.axvspan(start, end, color='tab:red', alpha=0.15)

        normal = session_scores[~session_scores['degraded']]
        degraded = session_scores[session_scores['degraded']]
        ax.plot(normal['ts'], normal['probability'], marker='o', markersize=3, color='tab:blue', linewidth=1)
        if not degraded.empty:
            ax.scatter(degraded['ts'], degraded['probability'].fillna(0.0), marker='x', color='tab:gray', zorder=3)
        ax.axhline(threshold, color='black', linestyle='--', linewidth=1, alpha=0.6)

        ax.set_ylim(-0.02, 1.02)
        ax.set_title(f"Session {session}", fontsize=12, fontweight='bold')
        ax.set_ylabel('P(at risk)', fontsize=10)
        ax.grid(True, alpha=0.3)

    axes[-1, 0].set_xlabel('Time (s)', fontsize=12)
    handles = [
        mpatches.Patch(color='tab:red', alpha=0.15, label='Alert raised'),
        mpatches.Patch(color='tab:blue', label='Probability'),
        mpatches.Patch(color='tab:gray', label='Degraded frame'),
    ]
    axes[0, 0].legend(handles=handles, loc='upper right', fontsize=8)

    plt.tight_layout()
    plt.savefig(output_path, dpi=dpi, bbox_inches='tight')
    logger.info(f"Saved alert timeline to: {output_path}")
    plt.close()
