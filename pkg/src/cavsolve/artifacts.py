"""Reading and writing run artifacts.

Tables go through pandas as CSV, the run summary is JSON. Every file is first
written to a hidden sibling and then moved over the target, so a reader never
sees a half-written artifact.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from cavsolve.errors import ReplayError

if TYPE_CHECKING:
    from cavsolve.auglag import IterationRecord
    from cavsolve.fem import DeformationField
    from cavsolve.flow import FlowDiagnostics

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ["j", "c", "E_pen", "E_raw", "mu", "eta", "flow_steps", "inner_converged"]
REPLAY_COLUMNS = ["eps", "j", "c", "mu", "eta"]


def _temporary(path: Path) -> Path:
    return path.with_name(f".{path.name}.tmp")


def atomic_write_text(path: Path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary sibling file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = _temporary(path)
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
    return path


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    """Write a DataFrame without its index, atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = _temporary(path)
    frame.to_csv(tmp, index=False)
    tmp.replace(path)
    return path


def eps_tag(eps: float) -> str:
    """File-name form of a hole radius, e.g. 0.00625 -> '0.00625'."""
    return f"{eps:g}"


def records_frame(records: Iterable[IterationRecord]) -> pd.DataFrame:
    """Convergence table of one eps as a DataFrame with ``TABLE_COLUMNS``."""
    rows = [
        {
            "j": r.j,
            "c": r.c,
            "E_pen": r.e_pen,
            "E_raw": r.e_raw,
            "mu": r.mu,
            "eta": r.eta,
            "flow_steps": r.flow_steps,
            "inner_converged": r.inner_converged,
        }
        for r in records
    ]
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def write_table(records: Sequence[IterationRecord], out_dir: Path, eps: float) -> Path:
    """Write ``table_eps_<eps>.csv``."""
    return write_csv(records_frame(records), Path(out_dir) / f"table_eps_{eps_tag(eps)}.csv")


def write_solution(field: DeformationField, out_dir: Path, eps: float) -> Path:
    """Write the nodal deformation as ``solution_eps_<eps>.csv``."""
    mesh = field.mesh
    frame = pd.DataFrame(
        {
            "node_id": np.arange(mesh.n_nodes),
            "x": mesh.nodes[:, 0],
            "y": mesh.nodes[:, 1],
            "ux": field.values[:, 0],
            "uy": field.values[:, 1],
        }
    )
    return write_csv(frame, Path(out_dir) / f"solution_eps_{eps_tag(eps)}.csv")


def write_flow_trace(
    trace: Sequence[tuple[int, FlowDiagnostics]], out_dir: Path, eps: float
) -> Path:
    """Write the accepted flow steps of one eps, tagged with their outer index j."""
    frame = pd.DataFrame(
        [
            {
                "j": j,
                "step": diag.step,
                "dt": diag.dt,
                "energy": diag.energy,
                "c": diag.c,
                "grad_norm": diag.grad_norm,
            }
            for j, diag in trace
        ],
        columns=["j", "step", "dt", "energy", "c", "grad_norm"],
    )
    return write_csv(frame, Path(out_dir) / f"flow_eps_{eps_tag(eps)}.csv")


def write_summary(summary: dict[str, Any], out_dir: Path) -> Path:
    """Write ``summary.json``."""
    text = json.dumps(summary, indent=2, allow_nan=True)
    return atomic_write_text(Path(out_dir) / "summary.json", text + "\n")


def read_table(path: Path) -> list[dict[str, float]]:
    """Read a convergence table with at least the columns eps, j, c, mu, eta.

    Returns:
        Rows in file order as dicts of floats (``j`` as int).

    Raises:
        ReplayError: if the file is missing, empty, lacks a column or holds
            non-numeric values.
    """
    path = Path(path)
    if not path.exists():
        raise ReplayError(f"table not found: {path}")
    try:
        frame = pd.read_csv(path, comment="#")
    except pd.errors.EmptyDataError as e:
        raise ReplayError(f"table is empty: {path}") from e
    frame.columns = [str(col).strip() for col in frame.columns]
    missing = [col for col in REPLAY_COLUMNS if col not in frame.columns]
    if missing:
        raise ReplayError(f"{path.name}: missing columns {missing}")
    if frame.empty:
        raise ReplayError(f"table is empty: {path}")
    try:
        numeric = frame[REPLAY_COLUMNS].apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as e:
        raise ReplayError(f"{path.name}: non-numeric entry ({e})") from e
    if numeric.isna().any().any():
        raise ReplayError(f"{path.name}: blank entries in {REPLAY_COLUMNS}")
    numeric["j"] = numeric["j"].astype(int)
    logger.debug("read %d table rows from %s", len(numeric), path)
    return numeric.to_dict(orient="records")
