import json
import uuid
from datetime import datetime
from typing import Any, Dict, List, Optional

import pandas as pd

from hashing.layer import HashingLayer

EVENT_COLUMNS = ["event_id", "timestamp", "run_id", "stage", "event_status", "error_details", "metrics"]


def empty_event_log() -> pd.DataFrame:
    return pd.DataFrame(columns=EVENT_COLUMNS)


def stage_event_log(
    events: pd.DataFrame,
    run_id: str,
    stage: str,
    metrics: Optional[Dict[str, Any]] = None,
    error_details: Optional[str] = None
) -> pd.DataFrame:
    """
    Appends one pipeline-stage event to the run's event log.

    Args:
        events (DataFrame): The event log so far.
        run_id (str): Identifier shared by every event of one pipeline run.
        stage (str): The pipeline node that finished.
        metrics (Dict): Scalars worth keeping about the stage (stored as JSON).
        error_details (str): Failure description; marks the event as FAILURE.

    Returns:
        DataFrame: The event log with the new row appended.
    """
    event_data = {
        "event_id": str(uuid.uuid4()),
        "timestamp": datetime.now(),
        "run_id": run_id,
        "stage": stage,
        "event_status": "FAILURE" if error_details else "SUCCESS",
        "error_details": error_details,
        "metrics": json.dumps(metrics or {}, sort_keys=True, default=float),
    }

    new_row = pd.DataFrame([event_data], columns=EVENT_COLUMNS)
    if events.empty:
        return new_row
    return pd.concat([events, new_row], ignore_index=True)


def loss_curve_log(layers: Dict[str, HashingLayer], fold: Optional[int] = None) -> pd.DataFrame:
    """
    Flattens the per-epoch training loss of every arm into one long frame.

    Args:
        layers (Dict): Trained layers keyed by arm name.
        fold (int): Transfer fold the layers belong to, if any.

    Returns:
        DataFrame: Columns arm, fold, epoch, loss.
    """
    rows: List[Dict[str, Any]] = []
    for arm, layer in layers.items():
        rows += [{"arm": arm, "fold": fold, "epoch": epoch, "loss": loss} for epoch, loss in enumerate(layer.loss_curve)]
    return pd.DataFrame(rows, columns=["arm", "fold", "epoch", "loss"])

