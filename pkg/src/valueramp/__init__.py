"""Value-Ramp: tabular learning over natural-number value functions."""

from valueramp.core import (
    ValueFunction,
    clamp,
    delta,
    preferred_actions,
    state_value,
    update,
)
from valueramp.task import TaskModel, load_graph_task

__all__ = [
    "TaskModel",
    "ValueFunction",
    "clamp",
    "delta",
    "load_graph_task",
    "preferred_actions",
    "state_value",
    "update",
]
