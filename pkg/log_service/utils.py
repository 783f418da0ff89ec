"""
Shortcuts for the events every pacgnet command emits (exceptions, epochs,
checkpoints, gradient checks). All of them go through `_emit`, which does
nothing when LOGS_DIR is unset.
"""

import logging
import traceback
from typing import Any, Dict, Optional

from django.conf import settings

from .events import (
    EVENT_APP_EXCEPTION,
    EVENT_CHECKPOINT_WRITTEN,
    EVENT_EPOCH_COMPLETED,
    EVENT_GRADCHECK_COMPONENT,
    LogEventType,
    LogSeverity,
)

_util_logger = logging.getLogger(__name__)

HAS_LOG_SERVICE = bool(getattr(settings, 'LOGS_DIR', None))

if not HAS_LOG_SERVICE:
    _util_logger.warning("LOGS_DIR is not set; run events will not be recorded.")


def _emit(event_type: LogEventType, event_name: str, **fields) -> None:
    if not HAS_LOG_SERVICE:
        return
    # imported lazily: logger reads HAS_LOG_SERVICE from this module
    from .logger import log_event
    log_event(event_type, event_name, **fields)


def log_exception(
    exc: Exception,
    source: str,
    message: Optional[str] = None,
    severity: LogSeverity = LogSeverity.ERROR,
    extra_data: Optional[Dict[str, Any]] = None,
) -> None:
    """Record an exception with its formatted traceback as an application event."""
    details = {
        'exception_type': type(exc).__name__,
        'exception_args': getattr(exc, 'args', None),
        'traceback': traceback.format_exc(),
        **(extra_data or {}),
    }
    _emit(
        LogEventType.APPLICATION,
        EVENT_APP_EXCEPTION,
        severity=severity,
        source=source,
        message=message or f"{type(exc).__name__}: {exc}",
        extra_data=details,
    )


def log_epoch(source: str, run: str, record) -> None:
    """One loss-trace row of a training run."""
    _emit(
        LogEventType.TRAINING,
        EVENT_EPOCH_COMPLETED,
        severity=LogSeverity.DEBUG,
        source=source,
        message=f"{run}: epoch {record.epoch} total loss {record.total:.6f}",
        extra_data={
            'run': run,
            'epoch': record.epoch,
            'total': record.total,
            'objectness': record.objectness,
            'classification': record.classification,
            'box': record.box,
            'lr': record.lr,
        },
    )


def log_checkpoint(source: str, path, parameter_count: int) -> None:
    _emit(
        LogEventType.TRAINING,
        EVENT_CHECKPOINT_WRITTEN,
        source=source,
        message=f"Checkpoint written to {path}",
        extra_data={'path': str(path), 'parameters': parameter_count},
    )


def log_gradcheck(source: str, result) -> None:
    passed = result.passed
    _emit(
        LogEventType.VERIFICATION,
        EVENT_GRADCHECK_COMPONENT,
        severity=LogSeverity.INFO if passed else LogSeverity.ERROR,
        source=source,
        message=f"{result.component}: worst relative error {result.worst_error:.3e}",
        extra_data={
            'component': result.component,
            'worst_error': result.worst_error,
            'checked': result.checked,
            'tolerance': result.tolerance,
            'worst_binding': result.worst_binding,
            'passed': passed,
        },
    )
