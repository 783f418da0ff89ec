"""
log_service - structured JSON event logging for pacgnet runs.

Commands and library code record run-level events (splits written,
epochs, checkpoints, gradient checks, evaluation reports) as one JSON
object per line under LOGS_DIR/YYYY-MM-DD/<event_type>.log.
"""

from .events import LogEventType, LogSeverity
from .utils import (
    HAS_LOG_SERVICE,
    log_checkpoint,
    log_epoch,
    log_exception,
    log_gradcheck,
)

# Import log_event after the helpers; utils imports it lazily.
from .logger import log_event

__all__ = [
    'log_event',
    'LogEventType',
    'LogSeverity',
    'HAS_LOG_SERVICE',
    'log_exception',
    'log_epoch',
    'log_checkpoint',
    'log_gradcheck',
]
