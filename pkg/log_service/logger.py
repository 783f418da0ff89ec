"""
`log_event`: append one JSON record per run event under LOGS_DIR.

Layout:

    LOGS_DIR/
        2026-05-02/
            training.log
            verification.log
        failures.log

A record that cannot be written is described in failures.log; the
command that produced it keeps running.
"""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

from django.conf import settings

from .events import LogEventType, LogSeverity

logger = logging.getLogger(__name__)

FAILURES_FILE = 'failures.log'
DAY_FORMAT = '%Y-%m-%d'


def log_event(
    event_type: LogEventType,
    event_name: str,
    severity: LogSeverity = LogSeverity.INFO,
    source: Optional[str] = None,
    message: Optional[str] = None,
    extra_data: Optional[Dict[str, Any]] = None,
) -> None:
    """Append one JSON line to LOGS_DIR/YYYY-MM-DD/<event_type>.log; never raises."""
    from .utils import HAS_LOG_SERVICE

    if not HAS_LOG_SERVICE:
        return

    try:
        entry = _create_log_entry(event_type, event_name, severity, source, message, extra_data)
        path = _get_log_file_path(entry['timestamp'], event_type)
        _append_json(path, entry)
        logger.debug("%s/%s -> %s", event_type.value, event_name, path)
    except Exception as e:
        logger.error("Could not record event %s/%s: %s", event_type.value, event_name, e)
        _log_failure(event_type, event_name, e, {'severity': severity, 'source': source})


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='microseconds').replace('+00:00', 'Z')


def _logs_root() -> Path:
    root = getattr(settings, 'LOGS_DIR', None)
    if not root:
        raise ValueError("LOGS_DIR is not configured")
    return Path(root)


def _append_json(path: Path, record: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'a', encoding='utf-8') as f:
        f.write(json.dumps(record, default=str) + '\n')


def _create_log_entry(
    event_type: LogEventType,
    event_name: str,
    severity: LogSeverity,
    source: Optional[str],
    message: Optional[str],
    extra_data: Optional[Dict[str, Any]],
) -> Dict[str, Any]:
    entry = {
        'timestamp': _utc_now(),
        'event_type': event_type.value,
        'event_name': event_name,
        'severity': severity.value,
        'source': source,
        'message': message,
        'extra_data': extra_data or {},
    }
    # source and message are optional and omitted when unset
    return {key: value for key, value in entry.items() if value is not None}


def _get_log_file_path(timestamp_str: str, event_type: LogEventType) -> Path:
    day = datetime.fromisoformat(timestamp_str.replace('Z', '+00:00')).strftime(DAY_FORMAT)
    return _logs_root() / day / f"{event_type.value}.log"


def _log_failure(
    event_type: LogEventType,
    event_name: str,
    exception: Exception,
    context: Dict[str, Any],
) -> None:
    """Describe a failed write in failures.log without going through log_event again."""
    severity = context.get('severity')
    record = {
        'timestamp': _utc_now(),
        'severity': LogSeverity.CRITICAL.value,
        'source': f"{__name__}._log_failure",
        'message': f"Could not record event {event_type.value}/{event_name}",
        'error_type': type(exception).__name__,
        'error_message': str(exception),
        'original_context': {
            'event_type': event_type.value,
            'event_name': event_name,
            'severity': severity.value if severity else None,
            'source': context.get('source'),
        },
    }
    try:
        _append_json(_logs_root() / FAILURES_FILE, record)
    except Exception as inner:
        logger.critical("failures.log is not writable either (%s); original error: %s", inner, exception)
