"""
Defines log event types (categories) using the LogEventType Enum and the
event name constants used for structured run logging across pacgnet.
"""

from enum import Enum, unique


@unique
class LogEventType(Enum):
    """Categorizes log events, corresponding to log file names."""
    APPLICATION = 'application'       # Command lifecycle, unexpected errors
    DATASET = 'dataset'               # Synthetic split generation and loading
    TRAINING = 'training'             # Epochs, checkpoints, divergence
    EVALUATION = 'evaluation'         # mAP reports
    VERIFICATION = 'verification'     # Gradient checks
    ABLATION = 'ablation'             # Ablation table rows
    VISUALIZATION = 'visualization'   # Heatmap export


@unique
class LogSeverity(Enum):
    """Standard log severity levels."""
    DEBUG = 'DEBUG'
    INFO = 'INFO'
    WARNING = 'WARNING'
    ERROR = 'ERROR'
    CRITICAL = 'CRITICAL'


# Application Events (LogEventType.APPLICATION)
EVENT_COMMAND_STARTED = 'command_started'
EVENT_COMMAND_COMPLETED = 'command_completed'
EVENT_COMMAND_FAILED = 'command_failed'
EVENT_APP_EXCEPTION = 'app_exception'

# Dataset Events (LogEventType.DATASET)
EVENT_SPLIT_WRITTEN = 'split_written'
EVENT_SPLIT_LOADED = 'split_loaded'

# Training Events (LogEventType.TRAINING)
EVENT_EPOCH_COMPLETED = 'epoch_completed'
EVENT_TRAINING_DIVERGED = 'training_diverged'
EVENT_CHECKPOINT_WRITTEN = 'checkpoint_written'
EVENT_CHECKPOINT_LOADED = 'checkpoint_loaded'

# Evaluation Events (LogEventType.EVALUATION)
EVENT_EVALUATION_FINISHED = 'evaluation_finished'

# Verification Events (LogEventType.VERIFICATION)
EVENT_GRADCHECK_COMPONENT = 'gradcheck_component'
EVENT_GRADCHECK_FAILED = 'gradcheck_failed'

# Ablation Events (LogEventType.ABLATION)
EVENT_ABLATION_RUN = 'ablation_run'
EVENT_ABLATION_FINISHED = 'ablation_finished'

# Visualization Events (LogEventType.VISUALIZATION)
EVENT_HEATMAP_WRITTEN = 'heatmap_written'
