"""
Base class for pacgnet management commands.

Provides the shared `--config` option, prints the resolved run
configuration, records command lifecycle events and maps pacgnet
exceptions onto the CLI exit codes:

    0  success
    1  verification failure (gradient check, diverged training)
    2  usage, configuration, data or IO error

Subclasses implement `run(config, options)` and, if they accept
overrides on the command line, `configure(config, options)`.
"""

import logging
from pathlib import Path
from typing import Optional

from django.core.management.base import BaseCommand, CommandError

from core.config import RunConfig, load_run_config
from core.exceptions import PacgError, TrainingDiverged, VerificationFailed
from detection.dataset import check_compatible, read_split
from log_service.events import (
    EVENT_COMMAND_COMPLETED,
    EVENT_COMMAND_FAILED,
    EVENT_COMMAND_STARTED,
    EVENT_SPLIT_LOADED,
    LogEventType,
    LogSeverity,
)
from log_service.logger import log_event
from log_service.utils import log_exception

logger = logging.getLogger(__name__)

EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE_ERROR = 2


class PacgCommand(BaseCommand):
    # Subclasses that write artifacts set this and add an --out option.
    writes_output = False

    def add_arguments(self, parser):
        parser.add_argument('--config', type=str, default=None, help='Run configuration file (key=value lines).')

    def default_config_path(self, options: dict) -> Optional[Path]:
        return None

    def configure(self, config: RunConfig, options: dict) -> RunConfig:
        return config

    def run(self, config: RunConfig, options: dict) -> Optional[str]:
        raise NotImplementedError('subclasses of PacgCommand must provide a run() method')

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1]

    def handle(self, *args, **options):
        source = f"{self.__module__}.Command"
        log_event(LogEventType.APPLICATION, EVENT_COMMAND_STARTED, source=source,
                  message=f"{self.command_name} started")
        try:
            config_path = options.get('config') or self.default_config_path(options)
            config = self.configure(load_run_config(config_path), options)
            self.echo_config(config)
            if self.writes_output:
                out_dir = self.prepare_output(config['out_dir'])
                config.write_resolved(out_dir)
            result = self.run(config, options)
        except (TrainingDiverged, VerificationFailed) as e:
            self._failed(source, e, EXIT_VERIFICATION_FAILED)
        except (PacgError, OSError) as e:
            self._failed(source, e, EXIT_USAGE_ERROR)
        except CommandError:
            raise
        except Exception as e:
            log_exception(e, source, message=f"{self.command_name} crashed: {type(e).__name__}: {e}")
            raise
        log_event(LogEventType.APPLICATION, EVENT_COMMAND_COMPLETED, source=source,
                  message=f"{self.command_name} completed")
        return result

    def _failed(self, source: str, exc: Exception, returncode: int):
        log_event(LogEventType.APPLICATION, EVENT_COMMAND_FAILED, severity=LogSeverity.ERROR, source=source,
                  message=str(exc), extra_data={'exception_type': type(exc).__name__, 'returncode': returncode})
        raise CommandError(str(exc), returncode=returncode) from exc

    def load_split(self, directory, config: RunConfig):
        """Read a split and check it against the configured image size and class count."""
        scenes = read_split(directory)
        check_compatible(scenes, config['image_size'], config['num_classes'], directory)
        log_event(LogEventType.DATASET, EVENT_SPLIT_LOADED, source=f"{self.__module__}.Command",
                  message=f"Read {len(scenes)} scenes from {directory}",
                  extra_data={'path': str(directory), 'scenes': len(scenes),
                              'objects': sum(len(scene.objects) for scene in scenes)})
        return scenes

    def echo_config(self, config: RunConfig) -> None:
        self.stdout.write('# resolved config')
        self.stdout.write(config.to_text(), ending='')

    def prepare_output(self, directory) -> Path:
        path = Path(directory)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise CommandError(f"Cannot create output directory {path}: {e}", returncode=EXIT_USAGE_ERROR) from e
        return path
