from pathlib import Path

from core.exceptions import TrainingDiverged
from core.management.base_command import PacgCommand
from detection.trainer import CHECKPOINT_FILE, train_to_directory
from log_service.events import EVENT_TRAINING_DIVERGED, LogEventType, LogSeverity
from log_service.logger import log_event
from log_service.utils import log_checkpoint, log_epoch


class Command(PacgCommand):
    help = "Trains the detector on a split; writes checkpoint.txt, loss_trace.csv and config.resolved."
    writes_output = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--data', type=str, required=True, help='Training split directory.')
        parser.add_argument('--out', type=str, default=None, help='Run directory (default: config out_dir).')

    def configure(self, config, options):
        if options.get('out'):
            config = config.replace(out_dir=options['out'])
        return config

    def run(self, config, options):
        out_dir = Path(config['out_dir'])
        scenes = self.load_split(options['data'], config)
        run_name = out_dir.name

        def on_epoch(record):
            log_epoch(__name__, run_name, record)
            if options.get('verbosity', 1) > 1:
                self.stdout.write(f"epoch {record.epoch} total {record.total:.6f} lr {record.lr:.6g}")

        try:
            model, history = train_to_directory(
                config.model_config(), config.trainer_config(), scenes, out_dir, on_epoch=on_epoch,
            )
        except TrainingDiverged as e:
            log_event(LogEventType.TRAINING, EVENT_TRAINING_DIVERGED, severity=LogSeverity.ERROR, source=__name__,
                      message=str(e), extra_data={'step': e.step, 'run': run_name})
            raise

        log_checkpoint(__name__, out_dir / CHECKPOINT_FILE, model.parameter_count())
        last = history[-1]
        self.stdout.write(
            f"epochs {len(history)} final total {last.total:.6f} "
            f"(objectness {last.objectness:.6f} classification {last.classification:.6f} box {last.box:.6f})"
        )
        self.stdout.write(self.style.SUCCESS(f"Checkpoint written to {out_dir / CHECKPOINT_FILE}"))
