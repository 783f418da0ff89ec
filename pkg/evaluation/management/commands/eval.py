from pathlib import Path

from core.config import RESOLVED_FILE
from core.management.base_command import PacgCommand
from detection.model import load_detector
from evaluation.harness import evaluate_scenes, visibility_recall
from evaluation.report import format_recall, format_report
from log_service.events import EVENT_CHECKPOINT_LOADED, EVENT_EVALUATION_FINISHED, LogEventType
from log_service.logger import log_event


class Command(PacgCommand):
    help = "Scores a checkpoint on a split and prints per-class AP50 and mAP50."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--ckpt', type=str, required=True, help='Checkpoint file written by train.')
        parser.add_argument('--data', type=str, required=True, help='Split directory to score.')
        parser.add_argument('--by-visibility', action='store_true',
                            help='Also print confident-detection recall per visibility mode.')

    def default_config_path(self, options):
        path = Path(options['ckpt']).parent / RESOLVED_FILE
        return path if path.is_file() else None

    def run(self, config, options):
        scenes = self.load_split(options['data'], config)
        model = load_detector(config.model_config(), options['ckpt'])
        log_event(LogEventType.TRAINING, EVENT_CHECKPOINT_LOADED, source=__name__,
                  message=f"Loaded {options['ckpt']}", extra_data={'parameters': model.parameter_count()})

        result = evaluate_scenes(model, scenes, config['score_threshold'], config['nms_iou'])
        self.stdout.write(format_report(result), ending='')
        extra = {}
        if options['by_visibility']:
            recall = visibility_recall(model, scenes, nms_iou=config['nms_iou'])
            self.stdout.write(format_recall(recall), ending='')
            extra['recall'] = {mode.value: value for mode, value in recall.items()}
        log_event(LogEventType.EVALUATION, EVENT_EVALUATION_FINISHED, source=__name__,
                  message=f"map50 {result.map50:.4f} on {options['data']}",
                  extra_data={'map50': result.map50, 'per_class': result.per_class,
                              'checkpoint': options['ckpt'], 'data': options['data'], **extra})
