from pathlib import Path

from core.management.base_command import PacgCommand
from evaluation.ablation import ABLATION_FILE, format_votes, ordering_votes, run_ablation, write_ablation_table
from log_service.events import EVENT_ABLATION_FINISHED, EVENT_ABLATION_RUN, LogEventType
from log_service.logger import log_event

DEFAULT_SEED_COUNT = 3


class Command(PacgCommand):
    help = "Trains baseline, +PFMG, +SCG and full models per seed and writes ablation.csv."
    writes_output = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--data', type=str, required=True, help='Training split directory.')
        parser.add_argument('--out', type=str, default=None, help='Output directory (default: config out_dir).')
        parser.add_argument('--test-data', type=str, default=None,
                            help='Split to score on (default: the training split).')
        parser.add_argument('--seeds', type=int, nargs='+', default=None,
                            help=f'Seeds to train with (default: {DEFAULT_SEED_COUNT} seeds starting at the config seed).')

    def configure(self, config, options):
        if options.get('out'):
            config = config.replace(out_dir=options['out'])
        return config

    def run(self, config, options):
        out_dir = Path(config['out_dir'])
        seeds = options.get('seeds') or [config['seed'] + k for k in range(DEFAULT_SEED_COUNT)]
        train_scenes = self.load_split(options['data'], config)
        test_path = options.get('test_data') or options['data']
        test_scenes = train_scenes if test_path == options['data'] else self.load_split(test_path, config)

        def on_run(variant, seed, score):
            self.stdout.write(f"{variant.label:<9} seed {seed} map50 {score:.4f}")
            log_event(LogEventType.ABLATION, EVENT_ABLATION_RUN, source=__name__,
                      message=f"{variant.label} seed {seed}: map50 {score:.4f}",
                      extra_data={'config': variant.label, 'seed': seed, 'map50': score})

        rows = run_ablation(
            config.model_config(), config.trainer_config(), train_scenes, test_scenes, seeds, out_dir,
            config['score_threshold'], config['nms_iou'], on_run=on_run,
        )
        table = write_ablation_table(rows, seeds, out_dir / ABLATION_FILE)
        self.stdout.write(table.read_text(encoding='utf-8'), ending='')
        self.stdout.write(format_votes(rows, seeds))
        log_event(LogEventType.ABLATION, EVENT_ABLATION_FINISHED, source=__name__,
                  message=f"Ablation table written to {table}",
                  extra_data={'rows': {row.variant.label: row.map50 for row in rows},
                              'ordering_votes': ordering_votes(rows, seeds), 'seeds': list(seeds)})
