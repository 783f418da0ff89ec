from pathlib import Path

from core.management.base_command import PacgCommand
from detection.dataset import size_statistics, write_split
from detection.synth import synth_generate
from log_service.events import EVENT_SPLIT_WRITTEN, LogEventType
from log_service.logger import log_event


class Command(PacgCommand):
    help = "Generates a synthetic paired RGB/IR split (PPM images plus labels)."
    writes_output = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--out', type=str, default=None, help='Split directory to write (default: config out_dir).')
        parser.add_argument('--count', type=int, required=True, help='Number of scenes.')

    def configure(self, config, options):
        if options.get('out'):
            config = config.replace(out_dir=options['out'])
        return config

    def run(self, config, options):
        out_dir = Path(config['out_dir'])
        cfg = config.synth_config()
        scenes = synth_generate(cfg, options['count'])
        write_split(out_dir, cfg, scenes)

        dropped = sum(scene.dropped for scene in scenes)
        objects = sum(len(scene.objects) for scene in scenes)
        self.stdout.write(f"scenes {len(scenes)} objects {objects} dropped {dropped}")
        stats = size_statistics(scenes)
        if stats:
            self.stdout.write(f"size min {stats['min']:g} median {stats['median']:g} max {stats['max']:g}")
        log_event(LogEventType.DATASET, EVENT_SPLIT_WRITTEN, source=__name__,
                  message=f"Wrote {len(scenes)} scenes to {out_dir}",
                  extra_data={'path': str(out_dir), 'scenes': len(scenes), 'objects': objects,
                              'dropped': dropped, 'sizes': stats})
        self.stdout.write(self.style.SUCCESS(f"Split written to {out_dir}"))
