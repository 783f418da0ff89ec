from pathlib import Path

from core.config import RESOLVED_FILE, load_run_config
from core.exceptions import DatasetError
from core.management.base_command import PacgCommand
from detection.dataset import read_ppm
from detection.heatmap import activation_magnitudes, write_heatmaps
from detection.model import load_detector
from log_service.events import EVENT_HEATMAP_WRITTEN, LogEventType
from log_service.logger import log_event

BASELINE_PREFIX = 'baseline_'


def resolved_beside(checkpoint) -> Path:
    return Path(checkpoint).parent / RESOLVED_FILE


class Command(PacgCommand):
    help = "Writes channel-L2 activation heatmaps (PGM + CSV) of the fused P3/P4/P5 maps for one scene."
    writes_output = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--ckpt', type=str, required=True, help='Checkpoint of the model to visualize.')
        parser.add_argument('--scene', nargs=2, required=True, metavar=('RGB', 'IR'), help='RGB and IR PPM files.')
        parser.add_argument('--out', type=str, required=True, help='Directory for the heatmap files.')
        parser.add_argument('--baseline-ckpt', type=str, default=None,
                            help='Optional baseline checkpoint; its maps are written with a baseline_ prefix.')

    def default_config_path(self, options):
        path = resolved_beside(options['ckpt'])
        return path if path.is_file() else None

    def configure(self, config, options):
        return config.replace(out_dir=options['out'])

    def run(self, config, options):
        rgb_path, ir_path = options['scene']
        rgb, ir = read_ppm(rgb_path), read_ppm(ir_path)
        size = config['image_size']
        for path, image in ((rgb_path, rgb), (ir_path, ir)):
            if image.shape[-2:] != (size, size):
                raise DatasetError(f"{path}: image is {image.shape[-2:]}, config expects {size}px")

        out_dir = Path(config['out_dir'])
        model = load_detector(config.model_config(), options['ckpt'])
        written = write_heatmaps(out_dir, activation_magnitudes(model, rgb, ir))

        baseline_ckpt = options.get('baseline_ckpt')
        if baseline_ckpt:
            baseline_config = resolved_beside(baseline_ckpt)
            if baseline_config.is_file():
                baseline = load_run_config(baseline_config)
            else:
                baseline = config.replace(enable_scg=False, enable_pfmg_gate=False)
            baseline_model = load_detector(baseline.model_config(), baseline_ckpt)
            written += write_heatmaps(out_dir, activation_magnitudes(baseline_model, rgb, ir), prefix=BASELINE_PREFIX)

        for path in written:
            self.stdout.write(str(path))
        log_event(LogEventType.VISUALIZATION, EVENT_HEATMAP_WRITTEN, source=__name__,
                  message=f"Wrote {len(written)} heatmap files to {out_dir}",
                  extra_data={'files': [str(p) for p in written], 'checkpoint': options['ckpt'],
                              'baseline_checkpoint': baseline_ckpt})
