"""
Tests for the eval and ablate commands.
"""
from django.core.management.base import CommandError

from core.tests.test_commands import CommandTestCase
from detection.tests.test_commands import TinyRunMixin


class EvalCommandTest(TinyRunMixin, CommandTestCase):
    def setUp(self):
        super().setUp()
        self.data = self.synth(count=2)
        self.run_dir = self.tmp / 'run'
        self.call('train', '--config', self.write_config('epochs=1\n'), '--data', str(self.data), '--out', str(self.run_dir))

    def test_report_uses_resolved_config(self):
        output = self.call('eval', '--ckpt', str(self.run_dir / 'checkpoint.txt'), '--data', str(self.data))
        lines = output.splitlines()
        self.assertIn('widths=4,4,8,8,8', lines)
        report = lines[-3:]
        self.assertRegex(report[0], r'^class 0 ap50 (\d\.\d{4}|n/a)$')
        self.assertRegex(report[1], r'^class 1 ap50 (\d\.\d{4}|n/a)$')
        self.assertRegex(report[2], r'^map50 \d\.\d{4}$')

    def test_by_visibility_appends_recall_lines(self):
        output = self.call('eval', '--ckpt', str(self.run_dir / 'checkpoint.txt'), '--data', str(self.data),
                           '--by-visibility')
        lines = output.splitlines()
        self.assertRegex(lines[-4], r'^map50 \d\.\d{4}$')
        self.assertEqual([line.split()[1] for line in lines[-3:]], ['both', 'rgb-only', 'ir-only'])
        for line in lines[-3:]:
            self.assertRegex(line, r'^recall \S+ (\d\.\d{4}|n/a)$')

    def test_single_modality_checkpoint(self):
        run_dir = self.tmp / 'rgb_run'
        config = self.write_config('epochs=1\nmodality=rgb\nenable_scg=0\nenable_pfmg_gate=0\n', name='rgb.cfg')
        self.call('train', '--config', config, '--data', str(self.data), '--out', str(run_dir))
        output = self.call('eval', '--ckpt', str(run_dir / 'checkpoint.txt'), '--data', str(self.data))
        self.assertIn('modality=rgb', output.splitlines())
        self.assertRegex(output.splitlines()[-1], r'^map50 \d\.\d{4}$')

    def test_single_modality_with_fusion_exits_2(self):
        config = self.write_config('modality=ir\n', name='ir.cfg')
        with self.assertRaises(CommandError) as ctx:
            self.call('train', '--config', config, '--data', str(self.data), '--out', str(self.tmp / 'ir_run'))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_missing_checkpoint_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('eval', '--ckpt', str(self.tmp / 'missing' / 'checkpoint.txt'), '--data', str(self.data))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_architecture_mismatch_exits_2(self):
        config = self.write_config('widths=4,4,8,8,16\n', name='wider.cfg')
        with self.assertRaises(CommandError) as ctx:
            self.call('eval', '--config', config, '--ckpt', str(self.run_dir / 'checkpoint.txt'), '--data', str(self.data))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_empty_split_has_undefined_map(self):
        empty = self.synth('empty', count=0)
        with self.assertRaises(CommandError) as ctx:
            self.call('eval', '--ckpt', str(self.run_dir / 'checkpoint.txt'), '--data', str(empty))
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('undefined', str(ctx.exception))


class AblateCommandTest(TinyRunMixin, CommandTestCase):
    def test_table_written(self):
        data = self.synth(count=2)
        out = self.tmp / 'ablation'
        output = self.call('ablate', '--config', self.write_config('epochs=1\n'), '--data', str(data),
                           '--out', str(out), '--seeds', '3', '4')
        self.assertEqual(len([line for line in output.splitlines() if ' map50 ' in line and ' seed ' in line]), 8)
        lines = (out / 'ablation.csv').read_text().splitlines()
        self.assertEqual(lines[0], 'config,enable_pfmg,enable_scg,map50,params,flops,map50_seed3,map50_seed4')
        self.assertEqual([line.split(',')[0] for line in lines[1:]], ['baseline', '+PFMG', '+SCG', 'full'])
        self.assertIn('\nordering_votes ', output)
        self.assertRegex(output.splitlines()[-1], r'^ordering_votes [0-2]/2$')
        self.assertTrue((out / 'full_seed4' / 'checkpoint.txt').exists())
        self.assertTrue((out / 'config.resolved').exists())

    def test_duplicate_seeds_exit_2(self):
        data = self.synth(count=1)
        with self.assertRaises(CommandError) as ctx:
            self.call('ablate', '--config', self.write_config(), '--data', str(data),
                      '--out', str(self.tmp / 'ablation'), '--seeds', '1', '1')
        self.assertEqual(ctx.exception.returncode, 2)
