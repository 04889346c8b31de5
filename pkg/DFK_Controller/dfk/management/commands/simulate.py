"""
Run the closed loop with a designed controller.

Usage:
    python manage.py simulate --controller k1.ctrl --config duffing_k1.json --out k1_run.csv
"""

import numpy as np

from dfk.artifact_services import read_controller, write_key_values, write_run
from dfk.management.pipeline_command import PipelineCommand, sidecar
from dfk.pipeline_services import ExperimentPipeline, load_config, recorded_run


class Command(PipelineCommand):
    help = 'Simulate the DFK closed loop and report RMS tracking errors'

    def add_arguments(self, parser):
        parser.add_argument('--controller', type=str, required=True, help='Controller file written by design')
        self.add_config_argument(parser)
        parser.add_argument('--out', type=str, required=True, help='Run CSV to write')
        self.add_seed_argument(parser)

    def handle(self, *args, **options):
        config = load_config(options['config'])
        controller = read_controller(options['controller'])
        pipeline = ExperimentPipeline(config, options['seed'])

        with recorded_run('simulate', options['config'], options['out'], config) as run:
            result = pipeline.simulate(controller)
            write_run(result, options['out'])
            metrics = {
                'config': config['name'],
                'controller': str(options['controller']),
                'seed': pipeline.seed,
                'T': result.T,
                'max_te': float(np.max(result.te)),
            }
            for i, value in enumerate(result.rms_per_channel, start=1):
                metrics[f"rms_{i}"] = value
            write_key_values(sidecar(options['out'], 'metrics'), metrics)
            run.metrics = metrics

        rms = ', '.join(f"RMS{i + 1} = {value:.4g}" for i, value in enumerate(result.rms_per_channel))
        self.success(f"{result.T} steps written to {options['out']}: {rms}")
