"""
Simulate the configured plant under its excitation and store the dataset.

Usage:
    python manage.py acquire --config duffing_k1.json --out duffing.csv
    python manage.py acquire --config duffing_k1.json --out duffing.csv --seed 7
"""

from dfk.artifact_services import sidecar_path, write_dataset
from dfk.management.pipeline_command import PipelineCommand
from dfk.pipeline_services import ExperimentPipeline, load_config, recorded_run


class Command(PipelineCommand):
    help = 'Acquire an input/state/scheduling dataset from a simulated plant'

    def add_arguments(self, parser):
        self.add_config_argument(parser)
        parser.add_argument('--out', type=str, required=True, help='Dataset CSV to write')
        self.add_seed_argument(parser)

    def handle(self, *args, **options):
        config = load_config(options['config'])
        pipeline = ExperimentPipeline(config, options['seed'])

        with recorded_run('acquire', options['config'], options['out'], config) as run:
            dataset = pipeline.acquire()
            write_dataset(dataset, options['out'])
            run.metrics = {
                'seed': pipeline.seed,
                'L': dataset.L,
                'n_p': dataset.n_p,
                'n_x': dataset.n_x,
                'n_u': dataset.n_u,
                'scheduling': dataset.scheduling,
            }

        self.success(f"Wrote {dataset.L} samples to {options['out']} (metadata in {sidecar_path(options['out'])})")
