"""
Estimate the priors from a dataset and design the DFK controller.

Usage:
    python manage.py design --dataset duffing.csv --config duffing_k1.json --out k1.ctrl
    python manage.py design --dataset duffing.csv --config duffing_k1.json --out k1.ctrl --lp k1.lp
"""

from pathlib import Path

from django.conf import settings

from dfk.artifact_services import read_dataset, write_controller, write_design_report
from dfk.design_services import assemble_lp, build_problem
from dfk.lp_services import write_lp_text
from dfk.management.pipeline_command import PipelineCommand, sidecar
from dfk.pipeline_services import ExperimentPipeline, load_config, recorded_run, validation_fit


class Command(PipelineCommand):
    help = 'Design a sparse DFK controller from a dataset'

    def add_arguments(self, parser):
        parser.add_argument('--dataset', type=str, required=True, help='Dataset CSV written by acquire')
        self.add_config_argument(parser)
        parser.add_argument('--out', type=str, required=True, help='Controller file to write')
        self.add_seed_argument(parser)
        parser.add_argument('--lp', type=str, help='Also dump each channel program in LP text format')

    def handle(self, *args, **options):
        config = load_config(options['config'])
        dataset = read_dataset(options['dataset'])
        pipeline = ExperimentPipeline(config, options['seed'])

        with recorded_run('design', options['config'], options['out'], config) as run:
            bank, reports, priors = pipeline.design(dataset)
            fit = validation_fit(pipeline, bank, dataset)
            write_controller(bank, options['out'])
            extra = {
                'config': config['name'],
                'dataset': str(options['dataset']),
                'seed': pipeline.seed,
                'grid_density': settings.DFK_CONFIG['grid_density'],
                **fit,
            }
            write_design_report(reports, sidecar(options['out'], 'report'), extra=extra)
            run.metrics = {**extra, 'channels': [report.as_dict() for report in reports]}

            if options['lp']:
                self._dump_programs(options['lp'], dataset, pipeline, reports)

        for report in reports:
            self.stdout.write(
                f"channel {report.channel + 1}: N = {report.N}, selected {report.n_selected}, "
                f"objective {report.objective:.6g}, zeta {report.zeta:.4g}, "
                f"lambda2_s * lambda_S = {report.stability_product:.3g}"
            )
            if not report.lambda_B_available:
                self.stdout.write(self.style.WARNING(
                    f"channel {report.channel + 1}: lambda_B could not be estimated and is reported as 0"
                ))
        self.success(f"Controller written to {options['out']}")

    def _dump_programs(self, path, dataset, pipeline, reports):
        basis = pipeline.build_basis(dataset.n_p)
        max_pairs = pipeline.max_pairs
        for report in reports:
            problem = build_problem(dataset.channel(report.channel), basis, report.delta, report.lambda2_s,
                                    max_pairs=max_pairs)
            target = Path(path) if len(reports) == 1 else Path(f"{path}.{report.channel + 1}")
            target.write_text(write_lp_text(assemble_lp(problem)))
